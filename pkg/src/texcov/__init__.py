"""Texture classification with region covariance descriptors on the SPD
manifold and Haar wavelet marginals, using a precomputed-kernel SVM."""

from .covest import McdConfig, empirical_covariance, fast_mcd, flatten
from .evaluation import (
    PIPELINES,
    ConfusionCounts,
    confusion_metrics,
    loo_cv,
    pipeline_spec,
    run_pipeline,
    synth_dataset,
    synth_texture,
)
from .spd import (
    KernelRef,
    gram_matrix,
    logeuclidean_kernel,
    riemannian_distance,
    riemannian_mean,
)
from .svm import TrainedSvm, svm_train
from .wavelets import marginals_1d, marginals_2d

__version__ = "0.1.0"
