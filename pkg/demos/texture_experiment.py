"""Leave-one-out comparison of the three pipelines on synthetic textures.

Equivalent CLI session::

    texcov synth --out data --n-per-class 20
    texcov loo --manifest data/manifest.csv --cache data/cache --pipeline cov-grad --out runs/grad
"""
import sys
import time

from texcov import evaluation

n_per_class = int(sys.argv[1]) if len(sys.argv) > 1 else 10
ids, images, labels = evaluation.synth_dataset(n_per_class, side=256, seed=0)
print(f"{len(ids)} images, {n_per_class} per class")

for name in ("marginal-haar", "cov-grad", "cov-gabor"):
    spec = evaluation.pipeline_spec(name)
    t0 = time.perf_counter()
    descriptors = [evaluation.run_pipeline(spec, img) for img in images]
    t1 = time.perf_counter()
    report = evaluation.loo_cv(descriptors, labels, spec)
    t2 = time.perf_counter()
    print(f"\n== {name}  (features {t1 - t0:.1f}s, LOO {t2 - t1:.1f}s)")
    print(evaluation.format_report(report, spec, spec.input_size(images[0].shape)), end="")
