"""Descriptor pipelines, kernels, leave-one-out model selection and metrics."""
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import covest, imageio, localfeat, spd, wavelets
from .svm import svm_train

DEFAULT_C_GRID = (1.0, 10.0, 100.0, 1000.0, 10000.0, 100000.0)


# -- metrics -----------------------------------------------------------------

@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class Metrics:
    """Sensitivity/specificity are ``None`` when their denominator is empty."""

    sensitivity: float | None
    specificity: float | None
    accuracy: float


def confusion_counts(y_true, y_pred, positive=1):
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    pos_t = y_true == positive
    pos_p = y_pred == positive
    return ConfusionCounts(
        tp=int(np.sum(pos_t & pos_p)),
        fp=int(np.sum(~pos_t & pos_p)),
        tn=int(np.sum(~pos_t & ~pos_p)),
        fn=int(np.sum(pos_t & ~pos_p)),
    )


def confusion_metrics(c):
    """Sn = TP/(TP+FN), Sp = TN/(FP+TN), accuracy = (TP+TN)/total."""
    counts = (c.tp, c.fp, c.tn, c.fn)
    if any(v < 0 for v in counts):
        raise ValueError("confusion counts must be nonnegative")
    if c.total == 0:
        raise ValueError("confusion counts are all zero")
    sn = c.tp / (c.tp + c.fn) if c.tp + c.fn > 0 else None
    sp = c.tn / (c.fp + c.tn) if c.fp + c.tn > 0 else None
    return Metrics(sensitivity=sn, specificity=sp, accuracy=(c.tp + c.tn) / c.total)


# -- pipelines ---------------------------------------------------------------

@dataclass(frozen=True)
class PipelineSpec:
    """One descriptor pipeline and the kernel used on its output.

    ``scale`` rescales the input by a factor; ``size`` resizes to a fixed
    ``(width, height)``; with neither the raw image is used.
    """

    name: str
    feature: str
    estimator: str | None
    kernel: str
    kernel_ref: str | None
    scale: float | None = None
    size: tuple | None = None
    mcd: covest.McdConfig = field(default_factory=covest.McdConfig)
    gabor_wavelength_ratio: float = 1.0

    @property
    def kernel_spec(self):
        if self.kernel == "logeuclidean":
            return f"logeuclidean:{self.kernel_ref}"
        return "linear:zscore"

    def input_size(self, shape):
        """Image size (width, height) the features are computed at."""
        h, w = shape
        if self.size is not None:
            return tuple(self.size)
        if self.scale is not None:
            return (max(2, int(round(w * self.scale))), max(2, int(round(h * self.scale))))
        return (w, h)


PIPELINES = {
    "cov-grad": PipelineSpec(
        name="cov-grad", feature="gradient", estimator="mcd",
        kernel="logeuclidean", kernel_ref="identity", scale=1 / 8,
    ),
    "cov-gabor": PipelineSpec(
        name="cov-gabor", feature="gabor", estimator="empirical",
        kernel="logeuclidean", kernel_ref="riemannian-mean",
    ),
    "marginal-haar": PipelineSpec(
        name="marginal-haar", feature="haar", estimator=None,
        kernel="linear", kernel_ref=None, size=(128, 128),
    ),
}


def pipeline_spec(name, **overrides):
    if name not in PIPELINES:
        raise ValueError(f"unknown pipeline {name!r}; choose from {sorted(PIPELINES)}")
    return replace(PIPELINES[name], **overrides)


def run_pipeline(spec, img):
    """Descriptor of one image: an SPD matrix or a marginal vector."""
    img = np.asarray(img, dtype=float)
    w, h = spec.input_size(img.shape)
    if (h, w) != img.shape:
        img = imageio.resize(img, w, h)
    if spec.feature == "haar":
        return wavelets.marginals_2d(img)
    if spec.feature == "gradient":
        feats = localfeat.gradient_features(img)
    elif spec.feature == "gabor":
        feats = localfeat.gabor_features(
            img, localfeat.default_gabor_bank(spec.gabor_wavelength_ratio)
        )
    else:
        raise ValueError(f"unknown feature {spec.feature!r}")
    obs = covest.flatten(feats)
    if spec.estimator == "mcd":
        return covest.fast_mcd(obs, spec.mcd)
    if spec.estimator == "empirical":
        return covest.empirical_covariance(obs)
    raise ValueError(f"unknown estimator {spec.estimator!r}")


# -- kernels -----------------------------------------------------------------

@dataclass
class FittedKernel:
    """Kernel with its training-set state frozen (reference point or z-score)."""

    kind: str
    ref: spd.KernelRef | None = None
    zscore: wavelets.ZScoreStats | None = None

    def _features(self, descs):
        descs = np.asarray(descs, dtype=float)
        if self.kind == "logeuclidean":
            return spd.normalized_tangent_features(descs, self.ref)
        z = wavelets.zscore_apply(self.zscore, descs)
        return z, np.zeros(z.shape[0], dtype=bool)

    def __call__(self, a, b=None):
        fa, da = self._features(a)
        if b is None:
            k = spd.cross_kernel(fa, da, fa, da)
            iu = np.triu_indices(k.shape[0], 1)
            k[(iu[1], iu[0])] = k[iu]
            return k
        fb, db = self._features(b)
        return spd.cross_kernel(fa, da, fb, db)


def fit_kernel(spec, train_descs):
    train_descs = np.asarray(train_descs, dtype=float)
    if spec.kernel == "logeuclidean":
        return FittedKernel("logeuclidean", ref=spd.KernelRef.fit(spec.kernel_ref, train_descs))
    if spec.kernel == "linear":
        return FittedKernel("linear", zscore=wavelets.zscore_fit(train_descs))
    raise ValueError(f"unknown kernel {spec.kernel!r}")


# -- leave-one-out -----------------------------------------------------------

@dataclass
class LooReport:
    per_c: dict
    best_c: float
    fold_predictions: np.ndarray
    fold_decisions: np.ndarray
    validation_accuracy: float
    labels: np.ndarray
    predictions_by_c: dict = field(repr=False, default_factory=dict)
    decisions_by_c: dict = field(repr=False, default_factory=dict)

    @property
    def loo_accuracy(self):
        return self.per_c[self.best_c]

    def counts(self, positive=1):
        return confusion_counts(self.labels, self.fold_predictions, positive)


def _fold(args):
    i, descs, labels, spec, c_grid, tol = args
    train = np.arange(labels.size) != i
    y_train = labels[train]
    if np.unique(y_train).size < 2:
        # untrainable fold: counted as an error at every C
        return [(-labels[i], math.nan) for _ in c_grid]
    kern = fit_kernel(spec, descs[train])
    k_train = kern(descs[train])
    k_test = kern(descs[i : i + 1], descs[train])[0]
    out = []
    for c in c_grid:
        model = svm_train(k_train, y_train, c, tol=tol, kernel_spec=spec.kernel_spec)
        dec = float(model.decision(k_test))
        out.append((1 if dec >= 0 else -1, dec))
    return out


def loo_cv(descriptors, labels, spec, c_grid=DEFAULT_C_GRID, tol=1e-3, jobs=1):
    """Leave-one-out accuracy for every C, with per-fold kernel fitting.

    The kernel reference (Riemannian mean) or z-score statistics are fitted
    on the n - 1 training samples of each fold only. The best C maximizes
    LOO accuracy, ties going to the smaller C. ``validation_accuracy`` is
    the training-set accuracy of a model refitted on all samples at the
    best C.
    """
    descs = np.asarray(descriptors, dtype=float)
    y = np.asarray(labels).astype(int)
    n = y.size
    if n < 3 or np.unique(y).size < 2:
        raise ValueError("LOO needs at least 3 samples and both classes")
    if not np.all(np.isin(y, (-1, 1))):
        raise ValueError("labels must be -1/+1")
    c_grid = [float(c) for c in c_grid]
    if not c_grid or any(c <= 0 for c in c_grid):
        raise ValueError("C grid must be nonempty and positive")

    tasks = [(i, descs, y, spec, c_grid, tol) for i in range(n)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            folds = list(pool.map(_fold, tasks))
    else:
        folds = [_fold(t) for t in tasks]

    preds = {c: np.array([folds[i][k][0] for i in range(n)]) for k, c in enumerate(c_grid)}
    decs = {c: np.array([folds[i][k][1] for i in range(n)]) for k, c in enumerate(c_grid)}
    per_c = {c: float(np.mean(preds[c] == y)) for c in c_grid}
    top = max(per_c.values())
    best_c = min(c for c in c_grid if per_c[c] == top)

    kern = fit_kernel(spec, descs)
    model = svm_train(kern(descs), y, best_c, tol=tol, kernel_spec=spec.kernel_spec)
    train_pred = model.predict(kern(descs, descs))
    return LooReport(
        per_c=per_c,
        best_c=best_c,
        fold_predictions=preds[best_c],
        fold_decisions=decs[best_c],
        validation_accuracy=float(np.mean(train_pred == y)),
        labels=y,
        predictions_by_c=preds,
        decisions_by_c=decs,
    )


# -- report files ------------------------------------------------------------

_KERNEL_NAMES = {"logeuclidean": "LogEuclidean", "linear": "linear"}


def _fmt(v):
    return "undefined" if v is None else f"{v:.6f}"


def format_report(report, spec, image_size):
    """Text table with the feature, image size, kernel, validation and LOO rows,
    followed by one row per C."""
    metrics = confusion_metrics(report.counts())
    c = report.counts()
    rows = [
        ("feature", spec.name),
        ("image size", f"{image_size[0]}x{image_size[1]}"),
        ("kernel type", _KERNEL_NAMES[spec.kernel]),
        ("kernel parameter", spec.kernel_ref or "-"),
        ("validation", f"{report.validation_accuracy:.6f}"),
        ("LOO accuracy", f"{report.loo_accuracy:.6f}"),
        ("best C", f"{report.best_c:g}"),
        ("TP FP TN FN", f"{c.tp} {c.fp} {c.tn} {c.fn}"),
        ("Sn", _fmt(metrics.sensitivity)),
        ("Sp", _fmt(metrics.specificity)),
    ]
    lines = [f"{k:<18}{v}" for k, v in rows]
    lines.append("")
    lines.append(f"{'C':<18}LOO accuracy")
    lines += [f"{c:<18g}{acc:.6f}" for c, acc in report.per_c.items()]
    return "\n".join(lines) + "\n"


def write_report(path, report, spec, image_size):
    Path(path).write_text(format_report(report, spec, image_size))


def format_predictions(ids, labels, preds, decisions):
    lines = []
    for image_id, t, p, d in zip(ids, labels, preds, decisions):
        t_str = "-" if t is None or t == 0 else f"{int(t):+d}"
        lines.append(f"{image_id} {t_str} {int(p):+d} {d:.17g}")
    return "".join(ln + "\n" for ln in lines)


# -- synthetic textures ------------------------------------------------------

def synth_texture(class_id, side=256, seed=0):
    """Gaussian random field standing in for a radiograph texture.

    Class 0 has power spectrum ~ 1/f^1.5; class 1 ~ 1/f^2.5 and is
    stretched 1.3x along x. The field is rescaled to [0, 1].
    """
    if class_id not in (0, 1):
        raise ValueError("class_id must be 0 or 1")
    if side < 64 or side & (side - 1):
        raise ValueError("side must be a power of two >= 64")
    rng = np.random.default_rng(seed)
    noise = np.fft.fft2(rng.standard_normal((side, side)))
    fy = np.fft.fftfreq(side)[:, None]
    fx = np.fft.fftfreq(side)[None, :]
    beta, stretch = (1.5, 1.0) if class_id == 0 else (2.5, 1.3)
    f = np.hypot(stretch * fx, fy)
    f[0, 0] = 1.0
    amp = f ** (-beta / 2)
    amp[0, 0] = 0.0
    img = np.real(np.fft.ifft2(noise * amp))
    lo, hi = img.min(), img.max()
    return (img - lo) / (hi - lo)


def synth_dataset(n_per_class=20, side=256, seed=0):
    """Balanced synthetic set; returns ``(ids, images, labels)`` with class 1 as +1."""
    ids, images, labels = [], [], []
    for cls in (0, 1):
        for k in range(n_per_class):
            ids.append(f"c{cls}_{k:03d}")
            images.append(synth_texture(cls, side, seed=[seed, cls, k]))
            labels.append(1 if cls == 1 else -1)
    return ids, images, np.array(labels)
