"""Orthonormal Haar decompositions and wavelet marginal features.

Scale 1 is the finest detail band. Marginal vectors list the J detail
scales from finest to coarsest followed by the approximation band, so
they have J + 1 entries for an input of side ``2**J``.
"""
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError

SQRT2 = np.sqrt(2.0)
STD_FLOOR = 1e-12


def _levels(n):
    j = int(n).bit_length() - 1
    if n < 2 or (1 << j) != n:
        raise ValueError(f"length {n} is not a power of two >= 2")
    return j


@dataclass
class WaveletPyramid:
    """Haar coefficients.

    ``details[s - 1]`` holds scale ``s``: a 1D array for signals, or a tuple
    of three 2D arrays (horizontal, vertical, diagonal) for images.
    """

    details: list
    approx: np.ndarray

    @property
    def levels(self):
        return len(self.details)

    def coefficient_count(self):
        total = self.approx.size
        for band in self.details:
            total += sum(b.size for b in band) if isinstance(band, tuple) else band.size
        return total

    def energy(self):
        total = float(np.sum(self.approx**2))
        for band in self.details:
            parts = band if isinstance(band, tuple) else (band,)
            total += sum(float(np.sum(b**2)) for b in parts)
        return total


def haar_dwt_1d(x):
    """Full-depth orthonormal Haar analysis of a dyadic-length signal."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a 1D signal")
    j = _levels(x.size)
    details = []
    a = x
    for _ in range(j):
        even, odd = a[0::2], a[1::2]
        details.append((even - odd) / SQRT2)
        a = (even + odd) / SQRT2
    return WaveletPyramid(details, a)


def haar_idwt_1d(pyr):
    a = pyr.approx
    for det in reversed(pyr.details):
        out = np.empty(2 * a.size)
        out[0::2] = (a + det) / SQRT2
        out[1::2] = (a - det) / SQRT2
        a = out
    return a


def _split_rows(a):
    return (a[:, 0::2] + a[:, 1::2]) / SQRT2, (a[:, 0::2] - a[:, 1::2]) / SQRT2


def _split_cols(a):
    return (a[0::2, :] + a[1::2, :]) / SQRT2, (a[0::2, :] - a[1::2, :]) / SQRT2


def haar_dwt_2d(img):
    """Separable 2D Haar analysis of a square dyadic image.

    Each level filters along rows, then along columns, producing the
    (horizontal, vertical, diagonal) detail grids and an approximation that
    is decomposed again.
    """
    img = np.asarray(img, dtype=float)
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise ValueError(f"expected a square image, got shape {img.shape}")
    j = _levels(img.shape[0])
    details = []
    a = img
    for _ in range(j):
        lo, hi = _split_rows(a)
        ll, lh = _split_cols(lo)
        hl, hh = _split_cols(hi)
        details.append((lh, hl, hh))
        a = ll
    return WaveletPyramid(details, a)


def _merge_cols(lo, hi):
    out = np.empty((2 * lo.shape[0], lo.shape[1]))
    out[0::2, :] = (lo + hi) / SQRT2
    out[1::2, :] = (lo - hi) / SQRT2
    return out


def _merge_rows(lo, hi):
    out = np.empty((lo.shape[0], 2 * lo.shape[1]))
    out[:, 0::2] = (lo + hi) / SQRT2
    out[:, 1::2] = (lo - hi) / SQRT2
    return out


def haar_idwt_2d(pyr):
    a = pyr.approx
    for lh, hl, hh in reversed(pyr.details):
        a = _merge_rows(_merge_cols(a, lh), _merge_cols(hl, hh))
    return a


def _normalize_bands(mass):
    mass = np.asarray(mass, dtype=float)
    total = mass.sum()
    if total == 0.0:
        return np.full(mass.size, 1.0 / mass.size)
    return mass / total


def marginals_1d(x):
    """Fraction of absolute coefficient mass per scale, plus the approximation band."""
    pyr = haar_dwt_1d(x)
    mass = [np.abs(d).sum() for d in pyr.details] + [np.abs(pyr.approx).sum()]
    return _normalize_bands(mass)


def marginals_2d(img):
    """Image marginals: per scale, absolute mass summed over the three
    orientations and both translations, normalized by the grand total.

    An all-zero image yields the uniform vector.
    """
    pyr = haar_dwt_2d(img)
    mass = [sum(np.abs(b).sum() for b in band) for band in pyr.details]
    mass.append(np.abs(pyr.approx).sum())
    return _normalize_bands(mass)


@dataclass(frozen=True)
class ZScoreStats:
    mean: np.ndarray
    std: np.ndarray


def zscore_fit(train):
    """Per-coordinate mean and (n-1)-normalized std, std clamped at 1e-12."""
    x = np.asarray(train, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] == 0:
        raise ValueError("cannot fit z-score statistics on an empty set")
    mean = x.mean(axis=0)
    if x.shape[0] > 1:
        std = x.std(axis=0, ddof=1)
    else:
        std = np.zeros(x.shape[1])
    return ZScoreStats(mean=mean, std=np.maximum(std, STD_FLOOR))


def zscore_apply(stats, v):
    return (np.asarray(v, dtype=float) - stats.mean) / stats.std


def save_marginals(path, ids, vectors):
    """Text file with one ``<image-id> <floats...>`` line per image."""
    lines = []
    for image_id, vec in zip(ids, vectors):
        if any(ch.isspace() for ch in image_id):
            raise ValueError(f"image id {image_id!r} contains whitespace")
        lines.append(image_id + " " + " ".join(f"{x:.17g}" for x in vec))
    Path(path).write_text("".join(ln + "\n" for ln in lines))


def load_marginals(path):
    """Return an ordered ``{image_id: vector}`` dict."""
    out = {}
    for k, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        try:
            out[parts[0]] = np.array([float(x) for x in parts[1:]])
        except ValueError as exc:
            raise FormatError(f"{path}:{k}: {exc}") from exc
    return out
