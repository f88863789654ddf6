"""Per-pixel local features feeding region covariance descriptors.

A feature field is an array of shape ``(height, width, dim)``.
"""
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .errors import FormatError


def _dx(img):
    p = np.pad(img, ((0, 0), (1, 1)), mode="edge")
    return 0.5 * (p[:, 2:] - p[:, :-2])


def _dy(img):
    p = np.pad(img, ((1, 1), (0, 0)), mode="edge")
    return 0.5 * (p[2:, :] - p[:-2, :])


def _dxx(img):
    p = np.pad(img, ((0, 0), (1, 1)), mode="edge")
    return p[:, 2:] - 2.0 * img + p[:, :-2]


def _dyy(img):
    p = np.pad(img, ((1, 1), (0, 0)), mode="edge")
    return p[2:, :] - 2.0 * img + p[:-2, :]


def gradient_features(img):
    """Seven-channel gradient feature field.

    Channels are ``[I, |Ix|, |Iy|, |Ixx|, |Iyy|, sqrt(Ix^2 + Iy^2),
    arctan(|Ix| / |Iy|)]`` with x along columns and y along rows. First
    derivatives use the central difference ``[-1/2, 0, 1/2]``, second
    derivatives ``[1, -2, 1]``, both with edge replication. The
    orientation is pi/2 when only ``Iy`` vanishes and 0 when both do.
    """
    img = np.asarray(img, dtype=float)
    if img.ndim != 2 or min(img.shape) < 3:
        raise ValueError(f"gradient features need an image of at least 3x3, got {img.shape}")
    ix = np.abs(_dx(img))
    iy = np.abs(_dy(img))
    return np.stack(
        [
            img,
            ix,
            iy,
            np.abs(_dxx(img)),
            np.abs(_dyy(img)),
            np.hypot(ix, iy),
            np.arctan2(ix, iy),
        ],
        axis=-1,
    )


@dataclass(frozen=True)
class GaborParams:
    gamma: float
    theta: float
    sigma: float
    lam: float
    kernel_radius: int

    def __post_init__(self):
        if self.sigma <= 0 or self.lam <= 0 or self.gamma <= 0:
            raise ValueError("sigma, lambda and gamma must be positive")
        if self.kernel_radius < 1:
            raise ValueError("kernel_radius must be at least 1")


def gabor_params(theta, sigma, gamma=1.0, wavelength_ratio=1.0):
    """Filter with wavelength ``wavelength_ratio * sigma`` and radius ``ceil(3 sigma)``."""
    return GaborParams(
        gamma=gamma,
        theta=theta,
        sigma=sigma,
        lam=wavelength_ratio * sigma,
        kernel_radius=int(math.ceil(3 * sigma)),
    )


def default_gabor_bank(wavelength_ratio=1.0):
    """The 12-filter bank: 4 orientations x 3 envelope scales, gamma = 1."""
    thetas = (-math.pi / 4, 0.0, math.pi / 4, math.pi / 2)
    sigmas = (5.0, 10.0, 20.0)
    return [
        gabor_params(theta, sigma, wavelength_ratio=wavelength_ratio)
        for sigma in sigmas
        for theta in thetas
    ]


def gabor_kernel_real(p):
    """Zero-mean real part of a Gabor kernel, shape ``(2r+1, 2r+1)``."""
    r = p.kernel_radius
    y, x = np.mgrid[-r : r + 1, -r : r + 1].astype(float)
    xr = x * math.cos(p.theta) + y * math.sin(p.theta)
    yr = -x * math.sin(p.theta) + y * math.cos(p.theta)
    env = np.exp(-(xr**2 + p.gamma**2 * yr**2) / (2 * p.sigma**2))
    k = env * np.cos(2 * math.pi * xr / p.lam)
    return k - k.mean()


def _convolve_same(img, kernel):
    r0 = kernel.shape[0] // 2
    r1 = kernel.shape[1] // 2
    padded = np.pad(img, ((r0, r0), (r1, r1)), mode="edge")
    return fftconvolve(padded, kernel, mode="valid")


def gabor_features(img, bank=None):
    """Absolute real-part Gabor responses, one channel per filter.

    Convolution is same-size with edge replication. ``bank`` defaults to
    :func:`default_gabor_bank`.
    """
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise ValueError("expected a 2D image")
    if bank is None:
        bank = default_gabor_bank()
    if len(bank) == 0:
        raise ValueError("Gabor bank is empty")
    out = np.empty(img.shape + (len(bank),))
    for k, p in enumerate(bank):
        out[..., k] = np.abs(_convolve_same(img, gabor_kernel_real(p)))
    return out


_FIELD_HEADER = struct.Struct("<III")


def save_field(path, field):
    """Binary dump: (width, height, dim) as uint32 LE, then float64 LE values,
    row-major with the channel index fastest."""
    field = np.asarray(field, dtype=float)
    h, w, d = field.shape
    Path(path).write_bytes(_FIELD_HEADER.pack(w, h, d) + field.astype("<f8").tobytes())


def load_field(path):
    data = Path(path).read_bytes()
    if len(data) < _FIELD_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    w, h, d = _FIELD_HEADER.unpack_from(data)
    body = data[_FIELD_HEADER.size :]
    if len(body) != 8 * w * h * d:
        raise FormatError(f"{path}: expected {w * h * d} values")
    return np.frombuffer(body, dtype="<f8").reshape(h, w, d).astype(float)
