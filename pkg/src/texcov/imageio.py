"""Grayscale image loading, saving and resizing.

Images are 2D float arrays of shape ``(height, width)`` with intensities in
[0, 1]. Integer files are divided by the maximum value of their bit depth.
"""
from pathlib import Path

import numpy as np

from .errors import FormatError


def _check_image(img):
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise ValueError(f"expected a 2D grayscale image, got shape {img.shape}")
    if img.shape[0] < 2 or img.shape[1] < 2:
        raise ValueError(f"image must be at least 2x2, got {img.shape}")
    return img


def _read_pgm_token(data, pos):
    # skip whitespace and '#' comments
    n = len(data)
    while pos < n:
        ch = data[pos : pos + 1]
        if ch == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
        pos += 1
    return data[start:pos], pos


def _parse_pgm(data, name):
    if data[:2] != b"P5":
        raise FormatError(f"{name}: not a binary PGM (P5) file")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_pgm_token(data, pos)
        if not tok:
            raise FormatError(f"{name}: truncated PGM header")
        try:
            fields.append(int(tok))
        except ValueError as exc:
            raise FormatError(f"{name}: bad PGM header field {tok!r}") from exc
    width, height, maxval = fields
    if not 0 < maxval < 65536 or width < 1 or height < 1:
        raise FormatError(f"{name}: invalid PGM header {fields}")
    pos += 1  # single whitespace byte after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height
    raw = np.frombuffer(data, dtype=dtype, count=count, offset=pos) if (
        len(data) - pos >= count * dtype.itemsize
    ) else None
    if raw is None:
        raise FormatError(f"{name}: truncated PGM pixel data")
    full = 255.0 if dtype.itemsize == 1 else 65535.0
    return raw.reshape(height, width).astype(float) / full


def _load_png(path):
    from PIL import Image

    with Image.open(path) as im:
        if im.mode == "L":
            return np.asarray(im, dtype=float) / 255.0
        if im.mode in ("I;16", "I;16B", "I;16L"):
            return np.asarray(im, dtype=float) / 65535.0
        if im.mode == "I":
            arr = np.asarray(im)
            if arr.min() < 0 or arr.max() > 65535:
                raise FormatError(f"{path}: unsupported PNG bit depth")
            return arr.astype(float) / 65535.0
        raise FormatError(f"{path}: unsupported PNG mode {im.mode!r} (grayscale only)")


def load_image(path):
    """Load a grayscale PGM (P5) or PNG file as floats in [0, 1].

    Raises
    ------
    OSError
        If the file cannot be read.
    FormatError
        If the format or bit depth is not supported.
    """
    path = Path(path)
    data = path.read_bytes()
    if data[:2] == b"P5":
        return _parse_pgm(data, path)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return _load_png(path)
    raise FormatError(f"{path}: unsupported image format")


def save_pgm(path, img):
    """Write an image with values in [0, 1] as an 8-bit binary PGM."""
    img = _check_image(img)
    q = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = q.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + q.tobytes())


def _cubic(x, a=-0.5):
    x = np.abs(x)
    x2 = x * x
    x3 = x2 * x
    return np.where(
        x <= 1,
        (a + 2) * x3 - (a + 3) * x2 + 1,
        np.where(x < 2, a * x3 - 5 * a * x2 + 8 * a * x - 4 * a, 0.0),
    )


def _resize_weights(n_in, n_out):
    """Interpolation matrix of shape (n_out, n_in) for one axis.

    Bicubic (Keys, a = -0.5); when shrinking, the kernel is stretched by
    the inverse scale so it also acts as the antialiasing prefilter. Taps
    that fall outside the input are clamped to the nearest edge sample.
    """
    scale = n_out / n_in
    kscale = min(scale, 1.0)
    width = 4.0 / kscale
    out_pos = np.arange(n_out)
    centers = (out_pos + 0.5) / scale - 0.5
    left = np.floor(centers - width / 2).astype(int)
    ntaps = int(np.ceil(width)) + 2
    taps = left[:, None] + np.arange(ntaps)[None, :]
    w = kscale * _cubic(kscale * (centers[:, None] - taps))
    w /= w.sum(axis=1, keepdims=True)
    taps = np.clip(taps, 0, n_in - 1)
    mat = np.zeros((n_out, n_in))
    np.add.at(mat, (np.repeat(out_pos, ntaps), taps.ravel()), w.ravel())
    return mat


def resize(img, out_w, out_h):
    """Resize an image to ``(out_h, out_w)`` with antialiased bicubic interpolation.

    Output values are clamped to [0, 1].
    """
    img = _check_image(img)
    if out_w < 2 or out_h < 2:
        raise ValueError(f"target size must be at least 2x2, got {out_w}x{out_h}")
    h, w = img.shape
    if (h, w) == (out_h, out_w):
        return np.clip(img, 0.0, 1.0)
    rows = _resize_weights(h, out_h)
    cols = _resize_weights(w, out_w)
    return np.clip(rows @ img @ cols.T, 0.0, 1.0)


def rescale(img, factor):
    """Resize by a scale factor, rounding the output size to the nearest pixel."""
    img = _check_image(img)
    h, w = img.shape
    return resize(img, max(2, int(round(w * factor))), max(2, int(round(h * factor))))
