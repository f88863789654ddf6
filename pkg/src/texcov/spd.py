"""Geometry of symmetric positive-definite (SPD) matrices.

Matrices are plain ``ndarray`` objects of shape ``(d, d)``; stacks of
matrices have shape ``(n, d, d)``. Every spectral function goes through
:func:`sym_eig`, a batched cyclic Jacobi eigensolver, so the whole module
depends on numpy only.
"""
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, FormatError, NotPositiveDefiniteError

SYM_TOL = 1e-12
EIG_FLOOR = 1e-12
SHRINKAGE = 1e-8
KERNEL_NORM_EPS = 1e-12


def _check_symmetric(m, tol=SYM_TOL):
    m = np.asarray(m, dtype=float)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    mt = np.swapaxes(m, -1, -2)
    if np.any(np.abs(m - mt) > tol * np.maximum(1.0, np.abs(m))):
        raise ValueError("matrix is not symmetric")
    return m


def symmetrize(m):
    """Return ``(m + m^T) / 2`` (works on stacks)."""
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def sym_eig(m, tol=1e-14, max_sweeps=100):
    """Eigendecomposition of symmetric matrices by cyclic Jacobi rotations.

    Parameters
    ----------
    m : ndarray, shape (..., d, d)
        Symmetric matrix or stack of symmetric matrices.
    tol : float
        Stop once the off-diagonal Frobenius norm is below ``tol`` times
        the Frobenius norm of the matrix.
    max_sweeps : int
        Maximum number of full sweeps over the upper triangle.

    Returns
    -------
    eigvals : ndarray, shape (..., d)
        Eigenvalues in descending order.
    eigvecs : ndarray, shape (..., d, d)
        Orthonormal eigenvectors stored as columns.
    """
    m = _check_symmetric(m)
    batch_shape = m.shape[:-2]
    d = m.shape[-1]
    a = symmetrize(m).reshape(-1, d, d).copy()
    nb = a.shape[0]
    v = np.broadcast_to(np.eye(d), (nb, d, d)).copy()
    scale = np.sqrt(np.einsum("bij,bij->b", a, a))
    offmask = ~np.eye(d, dtype=bool)

    def converged():
        off = np.sqrt(np.sum(a[:, offmask] ** 2, axis=1))
        return np.all(off <= tol * scale), off

    for _ in range(max_sweeps):
        done, off = converged()
        if done:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[:, p, q]
                active = apq != 0.0
                if not active.any():
                    continue
                app = a[:, p, p]
                aqq = a[:, q, q]
                safe = np.where(active, apq, 1.0)
                with np.errstate(over="ignore"):
                    # |theta| = inf gives t = 0, the identity rotation
                    theta = (aqq - app) / (2.0 * safe)
                    t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
                t[theta == 0.0] = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                c = np.where(active, c, 1.0)[:, None]
                s = np.where(active, s, 0.0)[:, None]

                col_p = a[:, :, p].copy()
                col_q = a[:, :, q]
                a[:, :, p] = c * col_p - s * col_q
                a[:, :, q] = s * col_p + c * col_q
                row_p = a[:, p, :].copy()
                row_q = a[:, q, :]
                a[:, p, :] = c * row_p - s * row_q
                a[:, q, :] = s * row_p + c * row_q
                a[active, p, q] = 0.0
                a[active, q, p] = 0.0

                vp = v[:, :, p].copy()
                vq = v[:, :, q]
                v[:, :, p] = c * vp - s * vq
                v[:, :, q] = s * vp + c * vq
    done, off = converged()
    if not done:
        raise ConvergenceError(
            f"Jacobi did not converge in {max_sweeps} sweeps", residual=float(off.max())
        )

    w = np.diagonal(a, axis1=1, axis2=2)
    order = np.argsort(-w, axis=1, kind="stable")
    w = np.take_along_axis(w, order, axis=1)
    v = np.take_along_axis(v, order[:, None, :], axis=2)
    return w.reshape(batch_shape + (d,)), v.reshape(batch_shape + (d, d))


def _eig_floor(m):
    d = m.shape[-1]
    return EIG_FLOOR * np.trace(m, axis1=-2, axis2=-1) / d


def _spectral(m, fn, require_pd):
    w, u = sym_eig(m)
    if require_pd:
        floor = _eig_floor(m)
        if np.any(w[..., -1] <= floor):
            raise NotPositiveDefiniteError(
                f"smallest eigenvalue {np.min(w[..., -1]):.3e} is not above the floor"
            )
    return symmetrize((u * fn(w)[..., None, :]) @ np.swapaxes(u, -1, -2))


def spd_log(c):
    """Principal matrix logarithm of SPD matrices."""
    return _spectral(c, np.log, True)


def spd_exp(s):
    """Matrix exponential of symmetric matrices."""
    return _spectral(s, np.exp, False)


def spd_sqrt(c):
    return _spectral(c, np.sqrt, True)


def spd_invsqrt(c):
    return _spectral(c, lambda w: 1.0 / np.sqrt(w), True)


def is_spd(c):
    """True when ``c`` is symmetric with smallest eigenvalue above the floor."""
    try:
        w, _ = sym_eig(c)
    except ValueError:
        return False
    return bool(np.all(w[..., -1] > _eig_floor(np.asarray(c, dtype=float))))


def ensure_spd(c, regularize=True):
    """Validate an SPD matrix, optionally shrinking it toward a scaled identity.

    When the smallest eigenvalue is at or below ``1e-12 * trace / d`` the
    matrix is replaced by ``C + 1e-8 * (trace / d) * I``. A zero-trace
    matrix uses ``1e-8 * I`` instead.

    Raises
    ------
    NotPositiveDefiniteError
        If the matrix fails the check and ``regularize`` is false, or is
        still not SPD after shrinkage.
    """
    c = symmetrize(_check_symmetric(c))
    if c.ndim != 2:
        raise ValueError("ensure_spd expects a single matrix")
    d = c.shape[0]
    w, _ = sym_eig(c)
    if w[-1] > _eig_floor(c):
        return c
    if not regularize:
        raise NotPositiveDefiniteError(
            f"smallest eigenvalue {w[-1]:.3e} is not above the floor"
        )
    mean_eig = np.trace(c) / d
    if mean_eig <= 0:
        mean_eig = 1.0
    c = c + SHRINKAGE * mean_eig * np.eye(d)
    w, _ = sym_eig(c)
    if w[-1] <= _eig_floor(c):
        raise NotPositiveDefiniteError("matrix is not SPD even after shrinkage")
    return c


def _whiten(c, g_invsqrt):
    return symmetrize(g_invsqrt @ c @ g_invsqrt)


def riemannian_distance(ci, cj):
    """Affine-invariant distance ``||log(Ci^-1/2 Cj Ci^-1/2)||_F``."""
    ci = np.asarray(ci, dtype=float)
    cj = np.asarray(cj, dtype=float)
    if ci.shape != cj.shape or ci.ndim != 2:
        raise ValueError(f"dimension mismatch: {ci.shape} vs {cj.shape}")
    m = _whiten(cj, spd_invsqrt(ci))
    w, _ = sym_eig(m)
    if w[-1] <= _eig_floor(m):
        raise NotPositiveDefiniteError("second argument is not SPD")
    return float(np.sqrt(np.sum(np.log(w) ** 2)))


def tangent_vectors(cs, g):
    """Map SPD matrices to the tangent space at ``g``: ``log(G^-1/2 C G^-1/2)``."""
    cs = np.asarray(cs, dtype=float)
    g = np.asarray(g, dtype=float)
    if cs.shape[-2:] != g.shape:
        raise ValueError(f"reference shape {g.shape} does not match {cs.shape[-2:]}")
    return spd_log(_whiten(cs, spd_invsqrt(g)))


def riemannian_mean(cs, tol=1e-9, max_iter=200):
    """Karcher mean of SPD matrices under the affine-invariant metric.

    Iterates ``G <- G^1/2 exp(nu * T) G^1/2`` where
    ``T = mean_i log(G^-1/2 C_i G^-1/2)``, starting at the arithmetic mean
    with ``nu = 1``. The step size is halved whenever the residual
    ``||T||_F`` grows, which happens on widely dispersed inputs. Returns
    the first iterate with ``||T||_F <= tol``.

    Raises
    ------
    ConvergenceError
        If ``max_iter`` iterations pass without meeting ``tol``.
    """
    cs = np.asarray(cs, dtype=float)
    if cs.ndim != 3 or cs.shape[0] == 0:
        raise ValueError("expected a nonempty stack of matrices")
    g = symmetrize(cs.mean(axis=0))
    step_size = 1.0
    previous = np.inf
    residual = np.inf
    for _ in range(max_iter):
        step = tangent_vectors(cs, g).mean(axis=0)
        residual = np.linalg.norm(step)
        if residual <= tol:
            return g
        if residual > previous:
            step_size *= 0.5
        previous = residual
        g_sqrt = spd_sqrt(g)
        g = symmetrize(g_sqrt @ spd_exp(step_size * step) @ g_sqrt)
    raise ConvergenceError(
        f"Karcher mean did not converge in {max_iter} iterations", residual=residual
    )


def geodesic_midpoint(a, b):
    """Closed-form midpoint ``A^1/2 (A^-1/2 B A^-1/2)^1/2 A^1/2``."""
    a_sqrt = spd_sqrt(a)
    return symmetrize(a_sqrt @ spd_sqrt(_whiten(b, spd_invsqrt(a))) @ a_sqrt)


@dataclass(frozen=True)
class KernelRef:
    """Reference point ``G`` of the normalized LogEuclidean kernel.

    ``mode`` is ``"identity"`` or ``"riemannian-mean"``.
    """

    mode: str
    matrix: np.ndarray

    @classmethod
    def identity(cls, d):
        return cls("identity", np.eye(d))

    @classmethod
    def riemannian_mean(cls, cs, tol=1e-9, max_iter=200):
        return cls("riemannian-mean", riemannian_mean(cs, tol=tol, max_iter=max_iter))

    @classmethod
    def fit(cls, mode, cs):
        cs = np.asarray(cs, dtype=float)
        if mode == "identity":
            return cls.identity(cs.shape[-1])
        if mode == "riemannian-mean":
            return cls.riemannian_mean(cs)
        raise ValueError(f"unknown kernel reference mode {mode!r}")


def _normalized_inner(li, lj):
    ni = np.linalg.norm(li)
    nj = np.linalg.norm(lj)
    small_i = ni <= KERNEL_NORM_EPS
    small_j = nj <= KERNEL_NORM_EPS
    if small_i and small_j:
        return 1.0
    if small_i or small_j:
        return 0.0
    return float(np.sum(li * lj) / (ni * nj))


def logeuclidean_kernel(ci, cj, g):
    """Normalized LogEuclidean kernel between two SPD matrices.

    Parameters
    ----------
    ci, cj : ndarray, shape (d, d)
    g : KernelRef or ndarray
        Reference point of the tangent space.

    Returns
    -------
    float
        ``tr(L_i L_j) / (||L_i||_F ||L_j||_F)`` with ``L = log(G^-1/2 C G^-1/2)``.
        If exactly one tangent vector vanishes the value is 0; if both do, 1.
    """
    gm = g.matrix if isinstance(g, KernelRef) else np.asarray(g, dtype=float)
    li, lj = tangent_vectors(np.stack([ci, cj]), gm)
    return _normalized_inner(li, lj)


def normalized_tangent_features(cs, g):
    """Flattened tangent vectors scaled to unit norm (zero vectors kept as zero).

    The second return value flags the degenerate (zero-norm) rows.
    """
    gm = g.matrix if isinstance(g, KernelRef) else np.asarray(g, dtype=float)
    ls = tangent_vectors(np.asarray(cs, dtype=float), gm)
    flat = ls.reshape(ls.shape[0], -1)
    norms = np.linalg.norm(flat, axis=1)
    degenerate = norms <= KERNEL_NORM_EPS
    out = np.zeros_like(flat)
    out[~degenerate] = flat[~degenerate] / norms[~degenerate, None]
    return out, degenerate


def cross_kernel(feats_a, degen_a, feats_b, degen_b):
    """Kernel block between two sets of normalized tangent features."""
    k = feats_a @ feats_b.T
    both = degen_a[:, None] & degen_b[None, :]
    k[both] = 1.0
    return k


def gram_matrix(cs, g):
    """Symmetric Gram matrix of the normalized LogEuclidean kernel.

    Entries are computed on the upper triangle and mirrored, so the result
    is exactly symmetric.
    """
    feats, degen = normalized_tangent_features(cs, g)
    n = feats.shape[0]
    k = cross_kernel(feats, degen, feats, degen)
    iu = np.triu_indices(n, 1)
    k[(iu[1], iu[0])] = k[iu]
    return k


def save_spd(path, c):
    """Write a matrix as text: ``spd <d>`` then d rows of 17-significant-digit floats."""
    c = np.asarray(c, dtype=float)
    d = c.shape[0]
    lines = [f"spd {d}"]
    lines += [" ".join(f"{x:.17g}" for x in row) for row in c]
    Path(path).write_text("\n".join(lines) + "\n")


def load_spd(path):
    lines = Path(path).read_text().split("\n")
    head = lines[0].split()
    if len(head) != 2 or head[0] != "spd":
        raise FormatError(f"{path}: missing 'spd <d>' header")
    try:
        d = int(head[1])
        rows = [[float(x) for x in ln.split()] for ln in lines[1 : d + 1]]
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    c = np.array(rows, dtype=float)
    if c.shape != (d, d):
        raise FormatError(f"{path}: expected {d}x{d} entries")
    return c
