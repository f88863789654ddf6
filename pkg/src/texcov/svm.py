"""Binary C-SVM on a precomputed kernel, trained by SMO.

The dual problem solved is::

    min_a  1/2 a^T Q a - sum(a)   s.t.  0 <= a_i <= C,  sum(y_i a_i) = 0

with ``Q_ij = y_i y_j K_ij``. Each iteration updates the maximal violating
pair; training stops when the KKT gap ``m(a) - M(a)`` drops below ``tol``.
"""
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .errors import ConvergenceError, FormatError

TAU = 1e-12
SYM_TOL = 1e-10
PSD_TOL = 1e-6


def check_gram(k, labels=None):
    """Validate a Gram matrix: square, finite, symmetric and near-PSD.

    Returns the matrix as a float array (and labels as ``int`` in {-1, +1}
    when given).
    """
    k = np.asarray(k, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValueError(f"Gram matrix must be square, got {k.shape}")
    if not np.all(np.isfinite(k)):
        raise ValueError("Gram matrix has non-finite entries")
    if np.max(np.abs(k - k.T), initial=0.0) > SYM_TOL:
        raise ValueError("Gram matrix is not symmetric")
    scale = max(np.max(np.diag(k)), 0.0)
    lam_min = np.linalg.eigvalsh(0.5 * (k + k.T))[0]
    if lam_min < -PSD_TOL * scale:
        raise ValueError(f"Gram matrix is not PSD (min eigenvalue {lam_min:.3e})")
    if labels is None:
        return k
    y = np.asarray(labels)
    if y.shape != (k.shape[0],) or not np.all(np.isin(y, (-1, 1))):
        raise ValueError("labels must be a vector of -1/+1 matching the Gram size")
    return k, y.astype(int)


@dataclass
class TrainedSvm:
    dual_coef: np.ndarray
    bias: float
    c: float
    kernel_spec: str = "precomputed"
    n_iter: int = 0
    alpha: np.ndarray = field(default=None, repr=False)

    @property
    def support_idx(self):
        return np.flatnonzero(self.dual_coef != 0.0)

    def decision(self, k_row):
        k_row = np.asarray(k_row, dtype=float)
        if k_row.shape[-1] != self.dual_coef.size:
            raise ValueError(
                f"kernel row has length {k_row.shape[-1]}, expected {self.dual_coef.size}"
            )
        return k_row @ self.dual_coef + self.bias

    def predict(self, k_row):
        return np.where(self.decision(k_row) >= 0.0, 1, -1)


def dual_objective(k, y, alpha):
    """Dual objective ``sum(a) - 1/2 a^T Q a`` (to be maximized)."""
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ k @ ay)


@njit(cache=True)
def _smo_solve(q, y, c, tol, max_iter, alpha, grad):
    """Run SMO in place on ``alpha`` and ``grad``; return (updates, final gap)."""
    n = y.size
    it = 0
    while True:
        i = -1
        j = -1
        s_max = -np.inf
        s_min = np.inf
        for t in range(n):
            s = -y[t] * grad[t]
            if (y[t] == 1 and alpha[t] < c) or (y[t] == -1 and alpha[t] > 0):
                if s > s_max:
                    s_max = s
                    i = t
            if (y[t] == -1 and alpha[t] < c) or (y[t] == 1 and alpha[t] > 0):
                if s < s_min:
                    s_min = s
                    j = t
        if i < 0 or j < 0:
            return it, 0.0
        gap = s_max - s_min
        if gap < tol or it >= max_iter:
            return it, gap
        it += 1
        old_i = alpha[i]
        old_j = alpha[j]
        if y[i] != y[j]:
            quad = max(q[i, i] + q[j, j] + 2 * q[i, j], TAU)
            delta = (-grad[i] - grad[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            elif alpha[i] < 0:
                alpha[i] = 0.0
                alpha[j] = -diff
            if diff > 0:
                if alpha[i] > c:
                    alpha[i] = c
                    alpha[j] = c - diff
            elif alpha[j] > c:
                alpha[j] = c
                alpha[i] = c + diff
        else:
            quad = max(q[i, i] + q[j, j] - 2 * q[i, j], TAU)
            delta = (grad[i] - grad[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > c:
                if alpha[i] > c:
                    alpha[i] = c
                    alpha[j] = total - c
                if alpha[j] > c:
                    alpha[j] = c
                    alpha[i] = total - c
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = total
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = total
        di = alpha[i] - old_i
        dj = alpha[j] - old_j
        for t in range(n):
            grad[t] += q[t, i] * di + q[t, j] * dj


def _bias(alpha, y, grad, c):
    yg = y * grad
    free = (alpha > 0) & (alpha < c)
    if free.any():
        rho = yg[free].mean()
    else:
        at_upper = alpha >= c
        ub_mask = (at_upper & (y == -1)) | (~at_upper & (y == 1))
        lb_mask = ~ub_mask
        ub = yg[ub_mask].min() if ub_mask.any() else np.inf
        lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
        rho = 0.5 * (ub + lb)
    return -float(rho)


def svm_train(gram, labels, c, tol=1e-3, max_passes=10_000_000, kernel_spec="precomputed"):
    """Train a binary C-SVM by SMO on a precomputed Gram matrix.

    Parameters
    ----------
    gram : ndarray, shape (n, n)
    labels : array of -1/+1, shape (n,)
    c : float
        Box constraint.
    tol : float
        Stopping threshold on the maximal KKT violation.
    max_passes : int
        At most ``max_passes * n`` pair updates.

    Returns
    -------
    TrainedSvm
    """
    k, y = check_gram(gram, labels)
    n = y.size
    if n < 2 or np.unique(y).size < 2:
        raise ValueError("training needs at least one sample of each class")
    if not c > 0:
        raise ValueError("C must be positive")
    c = float(c)
    q = (y[:, None] * y[None, :]) * k
    alpha = np.zeros(n)
    grad = -np.ones(n)
    max_iter = max_passes * n
    it, gap = _smo_solve(q, y, c, float(tol), max_iter, alpha, grad)
    if gap >= tol:
        raise ConvergenceError(f"SMO did not converge in {max_iter} updates", residual=gap)

    return TrainedSvm(
        dual_coef=alpha * y,
        bias=_bias(alpha, y, grad, c),
        c=c,
        kernel_spec=kernel_spec,
        n_iter=it,
        alpha=alpha,
    )


def svm_decision(model, k_row):
    return model.decision(k_row)


def svm_predict(model, k_row):
    """Predicted label(s); an exact zero decision value maps to +1."""
    return model.predict(k_row)


def save_model(path, model):
    if any(ch.isspace() for ch in model.kernel_spec):
        raise ValueError("kernel_spec must not contain whitespace")
    n = model.dual_coef.size
    lines = [f"svm {n} {model.c:.17g} {model.bias:.17g} {model.kernel_spec}"]
    lines += [f"{i} {v:.17g}" for i, v in enumerate(model.dual_coef)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path):
    lines = Path(path).read_text().splitlines()
    head = lines[0].split() if lines else []
    if len(head) != 5 or head[0] != "svm":
        raise FormatError(f"{path}: bad model header")
    try:
        n, c, bias = int(head[1]), float(head[2]), float(head[3])
        coef = np.zeros(n)
        for ln in lines[1 : n + 1]:
            idx, val = ln.split()
            coef[int(idx)] = float(val)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if len(lines) < n + 1:
        raise FormatError(f"{path}: expected {n} coefficient lines")
    return TrainedSvm(dual_coef=coef, bias=bias, c=c, kernel_spec=head[4],
                      alpha=np.abs(coef))
