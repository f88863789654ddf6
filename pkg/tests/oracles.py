"""Independent reference computations used by the tests.

Nothing here calls into the code paths it is used to check.
"""
import itertools

import numpy as np


def random_spd(rng, d, cond=1e4):
    """Random SPD matrix with condition number ``cond`` (log-spaced spectrum)."""
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    if d == 1:
        w = np.array([1.0])
    else:
        w = np.logspace(0, np.log10(cond), d)
    rng.shuffle(w)
    m = (q * w) @ q.T
    return 0.5 * (m + m.T)


def eigh_fn(m, fn):
    """Matrix function through LAPACK ``eigh``."""
    w, u = np.linalg.eigh(m)
    return (u * fn(w)) @ u.T


def covariance_double_loop(x):
    """Unbiased covariance written out as explicit sums."""
    n, d = len(x), len(x[0])
    mean = [sum(x[i][k] for i in range(n)) / n for k in range(d)]
    c = [[0.0] * d for _ in range(d)]
    for a in range(d):
        for b in range(d):
            s = 0.0
            for i in range(n):
                s += (x[i][a] - mean[a]) * (x[i][b] - mean[b])
            c[a][b] = s / (n - 1)
    return np.array(c)


def svm_dual_optimum(k, y, c):
    """Exact optimum of the C-SVM dual by enumerating every face of the box.

    For each assignment of samples to {0, C, free}, solve the equality-
    constrained stationarity system on the free set and keep feasible
    points. The concave optimum is attained at such a face point.
    """
    k = np.asarray(k, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    q = np.outer(y, y) * k
    best = -np.inf
    for state in itertools.product((0, 1, 2), repeat=n):
        state = np.array(state)
        free = np.flatnonzero(state == 2)
        a = np.where(state == 1, c, 0.0)
        if free.size:
            m = free.size
            lhs = np.zeros((m + 1, m + 1))
            lhs[:m, :m] = q[np.ix_(free, free)]
            lhs[:m, m] = y[free]
            lhs[m, :m] = y[free]
            rhs = np.r_[1.0 - q[free] @ a, -(y @ a)]
            sol = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
            if np.linalg.norm(lhs @ sol - rhs) > 1e-9:
                continue
            a[free] = sol[:m]
            if np.any(a[free] < -1e-12) or np.any(a[free] > c + 1e-12):
                continue
        if abs(y @ a) > 1e-9:
            continue
        a = np.clip(a, 0.0, c)
        ay = a * y
        best = max(best, a.sum() - 0.5 * ay @ k @ ay)
    return best


def random_svm_problem(rng, n_max=8):
    n = int(rng.integers(2, n_max + 1))
    x = rng.standard_normal((n, 3))
    y = rng.choice([-1, 1], size=n)
    y[0], y[1] = 1, -1
    sq = ((x[:, None, :] - x[None, :, :]) ** 2).sum(-1)
    k = np.exp(-sq / 2.0)
    c = float(10.0 ** rng.integers(0, 6))
    return k, y, c


def haar_matrix(n):
    """Orthonormal Haar analysis matrix built from explicit basis functions.

    Rows: scale-1 details, scale-2 details, ..., then the approximation row.
    """
    rows = []
    length = 2
    while length <= n:
        for start in range(0, n, length):
            r = np.zeros(n)
            half = length // 2
            r[start : start + half] = 1.0
            r[start + half : start + length] = -1.0
            rows.append(r / np.sqrt(length))
        length *= 2
    rows.append(np.ones(n) / np.sqrt(n))
    return np.array(rows)


def kkt_violations(k, y, alpha, dual_coef, bias, c, tol=1e-3):
    """Indices breaking the C-SVM KKT conditions at margin tolerance ``tol``."""
    margin = y * (k @ dual_coef + bias)
    bad = []
    for i in range(y.size):
        if alpha[i] == 0 and margin[i] < 1 - tol:
            bad.append(i)
        elif alpha[i] == c and margin[i] > 1 + tol:
            bad.append(i)
        elif 0 < alpha[i] < c and abs(margin[i] - 1) > tol:
            bad.append(i)
    return bad
