"""Covariance descriptors: unbiased empirical estimator and FastMCD."""
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.stats import chi2

from .errors import DegenerateDataError
from .spd import ensure_spd, symmetrize


def flatten(field):
    """Reshape a ``(height, width, dim)`` feature field into ``(n, dim)`` rows.

    Rows follow row-major pixel order.
    """
    field = np.asarray(field, dtype=float)
    if field.size == 0:
        raise ValueError("empty feature field")
    if field.ndim == 2:
        field = field[..., None]
    return field.reshape(-1, field.shape[-1])


def _scatter(x):
    xc = x - x.mean(axis=0)
    return symmetrize(xc.T @ xc / (x.shape[0] - 1))


def empirical_covariance(obs, regularize=True):
    """Unbiased sample covariance ``1/(n-1) sum (f - mean)(f - mean)^T``.

    Parameters
    ----------
    obs : array-like, shape (n, d)
    regularize : bool
        Pass the result through :func:`texcov.spd.ensure_spd` so that it is
        strictly positive definite. With ``False`` the raw PSD estimate is
        returned.
    """
    x = np.asarray(obs, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise ValueError("need at least two observations")
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("observations contain non-finite values")
    c = _scatter(x)
    return ensure_spd(c) if regularize else c


@dataclass(frozen=True)
class McdConfig:
    """FastMCD settings.

    ``alpha`` is the fraction of observations kept (h = ceil(alpha n)).
    ``n_trial`` random (d+1)-subsets each get ``n_cstep_initial`` C-steps;
    the ``n_best`` lowest-determinant candidates are iterated to convergence.
    """

    alpha: float = 0.9
    n_trial: int = 500
    n_cstep_initial: int = 2
    n_best: int = 10
    seed: int = 0
    max_csteps: int = 100
    rel_tol: float = 1e-12

    def __post_init__(self):
        if not 0.5 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0.5, 1], got {self.alpha}")
        if self.n_trial < 1 or self.n_best < 1 or self.n_best > self.n_trial:
            raise ValueError("need 1 <= n_best <= n_trial")
        if self.n_cstep_initial < 0:
            raise ValueError("n_cstep_initial must be nonnegative")


@dataclass
class McdResult:
    location: np.ndarray
    raw_covariance: np.ndarray
    covariance: np.ndarray
    support: np.ndarray
    log_det: float
    trial: int
    consistency: float


def subset_size(n, alpha):
    return int(math.ceil(alpha * n - 1e-9))


def consistency_factor(alpha, d):
    """Scale making the h-subset covariance consistent at the normal model."""
    if alpha >= 1.0:
        return 1.0
    q = chi2.ppf(alpha, d)
    return alpha / chi2.cdf(q, d + 2)


def _log_det(cov):
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0 or not np.isfinite(logdet):
        raise np.linalg.LinAlgError("singular covariance")
    return logdet


def mahalanobis_sq(x, loc, cov):
    factor = linalg.cho_factor(cov, lower=True)
    diff = x - loc
    z = linalg.solve_triangular(factor[0], diff.T, lower=True)
    return np.einsum("ij,ij->j", z, z)


def c_step(x, loc, cov, h):
    """One concentration step.

    Keeps the ``h`` observations closest to ``loc`` in Mahalanobis distance
    under ``cov`` and re-estimates. Returns ``(support_idx, loc, cov, log_det)``.
    Raises ``LinAlgError`` when a covariance is singular.
    """
    dist = mahalanobis_sq(x, loc, cov)
    idx = np.sort(np.argsort(dist, kind="stable")[:h])
    sub = x[idx]
    new_cov = _scatter(sub)
    return idx, sub.mean(axis=0), new_cov, _log_det(new_cov)


def _trial_rng(seed, trial):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, trial])))


def fast_mcd_details(obs, cfg=None):
    """Run FastMCD and return the full :class:`McdResult`."""
    cfg = cfg or McdConfig()
    x = np.asarray(obs, dtype=float)
    if x.ndim != 2:
        raise ValueError("observations must be a 2D array")
    n, d = x.shape
    if n <= 2 * d:
        raise ValueError(f"FastMCD needs n > 2d observations, got n={n}, d={d}")
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("observations contain non-finite values")
    h = subset_size(n, cfg.alpha)

    if h >= n:
        cov = empirical_covariance(x, regularize=False)
        sign, logdet = np.linalg.slogdet(cov)
        return McdResult(
            location=x.mean(axis=0),
            raw_covariance=cov,
            covariance=cov,
            support=np.arange(n),
            log_det=logdet if sign > 0 else -np.inf,
            trial=-1,
            consistency=1.0,
        )

    candidates = []
    for t in range(cfg.n_trial):
        rng = _trial_rng(cfg.seed, t)
        start = rng.choice(n, size=d + 1, replace=False)
        sub = x[start]
        cov = _scatter(sub)
        try:
            _log_det(cov)
            loc = sub.mean(axis=0)
            logdet = None
            idx = start
            for _ in range(cfg.n_cstep_initial):
                idx, loc, cov, logdet = c_step(x, loc, cov, h)
            if logdet is None:
                idx, loc, cov, logdet = c_step(x, loc, cov, h)
        except np.linalg.LinAlgError:
            continue
        candidates.append((logdet, t, idx, loc, cov))

    if not candidates:
        raise DegenerateDataError("every FastMCD trial produced a singular covariance")

    candidates.sort(key=lambda c: (c[0], c[1]))
    refined = []
    for logdet, t, idx, loc, cov in candidates[: cfg.n_best]:
        try:
            for _ in range(cfg.max_csteps):
                new_idx, new_loc, new_cov, new_logdet = c_step(x, loc, cov, h)
                same = np.array_equal(new_idx, idx)
                change = abs(math.expm1(new_logdet - logdet))
                idx, loc, cov, logdet = new_idx, new_loc, new_cov, new_logdet
                if same or change < cfg.rel_tol:
                    break
        except np.linalg.LinAlgError:
            continue
        refined.append((logdet, t, idx, loc, cov))

    if not refined:
        raise DegenerateDataError("every FastMCD candidate became singular")
    logdet, t, idx, loc, raw = min(refined, key=lambda c: (c[0], c[1]))
    factor = consistency_factor(cfg.alpha, d)
    return McdResult(
        location=loc,
        raw_covariance=raw,
        covariance=symmetrize(factor * raw),
        support=idx,
        log_det=logdet,
        trial=t,
        consistency=factor,
    )


def fast_mcd(obs, cfg=None, regularize=True):
    """Robust covariance from the minimum-determinant h-subset (FastMCD).

    With ``alpha = 1`` the result is the empirical covariance of all
    observations, without a consistency factor.
    """
    cov = fast_mcd_details(obs, cfg).covariance
    return ensure_spd(cov) if regularize else cov
