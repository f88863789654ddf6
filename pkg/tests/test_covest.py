import itertools

import numpy as np
import pytest

from oracles import covariance_double_loop
from texcov import covest
from texcov.errors import DegenerateDataError


def test_flatten_orders_rows():
    field = np.arange(1.0, 5.0).reshape(2, 2, 1)
    np.testing.assert_array_equal(covest.flatten(field), [[1], [2], [3], [4]])


def test_flatten_shapes():
    assert covest.flatten(np.zeros((50, 50, 7))).shape == (2500, 7)
    assert covest.flatten(np.zeros((1, 1, 3))).shape == (1, 3)


class TestEmpirical:
    def test_one_dimensional(self):
        # deviations +-1.5, +-0.5 -> sum of squares 5, divided by n - 1 = 3
        np.testing.assert_allclose(covest.empirical_covariance([[1], [2], [3], [4]]), [[5 / 3]],
                                   rtol=1e-15)

    def test_two_points(self):
        c = covest.empirical_covariance([[1, 0], [0, 1]], regularize=False)
        np.testing.assert_allclose(c, [[0.5, -0.5], [-0.5, 0.5]])

    def test_constant_rows(self):
        x = np.ones((10, 3))
        np.testing.assert_array_equal(covest.empirical_covariance(x, regularize=False), 0.0)
        np.testing.assert_array_equal(covest.empirical_covariance(x), 1e-8 * np.eye(3))

    def test_double_loop_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            x = rng.standard_normal((int(rng.integers(8, 30)), int(rng.integers(1, 6))))
            want = covariance_double_loop(x.tolist())
            got = covest.empirical_covariance(x, regularize=False)
            np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-14)

    def test_symmetric_and_psd(self):
        x = np.random.default_rng(6).standard_normal((40, 6)) * [1, 2, 3, 1e-3, 5, 1]
        c = covest.empirical_covariance(x, regularize=False)
        np.testing.assert_array_equal(c, c.T)
        assert np.linalg.eigvalsh(c).min() >= -1e-10

    def test_translation_invariance(self):
        x = np.random.default_rng(7).standard_normal((30, 4))
        a = covest.empirical_covariance(x, regularize=False)
        b = covest.empirical_covariance(x + [3.0, -100.0, 0.5, 7.0], regularize=False)
        np.testing.assert_allclose(a, b, atol=1e-10)

    def test_errors(self):
        with pytest.raises(ValueError):
            covest.empirical_covariance([[1.0, 2.0]])
        with pytest.raises(FloatingPointError):
            covest.empirical_covariance([[1.0], [np.nan], [2.0]])


class TestMcdConfig:
    def test_defaults(self):
        cfg = covest.McdConfig()
        assert (cfg.alpha, cfg.n_trial, cfg.n_cstep_initial, cfg.n_best) == (0.9, 500, 2, 10)

    @pytest.mark.parametrize("kw", [{"alpha": 0.5}, {"alpha": 1.2}, {"n_trial": 0},
                                    {"n_trial": 5, "n_best": 6}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            covest.McdConfig(**kw)


def test_subset_size():
    assert covest.subset_size(2500, 0.9) == 2250
    assert covest.subset_size(200, 0.9) == 180
    assert covest.subset_size(101, 0.9) == 91


def test_consistency_factor_monte_carlo():
    # factor should rescale the covariance of the alpha-fraction of most
    # central normal draws back to the identity
    d, alpha = 3, 0.75
    x = np.random.default_rng(8).standard_normal((400_000, d))
    r2 = np.sum(x**2, axis=1)
    keep = x[r2 <= np.quantile(r2, alpha)]
    scale = np.mean(np.diag(np.cov(keep.T)))
    assert covest.consistency_factor(alpha, d) * scale == pytest.approx(1.0, abs=0.01)
    assert covest.consistency_factor(1.0, d) == 1.0


def test_c_step_never_increases_determinant():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((150, 4))
    x[:15] += 30
    h = covest.subset_size(150, 0.8)
    start = rng.choice(150, 5, replace=False)
    loc, cov = x[start].mean(0), np.cov(x[start].T)
    logdets = []
    for _ in range(12):
        _, loc, cov, ld = covest.c_step(x, loc, cov, h)
        logdets.append(ld)
    assert all(b <= a + 1e-12 for a, b in zip(logdets, logdets[1:]))


def test_fast_mcd_finds_exact_mcd():
    rng = np.random.default_rng(10)
    x = rng.standard_normal((12, 2))
    x[:2] *= 6
    h = covest.subset_size(12, 0.75)
    best = min(np.linalg.det(np.cov(x[list(s)].T)) for s in itertools.combinations(range(12), h))
    res = covest.fast_mcd_details(x, covest.McdConfig(alpha=0.75, n_trial=200))
    assert np.linalg.det(res.raw_covariance) == pytest.approx(best, rel=1e-10)
    assert res.support.size == h


def test_fast_mcd_rejects_outliers():
    rng = np.random.default_rng(11)
    clean = rng.multivariate_normal([0, 0, 0], [[2, 0.5, 0], [0.5, 1, 0.3], [0, 0.3, 0.5]], 95)
    outliers = clean.mean(0) + 100 * np.sqrt(2) * rng.standard_normal((5, 3))
    x = np.vstack([clean, outliers])
    ref = np.cov(clean.T)
    got = covest.fast_mcd(x, covest.McdConfig(seed=3))
    assert np.linalg.norm(got - ref, 2) / np.linalg.norm(ref, 2) < 0.25
    emp = covest.empirical_covariance(x)
    assert np.linalg.norm(emp - ref, 2) / np.linalg.norm(ref, 2) > 1.0


def test_fast_mcd_alpha_one_is_empirical():
    x = np.random.default_rng(12).standard_normal((60, 4))
    np.testing.assert_array_equal(covest.fast_mcd(x, covest.McdConfig(alpha=1.0)),
                                  covest.empirical_covariance(x))


def test_fast_mcd_deterministic():
    x = np.random.default_rng(13).standard_normal((300, 5))
    cfg = covest.McdConfig(n_trial=50, seed=42)
    a = covest.fast_mcd(x, cfg)
    b = covest.fast_mcd(x, cfg)
    assert a.tobytes() == b.tobytes()
    c = covest.fast_mcd(x, covest.McdConfig(n_trial=50, seed=43))
    assert c.shape == a.shape


def test_fast_mcd_best_of_examined():
    x = np.random.default_rng(14).standard_normal((80, 3))
    cfg = covest.McdConfig(n_trial=40, n_best=5, seed=1)
    res = covest.fast_mcd_details(x, cfg)
    h = covest.subset_size(80, cfg.alpha)
    for t in range(cfg.n_trial):
        rng = covest._trial_rng(cfg.seed, t)
        start = rng.choice(80, 4, replace=False)
        _, loc, cov, ld = covest.c_step(x, x[start].mean(0), np.cov(x[start].T), h)
        _, _, _, ld = covest.c_step(x, loc, cov, h)
        assert res.log_det <= ld + 1e-12


def test_fast_mcd_errors():
    with pytest.raises(ValueError):
        covest.fast_mcd(np.zeros((6, 3)))
    with pytest.raises(DegenerateDataError):
        covest.fast_mcd(np.ones((50, 2)), covest.McdConfig(n_trial=10))
