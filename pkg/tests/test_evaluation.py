import numpy as np
import pytest

from oracles import random_spd
from texcov import evaluation as ev
from texcov import spd, wavelets
from texcov.evaluation import ConfusionCounts


class TestMetrics:
    def test_marginal_haar_first_results(self):
        m = ev.confusion_metrics(ConfusionCounts(tp=36, fp=20, tn=38, fn=22))
        assert round(m.sensitivity, 2) == 0.62
        assert m.specificity == pytest.approx(38 / 58)
        assert round(m.specificity, 2) == 0.66

    def test_grad_first_results(self):
        m = ev.confusion_metrics(ConfusionCounts(tp=54, fp=7, tn=51, fn=4))
        assert (round(m.sensitivity, 2), round(m.specificity, 2)) == (0.93, 0.88)

    def test_perfect(self):
        m = ev.confusion_metrics(ConfusionCounts(10, 0, 10, 0))
        assert (m.sensitivity, m.specificity, m.accuracy) == (1.0, 1.0, 1.0)

    def test_undefined_denominators(self):
        m = ev.confusion_metrics(ConfusionCounts(tp=0, fp=3, tn=5, fn=0))
        assert m.sensitivity is None
        assert m.specificity == 5 / 8

    def test_errors(self):
        with pytest.raises(ValueError):
            ev.confusion_metrics(ConfusionCounts(0, 0, 0, 0))
        with pytest.raises(ValueError):
            ev.confusion_metrics(ConfusionCounts(-1, 2, 2, 2))

    def test_counts_from_labels(self):
        c = ev.confusion_counts([1, 1, -1, -1, 1], [1, -1, -1, 1, 1])
        assert (c.tp, c.fp, c.tn, c.fn) == (2, 1, 1, 1)


def marginal_data(n_per_class=8, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.dirichlet(np.ones(5) * 5, n_per_class)
    b = rng.dirichlet(np.r_[3, 3, 5, 5, 5] * 2, n_per_class)
    return np.vstack([a, b]), np.r_[-np.ones(n_per_class), np.ones(n_per_class)].astype(int)


class TestLoo:
    def test_grid_and_consistency(self):
        x, y = marginal_data()
        rep = ev.loo_cv(x, y, ev.pipeline_spec("marginal-haar"))
        assert list(rep.per_c) == [1.0, 10.0, 100.0, 1000.0, 10000.0, 100000.0]
        assert rep.loo_accuracy == max(rep.per_c.values())
        assert ev.confusion_metrics(rep.counts()).accuracy == rep.loo_accuracy
        assert 0.0 <= rep.validation_accuracy <= 1.0

    def test_no_signal(self):
        x = np.full((10, 4), 0.25)
        y = np.r_[np.ones(5), -np.ones(5)].astype(int)
        rep = ev.loo_cv(x, y, ev.pipeline_spec("marginal-haar"))
        assert all(acc <= 0.5 + 1 / 10 for acc in rep.per_c.values())

    def test_tie_break_smallest_c(self):
        x = np.full((6, 3), 1 / 3)
        y = np.array([1, 1, 1, -1, -1, -1])
        rep = ev.loo_cv(x, y, ev.pipeline_spec("marginal-haar"), c_grid=[100, 1, 10])
        assert len(set(rep.per_c.values())) == 1
        assert rep.best_c == 1.0

    def test_single_class_fold_counts_as_error(self):
        x, _ = marginal_data(3)
        y = np.array([1, 1, 1, 1, 1, -1])
        rep = ev.loo_cv(x, y, ev.pipeline_spec("marginal-haar"), c_grid=[1.0])
        assert rep.fold_predictions[5] == 1
        assert np.isnan(rep.fold_decisions[5])

    def test_per_fold_fitting(self, monkeypatch):
        sizes = []
        real = ev.fit_kernel

        def spy(spec, train):
            sizes.append(len(train))
            return real(spec, train)

        monkeypatch.setattr(ev, "fit_kernel", spy)
        x, y = marginal_data(4)
        ev.loo_cv(x, y, ev.pipeline_spec("marginal-haar"), c_grid=[1.0, 10.0])
        assert sizes == [7] * 8 + [8]

    def test_reference_refit_per_fold(self):
        rng = np.random.default_rng(3)
        cs = np.stack([random_spd(rng, 3, 10) for _ in range(6)])
        cs[0] = 1e4 * random_spd(rng, 3, 10)
        spec = ev.pipeline_spec("cov-gabor")
        g_without = ev.fit_kernel(spec, cs[1:]).ref.matrix
        g_other = ev.fit_kernel(spec, np.delete(cs, 3, axis=0)).ref.matrix
        assert np.linalg.norm(g_other - g_without) > 0.5 * np.linalg.norm(g_without)

    def test_spd_descriptors(self):
        rng = np.random.default_rng(4)
        base = [random_spd(rng, 4, 5) for _ in range(2)]
        cs, y = [], []
        for k in range(12):
            cls = k % 2
            cs.append(base[cls] + 0.05 * random_spd(rng, 4, 5))
            y.append(1 if cls else -1)
        for ref in ("identity", "riemannian-mean"):
            spec = ev.pipeline_spec("cov-gabor", kernel_ref=ref)
            rep = ev.loo_cv(np.stack(cs), np.array(y), spec)
            assert rep.loo_accuracy == 1.0

    def test_parallel_matches_sequential(self):
        x, y = marginal_data(5)
        spec = ev.pipeline_spec("marginal-haar")
        a = ev.loo_cv(x, y, spec)
        b = ev.loo_cv(x, y, spec, jobs=2)
        assert ev.format_report(a, spec, (128, 128)) == ev.format_report(b, spec, (128, 128))
        np.testing.assert_array_equal(a.fold_decisions, b.fold_decisions)

    def test_input_errors(self):
        spec = ev.pipeline_spec("marginal-haar")
        with pytest.raises(ValueError):
            ev.loo_cv(np.zeros((2, 3)), [1, -1], spec)
        with pytest.raises(ValueError):
            ev.loo_cv(np.zeros((4, 3)), [1, 1, 1, 1], spec)


class TestKernels:
    def test_linear_kernel_is_zscored_dot(self):
        x, _ = marginal_data(4)
        kern = ev.fit_kernel(ev.pipeline_spec("marginal-haar"), x)
        z = (x - x.mean(0)) / x.std(0, ddof=1)
        np.testing.assert_allclose(kern(x), z @ z.T, atol=1e-10)

    def test_logeuclidean_matches_gram(self):
        rng = np.random.default_rng(5)
        cs = np.stack([random_spd(rng, 3, 20) for _ in range(5)])
        kern = ev.fit_kernel(ev.pipeline_spec("cov-grad"), cs)
        np.testing.assert_allclose(kern(cs), spd.gram_matrix(cs, np.eye(3)), atol=1e-14)
        np.testing.assert_allclose(kern(cs[:2], cs), spd.gram_matrix(cs, np.eye(3))[:2], atol=1e-14)


class TestPipelines:
    def test_specs(self):
        g = ev.PIPELINES["cov-grad"]
        assert (g.feature, g.estimator, g.kernel_ref, g.scale) == ("gradient", "mcd", "identity", 1 / 8)
        assert ev.PIPELINES["cov-gabor"].kernel_ref == "riemannian-mean"
        assert ev.PIPELINES["marginal-haar"].size == (128, 128)
        with pytest.raises(ValueError):
            ev.pipeline_spec("sift")

    def test_input_sizes(self):
        assert ev.PIPELINES["cov-grad"].input_size((400, 400)) == (50, 50)
        assert ev.PIPELINES["cov-gabor"].input_size((400, 400)) == (400, 400)
        assert ev.PIPELINES["marginal-haar"].input_size((400, 400)) == (128, 128)

    def test_small_image_shapes(self):
        img = ev.synth_texture(0, 64, seed=1)
        fast = ev.pipeline_spec("cov-grad", scale=0.5)
        assert ev.run_pipeline(fast, img).shape == (7, 7)
        assert ev.run_pipeline(ev.pipeline_spec("marginal-haar"), img).shape == (8,)
        c = ev.run_pipeline(ev.pipeline_spec("cov-gabor"), img)
        assert c.shape == (12, 12) and spd.is_spd(c)


class TestSynth:
    def test_deterministic(self):
        a = ev.synth_texture(1, 64, seed=7)
        b = ev.synth_texture(1, 64, seed=7)
        assert a.tobytes() == b.tobytes()

    def test_range(self):
        img = ev.synth_texture(0, 128, seed=3)
        assert img.min() == 0.0 and img.max() == 1.0

    def test_finest_scale_energy_ordering(self):
        fine = {c: np.mean([wavelets.marginals_2d(ev.synth_texture(c, 128, seed=s))[0]
                            for s in range(5)]) for c in (0, 1)}
        assert fine[0] > fine[1]

    def test_dataset_layout(self):
        ids, imgs, y = ev.synth_dataset(2, 64, seed=0)
        assert ids == ["c0_000", "c0_001", "c1_000", "c1_001"]
        assert list(y) == [-1, -1, 1, 1]
        assert not np.array_equal(imgs[0], imgs[1])

    @pytest.mark.parametrize("kw", [{"class_id": 2}, {"class_id": 0, "side": 100},
                                    {"class_id": 0, "side": 32}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ev.synth_texture(**kw)


def test_report_and_predictions_format():
    x, y = marginal_data(4)
    spec = ev.pipeline_spec("marginal-haar")
    rep = ev.loo_cv(x, y, spec)
    text = ev.format_report(rep, spec, (128, 128))
    lines = text.splitlines()
    assert lines[0].split() == ["feature", "marginal-haar"]
    assert lines[1].split() == ["image", "size", "128x128"]
    assert lines[2].split() == ["kernel", "type", "linear"]
    assert sum(1 for ln in lines if ln.split() and ln.split()[0] in ("1", "10", "100", "1000",
                                                                      "10000", "100000")) == 6
    pred = ev.format_predictions(["a", "b"], [1, None], [1, -1], [0.5, -2.0])
    assert pred == "a +1 +1 0.5\nb - -1 -2\n"
