import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calsharp import recal, synth
from calsharp.data import PredictionSet, SplitSpec, confidence_view, split
from calsharp.errors import ValidationError
from calsharp.metrics import binned_ece, nll
from calsharp.recal import (
    HistogramBinner,
    MeanReplacement,
    TemperatureScaler,
    fit_histogram_binning,
    fit_isotonic,
    fit_mrr,
    fit_temperature,
    golden_section_min,
    isotonic_fit_1d,
    pava,
    step_lookup,
)


class TestGoldenSection:
    def test_quadratic(self):
        assert golden_section_min(lambda x: (x - 0.3) ** 2, -2.0, 5.0, tol=1e-9) == pytest.approx(0.3, abs=1e-8)

    def test_boundary_minimum(self):
        assert golden_section_min(lambda x: x, 0.0, 1.0, tol=1e-8) == pytest.approx(0.0, abs=1e-7)


class TestTemperature:
    def test_recovers_temperature(self):
        ps = synth.temperature_world(10_000, k=10, t_star=2.0, seed=0)
        assert fit_temperature(ps).temperature == pytest.approx(2.0, abs=0.1)

    def test_already_optimal(self):
        ps = synth.temperature_world(10_000, k=10, t_star=1.0, seed=1)
        assert fit_temperature(ps).temperature == pytest.approx(1.0, abs=0.1)

    def test_probs_only_matches_logits(self):
        ps = synth.temperature_world(2000, k=5, t_star=2.0, seed=2)
        t_logits = fit_temperature(ps).temperature
        t_probs = fit_temperature(PredictionSet(ps.probs, ps.labels)).temperature
        assert t_probs == pytest.approx(t_logits, rel=1e-4)

    def test_argmax_and_objective(self):
        ps = synth.temperature_world(3000, k=4, t_star=0.5, seed=3)
        ts = fit_temperature(ps)
        out = ts.apply(ps)
        np.testing.assert_array_equal(out.stored_pred, np.argmax(ps.probs, axis=1))
        np.testing.assert_array_equal(np.argmax(out.probs, axis=1), out.stored_pred)
        assert nll(out.predictions) <= nll(ps) + 1e-12

    def test_identity_at_one(self):
        ps = synth.temperature_world(50, k=3, seed=4)
        np.testing.assert_allclose(TemperatureScaler(1.0).apply(ps).probs, ps.probs, atol=1e-15)

    def test_high_temperature_uniform(self):
        ps = PredictionSet.from_logits([[2.0, 0.0]], [0])
        np.testing.assert_allclose(TemperatureScaler(100.0).apply(ps).probs[0], [0.505, 0.495], atol=1e-4)

    def test_degenerate_one_hot(self):
        ps = PredictionSet(np.eye(3)[[0, 1, 2, 0]], [0, 1, 2, 1])
        with pytest.warns(RuntimeWarning):
            ts = fit_temperature(ps)
        assert ts.temperature == recal.T_MIN

    def test_mixed_one_hot_no_warning(self):
        ps = PredictionSet([[1.0, 0.0], [0.7, 0.3]], [0, 1])
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            ts = fit_temperature(ps)
        assert np.all(np.isfinite(ts.apply(ps).probs))

    def test_bounds(self):
        with pytest.raises(ValidationError):
            TemperatureScaler(0.001)
        with pytest.raises(ValidationError):
            TemperatureScaler(101.0)


class TestHistogramBinning:
    def test_single_bin_lookup(self):
        labels = np.array([0] * 7 + [1] * 3)
        ps = PredictionSet(np.tile([0.62, 0.38], (10, 1)), labels)
        hb = fit_histogram_binning(ps, bins=15)
        raw_0 = hb.values[0, 9]
        raw_1 = hb.values[1, 5]
        assert (raw_0, raw_1) == pytest.approx((0.7, 0.3))
        np.testing.assert_allclose(hb.apply(ps).probs, np.tile([0.7, 0.3], (10, 1)), atol=1e-15)

    def test_one_bin_marginals(self):
        rng = np.random.default_rng(0)
        ps = PredictionSet(rng.dirichlet(np.ones(4), 400), rng.integers(0, 4, 400))
        out = fit_histogram_binning(ps, bins=1).apply(ps)
        marg = np.bincount(ps.labels, minlength=4) / ps.n
        np.testing.assert_allclose(out.probs, np.tile(marg, (ps.n, 1)), atol=1e-15)

    def test_empty_bin_zero(self):
        cal = PredictionSet([[0.9, 0.1]] * 4, [0, 0, 1, 1])
        hb = fit_histogram_binning(cal, bins=10)
        assert hb.values[0, 8] == 0.0 and hb.values[1, 1] == 0.5
        out = hb.apply(PredictionSet([[0.85, 0.15]], [0]))
        # class 0 maps to an empty bin, so the label gets probability 0
        assert out.probs[0, 0] == 0.0
        assert nll(out.predictions) == np.inf

    def test_all_zero_row_is_uniform(self):
        hb = HistogramBinner(np.linspace(0, 1, 3), np.zeros((3, 2)))
        np.testing.assert_allclose(hb.apply(PredictionSet([[0.2, 0.3, 0.5]], [0])).probs, [[1 / 3] * 3])

    def test_values_in_unit_interval(self):
        ps = synth.temperature_world(2000, k=6, seed=5)
        hb = fit_histogram_binning(ps)
        assert hb.values.shape == (6, 15)
        assert np.all((hb.values >= 0) & (hb.values <= 1))
        np.testing.assert_allclose(hb.apply(ps).probs.sum(axis=1), 1.0, atol=1e-12)

    def test_bins_validated(self):
        with pytest.raises(ValidationError):
            fit_histogram_binning(PredictionSet([[0.5, 0.5]], [0]), bins=0)


class TestPava:
    @pytest.mark.parametrize(
        "ys, want",
        [([1, 2, 3], [1, 2, 3]), ([3, 1, 2], [2, 2, 2]), ([1, 3, 2, 4], [1, 2.5, 2.5, 4])],
    )
    def test_examples(self, ys, want):
        np.testing.assert_allclose(pava(ys), want, atol=1e-15)

    def test_weighted(self):
        np.testing.assert_allclose(pava([2.0, 0.0], [3.0, 1.0]), [1.5, 1.5])

    def test_bad_weights(self):
        with pytest.raises(ValidationError):
            pava([1.0, 2.0], [1.0, 0.0])

    @settings(max_examples=100)
    @given(st.lists(st.integers(-3, 3), min_size=1, max_size=8), st.lists(st.integers(1, 4), min_size=8, max_size=8))
    def test_matches_brute_force(self, ys, ws):
        w = np.array(ws[: len(ys)], dtype=float)
        got = pava(ys, w)
        assert np.all(np.diff(got) >= -1e-12)
        np.testing.assert_allclose(got, synth.brute_force_isotonic(ys, w), atol=1e-12)

    @settings(max_examples=50)
    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=30))
    def test_idempotent_and_mean_preserving(self, ys):
        out = pava(ys)
        np.testing.assert_allclose(pava(out), out, atol=1e-12)
        assert np.sum(out) == pytest.approx(np.sum(ys), abs=1e-9)


class TestIsotonic:
    def test_step_lookup(self):
        bp = np.array([0.1, 0.5, 0.8])
        fv = np.array([0.0, 0.4, 0.9])
        np.testing.assert_array_equal(step_lookup(bp, fv, np.array([0.0, 0.1, 0.49, 0.5, 0.79, 1.0])),
                                      [0.0, 0.0, 0.0, 0.4, 0.4, 0.9])

    def test_ties_pooled(self):
        ux, fx = isotonic_fit_1d([0.2, 0.2, 0.6], [1.0, 0.0, 1.0])
        np.testing.assert_array_equal(ux, [0.2, 0.6])
        np.testing.assert_allclose(fx, [0.5, 1.0])

    def test_calibrated_near_identity(self):
        v = synth.ContinuousWorld(0.0, 0.5, 1.0).sample_view(20_000, 0)
        ux, fx = isotonic_fit_1d(v.conf, v.hit)
        q = np.linspace(0.55, 0.95, 9)
        np.testing.assert_allclose(step_lookup(ux, fx, q), q, atol=0.05)

    def test_zero_at_low_end(self):
        cal = PredictionSet([[0.9, 0.1], [0.8, 0.2], [0.3, 0.7]], [0, 0, 1])
        ir = fit_isotonic(cal)
        assert ir.fitted[1][0] == 0.0
        out = ir.apply(PredictionSet([[0.95, 0.05]], [1]))
        assert nll(out.predictions) == np.inf

    def test_matches_sklearn(self):
        sk = pytest.importorskip("sklearn.isotonic")
        rng = np.random.default_rng(1)
        x = rng.random(500)
        y = (rng.random(500) < x).astype(float)
        ux, fx = isotonic_fit_1d(x, y)
        order = np.argsort(x)
        want = sk.isotonic_regression(y[order])
        np.testing.assert_allclose(fx, want, atol=1e-12)

    def test_monotone_and_argmax_may_change(self):
        ps = synth.temperature_world(3000, k=5, t_star=2.0, seed=6)
        cal, test = split(ps, SplitSpec(0.2, 0))
        ir = fit_isotonic(cal)
        for f in ir.fitted:
            assert np.all(np.diff(f) >= 0)
            assert np.all((f >= 0) & (f <= 1))
        out = ir.apply(test)
        np.testing.assert_array_equal(out.stored_pred, np.argmax(out.probs, axis=1))


class TestMRR:
    def test_k3_example(self):
        cal = PredictionSet(np.tile([0.6, 0.3, 0.1], (10, 1)), [0] * 8 + [1, 2])
        r = fit_mrr(cal)
        assert r.h_bar == pytest.approx(0.8)
        out = r.apply(PredictionSet([[0.2, 0.5, 0.3]], [1]))
        np.testing.assert_allclose(out.probs, [[0.1, 0.8, 0.1]], atol=1e-15)
        np.testing.assert_array_equal(out.stored_pred, [1])

    def test_idempotent(self):
        ps = synth.temperature_world(500, k=4, seed=7)
        r = MeanReplacement(0.6)
        once = r.apply(ps)
        twice = r.apply(once.predictions)
        np.testing.assert_array_equal(twice.probs, once.probs)
        np.testing.assert_array_equal(twice.stored_pred, once.stored_pred)

    def test_low_h_bar_keeps_stored_pred(self):
        ps = PredictionSet([[0.2, 0.5, 0.3]], [1])
        out = MeanReplacement(0.2).apply(ps)
        assert out.stored_pred[0] == 1
        assert np.argmax(out.probs[0]) != 1
        assert confidence_view(out.predictions, out.stored_pred).hit[0] == 1

    def test_same_distribution_ece(self):
        world = synth.DiscreteWorld((synth.Level(0.9, 0.7, 0.5), synth.Level(0.6, 0.75, 0.5)), k=4)
        ps = synth.sample_discrete(world, 50_000, 8)
        cal, test = split(ps, SplitSpec(0.2, 1))
        out = fit_mrr(cal).apply(test)
        assert binned_ece(out.confidence_view()) < 0.01

    def test_sharp_baseline_nll_increases(self):
        ps = synth.temperature_world(5000, k=10, t_star=1.0, scale=4.0, seed=9)
        assert nll(fit_mrr(ps).apply(ps).predictions) > nll(ps)


class TestApplyAndSerialize:
    def test_k_mismatch(self):
        hb = fit_histogram_binning(PredictionSet([[0.5, 0.5]], [0]))
        with pytest.raises(ValidationError):
            recal.apply(hb, PredictionSet([[0.2, 0.3, 0.5]], [0]))

    def test_identity(self):
        ps = PredictionSet([[0.2, 0.8]], [1])
        out = recal.identity(ps)
        np.testing.assert_array_equal(out.probs, ps.probs)
        assert out.stored_pred[0] == 1

    @pytest.mark.parametrize("method", sorted(recal.FITTERS))
    def test_round_trip(self, method):
        ps = synth.temperature_world(600, k=3, seed=10)
        r = recal.FITTERS[method](ps)
        back = recal.from_dict(json.loads(json.dumps(r.to_dict())))
        np.testing.assert_array_equal(back.apply(ps).probs, r.apply(ps).probs)

    def test_unknown_variant(self):
        with pytest.raises(ValidationError):
            recal.from_dict({"variant": "platt"})

    def test_rows_sum_to_one(self):
        ps = synth.temperature_world(1000, k=7, seed=11)
        for fit in recal.FITTERS.values():
            out = fit(ps).apply(ps)
            np.testing.assert_allclose(out.probs.sum(axis=1), 1.0, atol=1e-6)
            assert out.stored_pred.shape == (ps.n,)
