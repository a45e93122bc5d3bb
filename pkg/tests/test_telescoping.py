import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from n2ce import telescoping as tele
from n2ce.models import MlpRatioModel


class TestSigmaSchedule:
    def test_presets(self):
        k3 = tele.sigma_schedule(preset=tele.K3_PAPER)
        k6 = tele.sigma_schedule(preset=tele.K6_PAPER)
        assert k3.K == 3 and k6.K == 6
        assert k3.sigma_sq[0] == 0.01
        assert np.allclose(k6.sigma_sq[-1], 0.9997)

    def test_custom_values(self):
        sched = tele.sigma_schedule(values=[0.1, 0.5, 1.0])
        assert sched.K == 2
        assert np.allclose(sched.sigmas ** 2, sched.sigma_sq)

    def test_exactly_one_source(self):
        with pytest.raises(ValueError):
            tele.sigma_schedule()
        with pytest.raises(ValueError):
            tele.sigma_schedule(preset=tele.K3_PAPER, values=[0.5, 1.0])

    def test_unknown_preset(self):
        with pytest.raises(ValueError):
            tele.sigma_schedule(preset="K9")

    @pytest.mark.parametrize("values", [
        [0.5, 0.4],          # not increasing
        [0.5, 0.5],          # not strict
        [0.0, 0.5],          # nonpositive
        [0.5, 1.5],          # above one
        [],
    ])
    def test_invalid_ladders_rejected(self, values):
        with pytest.raises(ValueError):
            tele.sigma_schedule(values=values)

    @given(st.integers(min_value=1, max_value=12))
    @settings(max_examples=12, deadline=None)
    def test_general_schedule_endpoints_and_monotonicity(self, K):
        sched = tele.general_sigma_schedule(K)
        vals = np.asarray(sched.sigma_sq)
        assert sched.K == K
        assert vals[0] == pytest.approx(0.01)
        assert vals[-1] == pytest.approx(0.9997, abs=1e-6)
        assert np.all(np.diff(vals) > 0)


class TestStageWeights:
    def test_formula(self):
        sched = tele.sigma_schedule(preset=tele.K3_PAPER)
        weights = tele.stage_weights(sched).w
        sig = sched.sigmas
        for k, w in enumerate(weights):
            assert w == pytest.approx(np.sqrt(sig[-1] / np.prod(sig[k:])))
        # dropping sub-unit factors raises the product, so weights shrink
        # along the ladder and the top stage carries weight 1
        assert np.all(np.diff(weights) < 0)
        assert weights[-1] == pytest.approx(1.0)

    def test_positive_required(self):
        with pytest.raises(ValueError):
            tele.StageWeights((1.0, -1.0))


class TestInterpolation:
    @given(st.floats(min_value=0.0, max_value=1.0))
    @settings(max_examples=40, deadline=None)
    def test_variance_preserved(self, sigma):
        # independent unit-variance endpoints blend to unit variance
        rng = np.random.default_rng(0)
        z0 = rng.standard_normal(200000)
        zK1 = rng.standard_normal(200000)
        blend = tele.interpolate_stage(z0, zK1, sigma)
        assert np.var(blend) == pytest.approx(1.0, abs=0.02)

    def test_endpoints(self):
        z0 = np.array([1.0, 2.0])
        zK1 = np.array([-3.0, 4.0])
        assert np.allclose(tele.interpolate_stage(z0, zK1, 0.0), z0)
        assert np.allclose(tele.interpolate_stage(z0, zK1, 1.0), zK1)

    def test_out_of_range_sigma(self):
        with pytest.raises(ValueError):
            tele.interpolate_stage(np.zeros(2), np.zeros(2), 1.5)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            tele.interpolate_stage(np.zeros(2), np.zeros(3), 0.5)


class TestTelescopingLogRatio:
    def test_sums_stages(self):
        model = MlpRatioModel(2, hidden_width=8, num_resblocks=1,
                              num_stages=3, seed=0)
        z = np.array([[0.5, -0.5], [1.0, 1.0]])
        total = tele.telescoping_log_ratio(model, z)
        manual = sum(model.forward(z, k) for k in range(3))
        assert np.allclose(total, manual)

    def test_single_vector_returns_scalar(self):
        model = MlpRatioModel(2, hidden_width=8, num_resblocks=1,
                              num_stages=2, seed=0)
        assert isinstance(tele.telescoping_log_ratio(model, np.zeros(2)),
                          float)


class TestFitTelescoping:
    def _fit(self, **overrides):
        sched = tele.sigma_schedule(values=[0.01, 0.99])
        model = MlpRatioModel(2, hidden_width=16, num_resblocks=1,
                              num_stages=sched.K + 1, seed=0)
        kwargs = dict(iterations=30, batch_n1=8, seed=0)
        kwargs.update(overrides)
        return tele.fit_telescoping(
            tele.gaussian_target_sampler([1.0, 1.0]), sched, model, 4.0,
            **kwargs)

    def test_result_bookkeeping(self):
        result = self._fit()
        assert result.loss_trace.shape == (30,)
        assert result.stage_counts.sum() == 30
        assert np.all(np.isfinite(result.loss_trace))

    def test_scaled_negative_convention_caps(self):
        assert min(int(round(2e6)), tele.NEG_SAMPLE_CAP) == tele.NEG_SAMPLE_CAP

    def test_stage_count_mismatch_rejected(self):
        sched = tele.sigma_schedule(preset=tele.K3_PAPER)
        model = MlpRatioModel(2, hidden_width=8, num_resblocks=1,
                              num_stages=2, seed=0)
        with pytest.raises(ValueError):
            tele.fit_telescoping(tele.gaussian_target_sampler([0.0, 0.0]),
                                 sched, model, 4.0)

    def test_invalid_magnitude_rejected(self):
        sched = tele.sigma_schedule(values=[0.01, 0.99])
        model = MlpRatioModel(2, hidden_width=8, num_resblocks=1,
                              num_stages=2, seed=0)
        with pytest.raises(ValueError):
            tele.fit_telescoping(tele.gaussian_target_sampler([0.0, 0.0]),
                                 sched, model, 0.5)

    def test_unknown_convention_rejected(self):
        with pytest.raises(ValueError):
            self._fit(convention="other")

    def test_deterministic_given_seed(self):
        a = self._fit().model.get_params()
        b = self._fit().model.get_params()
        assert np.array_equal(a, b)
