import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from n2ce import analysis
from n2ce.objectives import MLE_EXACT, N2CE, NCE, NWJ, ObjectiveKind


class TestTrajectory:
    def test_mle_converges_geometrically(self):
        config = analysis.TrajectoryConfig(
            estimator=ObjectiveKind(MLE_EXACT), iterations=60)
        record = analysis.trajectory_run(config)
        # alpha <- alpha + eta (target - alpha) contracts by (1 - eta)
        expected = (np.linalg.norm(analysis.TWO_D_INIT - analysis.TWO_D_TARGET)
                    * (1.0 - config.step_size) ** 60)
        assert record.final_distance == pytest.approx(expected, rel=1e-9)

    def test_mle_gradient_error_zero(self):
        config = analysis.TrajectoryConfig(
            estimator=ObjectiveKind(MLE_EXACT), iterations=5)
        record = analysis.trajectory_run(config)
        assert np.all(record.grad_errors == 0.0)

    def test_record_shapes(self):
        config = analysis.TrajectoryConfig(iterations=12,
                                           samples_per_iter=100)
        record = analysis.trajectory_run(config)
        assert record.distances.shape == (12,)
        assert record.grad_errors.shape == (12,)
        assert record.alphas.shape == (13, 2)
        assert record.mse == pytest.approx(np.mean(record.distances ** 2))

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            analysis.TrajectoryConfig(target_mean=[1.0, 2.0],
                                      init_mean=[0.0, 0.0, 0.0])

    def test_bad_negatives_mode_rejected(self):
        with pytest.raises(ValueError):
            analysis.TrajectoryConfig(negatives="other")

    def test_batch_matches_marginal_runs_for_mle(self):
        base = analysis.TrajectoryConfig(iterations=20, samples_per_iter=50)
        records = analysis.trajectory_batch(
            base, [ObjectiveKind(MLE_EXACT)], seed=0)
        solo = analysis.trajectory_run(analysis.TrajectoryConfig(
            estimator=ObjectiveKind(MLE_EXACT), iterations=20,
            samples_per_iter=50))
        assert np.allclose(records[0].alphas, solo.alphas)

    def test_batch_shares_innovations(self):
        # two copies of the same estimator under CRN must coincide exactly
        base = analysis.TrajectoryConfig(iterations=15, samples_per_iter=200)
        kind = ObjectiveKind(N2CE, 50.0)
        records = analysis.trajectory_batch(base, [kind, kind], seed=3)
        assert np.array_equal(records[0].alphas, records[1].alphas)


class TestGradientErrorVsM:
    def test_monotone_decay_on_example(self):
        means, _ = analysis.gradient_error_vs_M(
            analysis.TWO_D_INIT, analysis.TWO_D_TARGET,
            [10.0, 100.0, 1000.0], n=200000, repeats=2, seed=0)
        assert means[0] > means[1] > means[2]

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            analysis.gradient_error_vs_M([0.0], [1.0], [])


class TestMseSweep:
    GRID = [ObjectiveKind(NWJ), ObjectiveKind(N2CE, 10.0),
            ObjectiveKind(NCE)]

    def test_thread_count_invariance(self):
        kwargs = dict(dim=2, n=40, M_grid=self.GRID, repeats=6, seed=9,
                      iterations=20)
        os.environ["N2CE_THREADS"] = "1"
        try:
            serial = analysis.mse_sweep(**kwargs)
        finally:
            os.environ["N2CE_THREADS"] = "5"
        try:
            threaded = analysis.mse_sweep(**kwargs)
        finally:
            del os.environ["N2CE_THREADS"]
        for a, b in zip(serial, threaded):
            assert a == b

    def test_row_schema(self):
        rows = analysis.mse_sweep(2, 30, self.GRID, 3, 0, iterations=10)
        assert [r.estimator for r in rows] == [NWJ, N2CE, NCE]
        assert rows[0].M is None and rows[2].M == 1.0
        assert all(r.n == 30 and r.repeats == 3 for r in rows)
        assert all(np.isfinite(r.mse_mean) and r.mse_std >= 0 for r in rows)

    def test_single_repeat_rejected(self):
        with pytest.raises(ValueError):
            analysis.mse_sweep(2, 30, self.GRID, 1, 0)


class TestOptimalM:
    def test_vacuous_grid_flagged(self):
        results = analysis.optimal_m_scaling_check(
            [2], repeats=2, seed=0, M_values=(8.0,))
        assert results[0]["vacuous"] is True
        assert results[0]["argmin_M"] == 8.0


class TestConvergence:
    def test_condition_number_exceeds_one(self):
        kappa = analysis.empirical_condition_number(
            analysis.TWO_D_TARGET, n_samples=100000, seed=0)
        assert kappa > 1.0

    def test_small_m_rejected(self):
        with pytest.raises(ValueError):
            analysis.normalized_ascent_converge(
                analysis.TWO_D_INIT, analysis.TWO_D_TARGET, 50.0, 0.1)

    def test_nonpositive_delta_rejected(self):
        with pytest.raises(ValueError):
            analysis.normalized_ascent_converge(
                analysis.TWO_D_INIT, analysis.TWO_D_TARGET, 1000.0, 0.0)

    def test_already_converged_hits_immediately(self):
        result = analysis.normalized_ascent_converge(
            analysis.TWO_D_TARGET, analysis.TWO_D_TARGET, 1000.0, 0.5,
            n=1000, kappa_samples=10000)
        assert result["success"] and result["first_hit"] == 0


class TestLoglogSlope:
    @given(st.floats(min_value=-3.0, max_value=3.0),
           st.floats(min_value=0.1, max_value=10.0))
    @settings(max_examples=30, deadline=None)
    def test_exact_on_power_laws(self, slope, scale):
        xs = np.array([1.0, 2.0, 5.0, 10.0, 100.0])
        ys = scale * xs ** slope
        assert analysis.loglog_slope(xs, ys) == pytest.approx(slope,
                                                              abs=1e-9)

    def test_requires_positive_values(self):
        with pytest.raises(ValueError):
            analysis.loglog_slope([1.0, 2.0], [1.0, -1.0])

    def test_requires_two_points(self):
        with pytest.raises(ValueError):
            analysis.loglog_slope([1.0], [1.0])
