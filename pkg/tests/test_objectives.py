import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from n2ce import objectives as obj
from n2ce.models import GaussianLocationModel, MlpRatioModel, StageRatioModel

RNG = np.random.default_rng(11)
POS = np.array([1.5, -0.8]) + RNG.standard_normal((128, 2))
NEG = RNG.standard_normal((128, 2))


def fd_param_grad(fn, model, h=1e-6):
    base = model.get_params()
    grad = np.empty_like(base)
    for i in range(base.size):
        bump = np.zeros_like(base)
        bump[i] = h
        model.set_params(base + bump)
        hi = fn()
        model.set_params(base - bump)
        lo = fn()
        grad[i] = (hi - lo) / (2.0 * h)
    model.set_params(base)
    return grad


class TestObjectiveKind:
    def test_nce_forces_unit_magnitude(self):
        assert obj.ObjectiveKind(obj.NCE).noise_magnitude == 1.0
        assert obj.ObjectiveKind(obj.NCE, 1).noise_magnitude == 1.0
        with pytest.raises(ValueError):
            obj.ObjectiveKind(obj.NCE, 5.0)

    def test_n2ce_requires_magnitude(self):
        with pytest.raises(ValueError):
            obj.ObjectiveKind(obj.N2CE)
        with pytest.raises(ValueError):
            obj.ObjectiveKind(obj.N2CE, 0.5)

    def test_unknown_tag(self):
        with pytest.raises(ValueError):
            obj.ObjectiveKind("BOGUS", 1.0)


class TestBasicFunctions:
    @given(st.floats(min_value=-700, max_value=700))
    @settings(max_examples=50, deadline=None)
    def test_sigmoid_softplus_identity(self, x):
        # d softplus(x)/dx = sigmoid(x); also s(x) + s(-x) = 1
        s = float(obj.sigmoid(x))
        assert 0.0 <= s <= 1.0
        assert s + float(obj.sigmoid(-x)) == pytest.approx(1.0, abs=1e-12)

    def test_softplus_large_negative_is_zero(self):
        assert obj.softplus(-800.0) == 0.0
        assert obj.softplus(800.0) == pytest.approx(800.0)

    @given(st.floats(min_value=1.0, max_value=1e6),
           st.floats(min_value=1e-6, max_value=1e6))
    @settings(max_examples=50, deadline=None)
    def test_weight_fn_complement(self, M, r):
        w = obj.weight_fn(M, r)
        assert 0.0 < w < 1.0
        assert w + r / (M + r) == pytest.approx(1.0)

    def test_weight_fn_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            obj.weight_fn(0.0, 1.0)
        with pytest.raises(ValueError):
            obj.weight_fn(1.0, -1.0)

    def test_binary_entropy(self):
        assert obj.binary_entropy(0.5) == pytest.approx(np.log(2.0))
        assert obj.binary_entropy(0.0, allow_endpoints=True) == 0.0
        with pytest.raises(ValueError):
            obj.binary_entropy(0.0)


class TestGradientIdentities:
    """Every estimator gradient differentiates its own objective."""

    CASES = [
        ("n2ce",
         lambda m: obj.n2ce_objective(m, POS, NEG, 100.0),
         lambda m: obj.n2ce_gradient(m, POS, NEG, 100.0).vector),
        ("n2ce_penalized",
         lambda m: obj.n2ce_objective(m, POS, NEG, 100.0, ratio_penalty=0.1),
         lambda m: obj.n2ce_gradient(m, POS, NEG, 100.0,
                                     ratio_penalty=0.1).vector),
        ("nce",
         lambda m: obj.nce_objective(m, POS, NEG),
         lambda m: obj.nce_gradient(m, POS, NEG).vector),
        ("nwj",
         lambda m: obj.nwj_objective(m, POS, NEG),
         lambda m: obj.nwj_gradient(m, POS, NEG).vector),
        ("neg_reweight",
         lambda m: obj.neg_reweight_objective(m, POS, NEG, 10.0),
         lambda m: obj.neg_reweight_gradient(m, POS, NEG, 10.0).vector),
    ]

    @pytest.mark.parametrize("name,objective,gradient",
                             CASES, ids=[c[0] for c in CASES])
    def test_gaussian_model(self, name, objective, gradient):
        model = GaussianLocationModel([0.4, -0.6])
        analytic = gradient(model)
        fd = fd_param_grad(lambda: objective(model), model)
        rel = np.linalg.norm(analytic - fd) / max(np.linalg.norm(fd), 1e-12)
        assert rel <= 1e-6

    def test_mlp_model(self):
        mlp = StageRatioModel(
            MlpRatioModel(2, hidden_width=10, num_resblocks=2, num_stages=1,
                          seed=3), 0)
        analytic = obj.n2ce_gradient(mlp, POS[:32], NEG[:32], 50.0).vector
        fd = fd_param_grad(
            lambda: obj.n2ce_objective(mlp, POS[:32], NEG[:32], 50.0), mlp,
            h=1e-5)
        rel = np.linalg.norm(analytic - fd) / max(np.linalg.norm(fd), 1e-12)
        assert rel <= 1e-4

    def test_m_equal_one_reduces_to_nce(self):
        model = GaussianLocationModel([0.4, -0.6])
        assert obj.n2ce_objective(model, POS, NEG, 1.0) == pytest.approx(
            obj.nce_objective(model, POS, NEG), abs=1e-12)
        assert np.allclose(obj.n2ce_gradient(model, POS, NEG, 1.0).vector,
                           obj.nce_gradient(model, POS, NEG).vector,
                           atol=1e-12)

    def test_sigmoid_form_equals_direct(self):
        mlp = MlpRatioModel(2, hidden_width=10, num_resblocks=2,
                            num_stages=2, seed=4)
        view = StageRatioModel(mlp, 1)
        for M in (1.0, 7.0, 300.0):
            direct = obj.n2ce_gradient(view, POS, NEG, M)
            classif = obj.sigmoid_form_stage_gradient(mlp, POS, NEG, 1, M)
            assert np.allclose(direct.vector, classif.vector, atol=1e-10)
            assert obj.sigmoid_form_objective(mlp, POS, NEG, 1, M) == \
                pytest.approx(obj.n2ce_objective(view, POS, NEG, M),
                              abs=1e-10)

    def test_mle_oracle(self):
        model = GaussianLocationModel([0.0, 0.0])
        assert np.allclose(obj.mle_gradient_oracle(model, [1.5, -0.8]),
                           [1.5, -0.8])

    def test_model_negatives_population_agreement(self):
        # with negatives from the model both forms estimate the same
        # population gradient; check closeness at a large sample size
        rng = np.random.default_rng(7)
        model = GaussianLocationModel([0.5, 0.5])
        target = np.array([1.5, -0.8])
        n = 200000
        pos = target + rng.standard_normal((n, 2))
        neg_model = model.mean + rng.standard_normal((n, 2))
        neg_noise = rng.standard_normal((n, 2))
        g_model = obj.n2ce_gradient_model_negatives(
            model, pos, neg_model, 100.0).vector
        g_noise = obj.n2ce_gradient(model, pos, neg_noise, 100.0).vector
        assert np.allclose(g_model, g_noise, atol=0.05)


class TestNwjGuards:
    def test_cap_beyond_overflow_rejected(self):
        model = GaussianLocationModel([0.4, -0.6])
        with pytest.raises(FloatingPointError):
            obj.nwj_objective(model, POS, NEG, cap=710.0)

    def test_cap_clips_ratios(self):
        model = GaussianLocationModel([40.0, 0.0])
        value = obj.nwj_objective(model, POS, NEG, cap=30.0)
        assert np.isfinite(value)

    def test_empty_samples_rejected(self):
        model = GaussianLocationModel([0.0, 0.0])
        with pytest.raises(ValueError):
            obj.n2ce_objective(model, np.empty((0, 2)), NEG, 10.0)


class TestGradEstimate:
    def test_nonfinite_rejected(self):
        with pytest.raises(FloatingPointError):
            obj.GradEstimate(np.array([np.nan, 0.0]), 1, 1)

    def test_metadata(self):
        est = obj.n2ce_gradient(GaussianLocationModel([0.0, 0.0]),
                                POS[:10], NEG[:20], 5.0)
        assert est.n_pos == 10 and est.n_neg == 20


class TestDivergenceFamily:
    def test_quadrature_matches_direct_js_at_unit_magnitude(self):
        quad = obj.d_alpha_quadrature_oracle([1.0], [0.0], 1.0)
        js = obj.js_divergence_quadrature([1.0], [0.0])
        assert abs(quad - js) <= 1e-6

    def test_quadrature_kl_limit(self):
        # KL between N(1, 1) and N(0, 1) is 1/2
        quad = obj.d_alpha_quadrature_oracle([1.0], [0.0], 1e9)
        assert quad == pytest.approx(0.5, abs=1e-4)

    def test_identical_distributions_value_zero(self):
        rng = np.random.default_rng(3)
        model = GaussianLocationModel([0.0])
        pos = rng.standard_normal((50000, 1))
        neg = rng.standard_normal((50000, 1))
        value = obj.d_alpha_variational_value(model, pos, neg, 1.0)
        assert abs(value) <= 0.01

    def test_bound_tight_at_true_ratio(self):
        rng = np.random.default_rng(4)
        model = GaussianLocationModel([1.0])
        pos = 1.0 + rng.standard_normal((100000, 1))
        neg = rng.standard_normal((100000, 1))
        mc, stderr = obj.d_alpha_variational_value(model, pos, neg, 1.0,
                                                   with_stderr=True)
        quad = obj.d_alpha_quadrature_oracle([1.0], [0.0], 1.0)
        assert abs(mc - quad) <= 3.0 * stderr

    def test_bound_below_truth_for_wrong_ratio(self):
        rng = np.random.default_rng(5)
        wrong = GaussianLocationModel([0.3])
        pos = 1.0 + rng.standard_normal((100000, 1))
        neg = rng.standard_normal((100000, 1))
        mc = obj.d_alpha_variational_value(wrong, pos, neg, 1.0)
        quad = obj.d_alpha_quadrature_oracle([1.0], [0.0], 1.0)
        assert mc < quad + 1e-3
