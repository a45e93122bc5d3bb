"""Contrastive objectives over a density ratio model.

The noise-amplified family evaluates, for noise magnitude M,
    L_M = E_q*[log(r / (M + r))] + M * E_q0[log(M / (M + r))],
whose M=1 case is standard NCE and whose M -> infinity limit recovers the
NWJ form of the KL bound. Everything is computed in the log domain via
softplus; raw ratios are exponentiated only where NWJ demands it, under a
cap with an explicit error on overflow.
"""
from dataclasses import dataclass

import numpy as np

from .models import GaussianLocationModel

NWJ_CAP_DEFAULT = 30.0
_EXP_OVERFLOW = 709.0  # exp() overflows double precision past this

NCE = "NCE"
N2CE = "N2CE"
NWJ = "NWJ"
NEG_REWEIGHT = "NEG_REWEIGHT"
MLE_EXACT = "MLE_EXACT"
_TAGS = (NCE, N2CE, NWJ, NEG_REWEIGHT, MLE_EXACT)


@dataclass(frozen=True)
class ObjectiveKind:
    """An estimator tag plus its noise magnitude where applicable."""
    tag: str
    noise_magnitude: float | None = None

    def __post_init__(self):
        if self.tag not in _TAGS:
            raise ValueError("unknown objective tag %r" % (self.tag,))
        if self.tag in (N2CE, NEG_REWEIGHT):
            if self.noise_magnitude is None or self.noise_magnitude < 1:
                raise ValueError("%s requires noise magnitude M >= 1" % self.tag)
        elif self.tag == NCE:
            if self.noise_magnitude not in (None, 1, 1.0):
                raise ValueError("NCE fixes M = 1")
            object.__setattr__(self, "noise_magnitude", 1.0)
        elif self.noise_magnitude is not None:
            raise ValueError("%s carries no noise magnitude" % self.tag)


@dataclass
class GradEstimate:
    """A parameter-space gradient estimate with sample-count metadata."""
    vector: np.ndarray
    n_pos: int
    n_neg: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.vector)):
            raise FloatingPointError("non-finite gradient estimate")


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0,
                    1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def weight_fn(M, r):
    """Positive-term weight M / (M + r); its complement is the negative one."""
    if M <= 0 or np.any(np.asarray(r) <= 0):
        raise ValueError("M and r must be positive")
    return M / (M + r)


def _check_samples(pos, neg):
    pos = np.atleast_2d(np.asarray(pos, dtype=float))
    neg = np.atleast_2d(np.asarray(neg, dtype=float))
    if pos.shape[0] == 0 or neg.shape[0] == 0:
        raise ValueError("sample sets must be nonempty")
    return pos, neg


def n2ce_objective(model, pos, neg, M, ratio_penalty=0.0):
    """Noise-amplified contrastive objective, log-domain.

    log(r/(M+r)) = -softplus(log M - f) and log(M/(M+r)) = -softplus(f - log M)
    for f = log r. An optional direct ratio penalty rho * mean(f^2) over both
    sample sets is subtracted when ratio_penalty > 0.
    """
    pos, neg = _check_samples(pos, neg)
    logM = np.log(M)
    f_pos = model.log_ratio(pos)
    f_neg = model.log_ratio(neg)
    value = -softplus(logM - f_pos).mean() - M * softplus(f_neg - logM).mean()
    if ratio_penalty > 0.0:
        value -= ratio_penalty * (np.concatenate([f_pos, f_neg]) ** 2).mean()
    return float(value)


def n2ce_gradient(model, pos, neg, M, ratio_penalty=0.0):
    """Exact parameter gradient of n2ce_objective on the same samples.

    mean_pos((M/(M+r)) d log r) - M * mean_neg((r/(M+r)) d log r), with the
    weights evaluated as sigmoids of f - log M so no ratio is materialized.
    """
    pos, neg = _check_samples(pos, neg)
    logM = np.log(M)
    f_pos = model.log_ratio(pos)
    f_neg = model.log_ratio(neg)
    w_pos = sigmoid(logM - f_pos)
    w_neg = sigmoid(f_neg - logM)
    vec = (model.weighted_param_grad(pos, w_pos / pos.shape[0])
           - M * model.weighted_param_grad(neg, w_neg / neg.shape[0]))
    if ratio_penalty > 0.0:
        n_tot = pos.shape[0] + neg.shape[0]
        vec -= 2.0 * ratio_penalty / n_tot * (
            model.weighted_param_grad(pos, f_pos)
            + model.weighted_param_grad(neg, f_neg))
    return GradEstimate(vec, pos.shape[0], neg.shape[0])


def n2ce_gradient_model_negatives(model, pos, neg_model, M):
    """Gradient form with negatives drawn from the model itself.

    The population objective gradient can equally be written with both
    expectations weighted by M/(M+r) when the negative samples come from
    p_alpha rather than the noise; at small per-iteration budgets this form
    has far lower variance and is the one behind the trajectory-coincidence
    comparisons.
    """
    pos, neg_model = _check_samples(pos, neg_model)
    logM = np.log(M)
    w_pos = sigmoid(logM - model.log_ratio(pos))
    w_neg = sigmoid(logM - model.log_ratio(neg_model))
    vec = (model.weighted_param_grad(pos, w_pos / pos.shape[0])
           - model.weighted_param_grad(neg_model, w_neg / neg_model.shape[0]))
    return GradEstimate(vec, pos.shape[0], neg_model.shape[0])


def nce_objective(model, pos, neg):
    """Standard NCE: classify target samples against equal-weight noise."""
    return n2ce_objective(model, pos, neg, 1.0)


def nce_gradient(model, pos, neg):
    return n2ce_gradient(model, pos, neg, 1.0)


def _nwj_ratios(model, neg, cap):
    if cap > _EXP_OVERFLOW:
        raise FloatingPointError(
            "NWJ cap %g exceeds the double-precision exp() range" % cap)
    f_neg = np.minimum(model.log_ratio(neg), cap)
    r = np.exp(f_neg)
    if not np.all(np.isfinite(r)):
        raise FloatingPointError("ratio overflow in NWJ negative term")
    return r


def nwj_objective(model, pos, neg, cap=NWJ_CAP_DEFAULT):
    """NWJ bound value mean_pos(log r) - mean_neg(r), maximized."""
    pos, neg = _check_samples(pos, neg)
    r = _nwj_ratios(model, neg, cap)
    return float(model.log_ratio(pos).mean() - r.mean())


def nwj_gradient(model, pos, neg, cap=NWJ_CAP_DEFAULT):
    """Gradient mean_pos(d log r) - mean_neg(r d log r) of the NWJ bound."""
    pos, neg = _check_samples(pos, neg)
    r = _nwj_ratios(model, neg, cap)
    vec = (model.weighted_param_grad(pos, np.full(pos.shape[0], 1.0 / pos.shape[0]))
           - model.weighted_param_grad(neg, r / neg.shape[0]))
    return GradEstimate(vec, pos.shape[0], neg.shape[0])


def neg_reweight_objective(model, pos, neg, M):
    """Amplified weighting on the negative term only; positives keep NCE's."""
    pos, neg = _check_samples(pos, neg)
    logM = np.log(M)
    f_pos = model.log_ratio(pos)
    f_neg = model.log_ratio(neg)
    return float(-softplus(-f_pos).mean() - M * softplus(f_neg - logM).mean())


def neg_reweight_gradient(model, pos, neg, M):
    """mean_pos((1/(1+r)) d log r) - M * mean_neg((r/(M+r)) d log r)."""
    pos, neg = _check_samples(pos, neg)
    logM = np.log(M)
    w_pos = sigmoid(-model.log_ratio(pos))
    w_neg = sigmoid(model.log_ratio(neg) - logM)
    vec = (model.weighted_param_grad(pos, w_pos / pos.shape[0])
           - M * model.weighted_param_grad(neg, w_neg / neg.shape[0]))
    return GradEstimate(vec, pos.shape[0], neg.shape[0])


def mle_gradient_oracle(model, target_mean):
    """Population maximum-likelihood gradient for the Gaussian family.

    E_q*[d log r] - E_p_alpha[d log r] collapses to target_mean - alpha.
    """
    target_mean = np.asarray(target_mean, dtype=float)
    if target_mean.shape != model.mean.shape:
        raise ValueError("dimension mismatch")
    return target_mean - model.mean


def sigmoid_form_objective(model, pos, neg, stage, M):
    """Classification form E_pos[log s(f - log M)] + M E_neg[log(1 - s(...))]."""
    pos, neg = _check_samples(pos, neg)
    logM = np.log(M)
    f_pos = model.forward(pos, stage)
    f_neg = model.forward(neg, stage)
    # log s(u) = -softplus(-u); log(1 - s(u)) = -softplus(u)
    return float(-softplus(logM - f_pos).mean() - M * softplus(f_neg - logM).mean())


def sigmoid_form_stage_gradient(model, pos, neg, stage, M):
    """Per-stage classification gradient; algebraically the amplified one.

    d/dtheta log s(f - log M) = (1 - s(f - log M)) df, and the negative term
    contributes -M s(f - log M) df, so this must coincide with n2ce_gradient
    evaluated through the same f.
    """
    pos, neg = _check_samples(pos, neg)
    logM = np.log(M)
    w_pos = 1.0 - sigmoid(model.forward(pos, stage) - logM)
    w_neg = sigmoid(model.forward(neg, stage) - logM)
    vec = (model.weighted_param_grad(pos, w_pos / pos.shape[0], stage)
           - M * model.weighted_param_grad(neg, w_neg / neg.shape[0], stage))
    return GradEstimate(vec, pos.shape[0], neg.shape[0])


def binary_entropy(a, allow_endpoints=False):
    """h(a) = -a ln a - (1-a) ln(1-a), in nats."""
    if a in (0.0, 1.0):
        if allow_endpoints:
            return 0.0
        raise ValueError("binary_entropy requires a in (0, 1)")
    if not 0.0 < a < 1.0:
        raise ValueError("binary_entropy requires a in (0, 1)")
    return float(-a * np.log(a) - (1.0 - a) * np.log(1.0 - a))


def d_alpha_variational_value(model, pos, neg, M, with_stderr=False):
    """Monte-Carlo estimate of the interpolating divergence lower bound.

    With alpha = M/(1+M) and the contrastive bracket evaluated at the
    model's ratio, the bound reads
        D_alpha >= M * h(alpha) + alpha * bracket,
    tight when the model carries the true ratio. The scaling keeps both
    endpoints exact: the M=1 value is the Jensen-Shannon divergence and the
    M -> infinity value is the KL divergence (the M*h(alpha) term absorbs the
    log M offset of the bracket).
    """
    pos, neg = _check_samples(pos, neg)
    alpha = M / (1.0 + M)
    logM = np.log(M)
    t_pos = -softplus(logM - model.log_ratio(pos))
    t_neg = -M * softplus(model.log_ratio(neg) - logM)
    # M*h(alpha) = alpha*(M ln(1 + 1/M) + ln(M + 1)); evaluate through
    # log1p to stay exact at M = 1e9 where h itself underflows.
    m_h = alpha * (M * np.log1p(1.0 / M) + np.log1p(M))
    value = float(m_h + alpha * (t_pos.mean() + t_neg.mean()))
    if not with_stderr:
        return value
    var = (t_pos.var(ddof=1) / t_pos.shape[0]
           + t_neg.var(ddof=1) / t_neg.shape[0])
    return value, float(alpha * np.sqrt(var))


def _gauss_logpdf_1d(x, mean):
    return -0.5 * (x - mean) ** 2 - 0.5 * np.log(2.0 * np.pi)


def d_alpha_quadrature_oracle(mean1, mean0, M, tol=1e-6):
    """Quadrature value of the interpolating divergence for Gaussian pairs.

    Evaluates M * [(1-alpha) KL(q1 || m) + alpha KL(q0 || m)] with the
    mixture m = alpha q0 + (1-alpha) q1 on a +-10 sigma tensor grid,
    refining until successive trapezoid values agree to `tol`.
    """
    mean1 = np.atleast_1d(np.asarray(mean1, dtype=float))
    mean0 = np.atleast_1d(np.asarray(mean0, dtype=float))
    d = mean1.shape[0]
    if d > 2:
        raise ValueError("quadrature oracle supports dimension <= 2 only")
    lo = np.minimum(mean1, mean0) - 10.0
    hi = np.maximum(mean1, mean0) + 10.0
    alpha = M / (1.0 + M)

    def integrate(n):
        axes = [np.linspace(lo[i], hi[i], n) for i in range(d)]
        if d == 1:
            x = axes[0][:, None]
        else:
            g0, g1 = np.meshgrid(axes[0], axes[1], indexing="ij")
            x = np.stack([g0.ravel(), g1.ravel()], axis=1)
        logq1 = np.sum(_gauss_logpdf_1d(x, mean1), axis=1)
        logq0 = np.sum(_gauss_logpdf_1d(x, mean0), axis=1)
        logm = np.logaddexp(np.log(alpha) + logq0, np.log(1.0 - alpha) + logq1)
        integrand = ((1.0 - alpha) * np.exp(logq1) * (logq1 - logm)
                     + alpha * np.exp(logq0) * (logq0 - logm))
        if d == 1:
            return M * np.trapezoid(integrand, axes[0])
        return M * np.trapezoid(
            np.trapezoid(integrand.reshape(n, n), axes[1], axis=1), axes[0])

    n = 1001
    prev = integrate(n)
    for _ in range(8):
        n = 2 * n - 1
        cur = integrate(n)
        if abs(cur - prev) <= tol:
            return float(cur)
        prev = cur
    raise RuntimeError("quadrature failed to converge to tolerance")


def js_divergence_quadrature(mean1, mean0, tol=1e-6):
    """Direct Jensen-Shannon quadrature, an independent path from the oracle."""
    mean1 = np.atleast_1d(np.asarray(mean1, dtype=float))
    mean0 = np.atleast_1d(np.asarray(mean0, dtype=float))
    if mean1.shape[0] > 2:
        raise ValueError("quadrature supports dimension <= 2 only")
    lo = float(np.min(np.minimum(mean1, mean0)) - 10.0)
    hi = float(np.max(np.maximum(mean1, mean0)) + 10.0)
    d = mean1.shape[0]

    def integrate(n):
        axes = [np.linspace(lo, hi, n) for _ in range(d)]
        if d == 1:
            x = axes[0][:, None]
        else:
            g0, g1 = np.meshgrid(axes[0], axes[1], indexing="ij")
            x = np.stack([g0.ravel(), g1.ravel()], axis=1)
        q1 = np.exp(np.sum(_gauss_logpdf_1d(x, mean1), axis=1))
        q0 = np.exp(np.sum(_gauss_logpdf_1d(x, mean0), axis=1))
        m = 0.5 * (q1 + q0)
        with np.errstate(divide="ignore", invalid="ignore"):
            term = np.where(q1 > 0, q1 * np.log(q1 / m), 0.0) \
                + np.where(q0 > 0, q0 * np.log(q0 / m), 0.0)
        term *= 0.5
        if d == 1:
            return np.trapezoid(term, axes[0])
        return np.trapezoid(np.trapezoid(term.reshape(n, n), axes[1], axis=1), axes[0])

    n = 1001
    prev = integrate(n)
    for _ in range(8):
        n = 2 * n - 1
        cur = integrate(n)
        if abs(cur - prev) <= tol:
            return float(cur)
        prev = cur
    raise RuntimeError("quadrature failed to converge to tolerance")
