"""Desk-scale targets and the simplified Branin offline optimization task.

The Branin pipeline treats the 2-D design space itself as the latent
space: a telescoping ratio prior is fit on the top-quantile design points,
a small network regressor predicts normalized function values, and a
particle sampler maximizes the resulting conditional energy. Only the
final particles are scored against the black box.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from .models import AdamState, MlpRatioModel, adam_step
from .samplers import LangevinConfig, SvgdConfig, langevin_run, svgd_run
from .telescoping import fit_telescoping, telescoping_log_ratio

BRANIN_DOMAIN = np.array([[-5.0, 10.0], [0.0, 15.0]])
BRANIN_A = 1.0
BRANIN_B = 5.1 / (4.0 * np.pi ** 2)
BRANIN_C = 5.0 / np.pi
BRANIN_R = 6.0
BRANIN_S = 10.0
BRANIN_T = 1.0 / (8.0 * np.pi)
BRANIN_MAXIMA = np.array([
    [-np.pi, 12.275],
    [np.pi, 2.275],
    [9.425, 2.475],
])
BRANIN_MAX_VALUE = -0.397887


def branin_value(x1, x2):
    """Negative of the standard 2-D Branin function (maximized)."""
    inner = x2 - BRANIN_B * x1 ** 2 + BRANIN_C * x1 - BRANIN_R
    return (-BRANIN_A * inner ** 2
            - BRANIN_S * (1.0 - BRANIN_T) * np.cos(x1) - BRANIN_S)


@dataclass
class BraninTask:
    """An offline dataset over the Branin domain with its post-filter maximum."""
    x: np.ndarray
    y: np.ndarray
    y_max: float
    domain: np.ndarray = field(default_factory=lambda: BRANIN_DOMAIN.copy())


def branin_dataset(N, remove_top_fraction=0.1, seed=0):
    """Uniform design draws with the top fraction by value removed."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if not 0.0 <= remove_top_fraction < 1.0:
        raise ValueError("remove_top_fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    lo, hi = BRANIN_DOMAIN[:, 0], BRANIN_DOMAIN[:, 1]
    x = lo + (hi - lo) * rng.random((N, 2))
    y = branin_value(x[:, 0], x[:, 1])
    keep = N - int(np.floor(remove_top_fraction * N))
    order = np.argsort(y)
    idx = order[:keep]
    x, y = x[idx], y[idx]
    return BraninTask(x=x, y=y, y_max=float(y.max()))


def dump_dataset_csv(task, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x1", "x2", "y"])
        for (x1, x2), y in zip(task.x, task.y):
            writer.writerow(["%.17g" % x1, "%.17g" % x2, "%.17g" % y])


def load_dataset_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["x1", "x2", "y"]:
            raise ValueError("unexpected dataset header %r" % (header,))
        rows = np.array([[float(v) for v in row] for row in reader])
    return BraninTask(x=rows[:, :2], y=rows[:, 2], y_max=float(rows[:, 2].max()))


@dataclass
class GmmTarget:
    """Equal-covariance isotropic Gaussian mixture."""
    means: np.ndarray
    variance: float
    weights: np.ndarray

    def __post_init__(self):
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        if self.variance <= 0:
            raise ValueError("variance must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")


def branin_optima_gmm(variance=0.25):
    """Three-component emulator of the ground-truth optima distribution."""
    return GmmTarget(BRANIN_MAXIMA.copy(), variance, np.full(3, 1.0 / 3.0))


def gmm_logdensity(target, z):
    """Log mixture density, batched over rows."""
    single = np.asarray(z).ndim == 1
    z = np.atleast_2d(np.asarray(z, dtype=float))
    d = z.shape[1]
    sq = np.sum((z[:, None, :] - target.means[None, :, :]) ** 2, axis=-1)
    logcomp = (-0.5 * sq / target.variance
               - 0.5 * d * np.log(2.0 * np.pi * target.variance)
               + np.log(target.weights))
    out = np.logaddexp.reduce(logcomp, axis=1)
    return float(out[0]) if single else out


def gmm_logdensity_grad(target, z):
    """Exact responsibility-weighted gradient of the log mixture density."""
    single = np.asarray(z).ndim == 1
    z = np.atleast_2d(np.asarray(z, dtype=float))
    diff = target.means[None, :, :] - z[:, None, :]
    sq = np.sum(diff ** 2, axis=-1)
    logcomp = -0.5 * sq / target.variance + np.log(target.weights)
    logcomp -= logcomp.max(axis=1, keepdims=True)
    resp = np.exp(logcomp)
    resp /= resp.sum(axis=1, keepdims=True)
    grad = np.einsum("nk,nkd->nd", resp, diff) / target.variance
    return grad[0] if single else grad


@dataclass
class ConditionalEnergy:
    """Energy -l1 (y_target - g(z))^2 + l2 (prior log-ratio - ||z||^2 / 2)."""
    predictor: object            # z -> predicted y, batched
    predictor_grad: object       # z -> d predicted / dz, batched
    prior_logratio_grad: object  # z -> d sum f / dz, batched
    y_target: float
    lambda1: float = 20.0
    lambda2: float = 1.0

    def __post_init__(self):
        if self.lambda1 <= 0 or self.lambda2 <= 0:
            raise ValueError("lambda weights must be positive")


def conditional_logdensity_grad(energy, z):
    """Gradient of the conditional energy w.r.t. the latent."""
    single = np.asarray(z).ndim == 1
    z = np.atleast_2d(np.asarray(z, dtype=float))
    g = np.asarray(energy.predictor(z), dtype=float)
    dg = np.asarray(energy.predictor_grad(z), dtype=float)
    dprior = np.asarray(energy.prior_logratio_grad(z), dtype=float)
    grad = (2.0 * energy.lambda1 * (energy.y_target - g)[:, None] * dg
            + energy.lambda2 * (dprior - z))
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite conditional energy gradient")
    return grad[0] if single else grad


def fit_value_regressor(z, y_norm, seed, hidden_width=64, num_resblocks=2,
                        iterations=2000, batch=128, learning_rate=2e-3):
    """Small network regression of normalized values by squared loss."""
    rng = np.random.default_rng(seed)
    model = MlpRatioModel(z.shape[1], hidden_width=hidden_width,
                          num_resblocks=num_resblocks, num_stages=1,
                          seed=seed)
    adam = AdamState(model.n_params, learning_rate=learning_rate)
    n = z.shape[0]
    for it in range(iterations):
        idx = rng.integers(0, n, batch)
        pred = model.forward(z[idx], 0)
        resid = pred - y_norm[idx]
        grad = model.weighted_param_grad(z[idx], 2.0 * resid / batch, 0)
        model.set_params(adam_step(adam, model.get_params(), grad))
    return model


def regressor_holdout_rmse(model, z, y_norm, holdout_fraction=0.1, seed=0):
    """RMSE on a held-out split; the sanity gate before any sampling."""
    rng = np.random.default_rng(seed)
    n = z.shape[0]
    perm = rng.permutation(n)
    n_hold = max(1, int(holdout_fraction * n))
    hold = perm[:n_hold]
    pred = model.forward(z[hold], 0)
    return float(np.sqrt(np.mean((pred - y_norm[hold]) ** 2)))


@dataclass
class BboResult:
    best_value: float
    candidates: np.ndarray
    candidate_values: np.ndarray
    queries_used: int
    y_max_dataset: float
    regressor_rmse: float


def bbo_run(task, schedule, M, sampler="SVGD", Q=128, seed=0,
            prior_quantile=0.25, prior_iterations=800, prior_batch=32,
            prior_stage_weights=True, regressor_iterations=2000,
            svgd_config=None, langevin_config=None):
    """Offline optimization: prior fit, value regression, energy sampling.

    Only the Q final particles are scored against the black box; an audit
    counter enforces the budget.
    """
    x, y = task.x, task.y
    # standardize designs so the standard-normal base of the prior is sane
    x_mean = x.mean(axis=0)
    x_std = x.std(axis=0)
    z_data = (x - x_mean) / x_std
    y_lo, y_hi = y.min(), y.max()
    y_norm = (y - y_lo) / (y_hi - y_lo)

    # telescoping ratio prior on the top-quantile design points
    cutoff = np.quantile(y, 1.0 - prior_quantile)
    top = z_data[y >= cutoff]
    prior = MlpRatioModel(2, hidden_width=64, num_resblocks=3,
                          num_stages=schedule.K + 1, seed=seed)

    def top_sampler(count, rng):
        return top[rng.integers(0, top.shape[0], count)]

    fit_telescoping(top_sampler, schedule, prior, M,
                    iterations=prior_iterations, batch_n1=prior_batch,
                    seed=[seed, 1], use_stage_weights=prior_stage_weights)

    regressor = fit_value_regressor(z_data, y_norm, seed=[seed, 2],
                                    iterations=regressor_iterations)
    rmse = regressor_holdout_rmse(regressor, z_data, y_norm, seed=seed)

    energy = ConditionalEnergy(
        predictor=lambda z: regressor.forward(z, 0),
        predictor_grad=lambda z: regressor.input_grad(z, 0),
        prior_logratio_grad=lambda z: sum(
            prior.input_grad(z, k) for k in range(prior.num_stages)),
        y_target=1.0)

    def energy_grad(z):
        return conditional_logdensity_grad(energy, z)

    rng = np.random.default_rng([seed, 3])
    init = rng.standard_normal((Q, 2))
    if sampler == "SVGD":
        cfg = svgd_config or SvgdConfig(particle_count=Q, seed=seed)
        finals = svgd_run(energy_grad, init, cfg)
    elif sampler == "LD":
        cfg = langevin_config or LangevinConfig(seed=seed)
        finals = langevin_run(energy_grad, init, cfg)
    else:
        raise ValueError("sampler must be 'SVGD' or 'LD'")

    # map back to the design box and spend the query budget
    cand = finals * x_std + x_mean
    lo, hi = task.domain[:, 0], task.domain[:, 1]
    cand = np.clip(cand, lo, hi)
    queries = 0
    values = np.empty(Q)
    for i in range(Q):
        values[i] = branin_value(cand[i, 0], cand[i, 1])
        queries += 1
    if queries > Q:
        raise RuntimeError("query budget exceeded")
    return BboResult(
        best_value=float(values.max()),
        candidates=cand,
        candidate_values=values,
        queries_used=queries,
        y_max_dataset=task.y_max,
        regressor_rmse=rmse)
