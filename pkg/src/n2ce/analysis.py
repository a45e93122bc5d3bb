"""Experiment harness: ascent trajectories, bias/variance sweeps over the
noise magnitude M, the optimal-M scaling check, and the normalized-ascent
convergence bound for the exponential-family setting.

All randomness flows through numpy Generators seeded from explicit integer
lists, so every run is reproducible and independent of thread count.
"""
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .models import GaussianLocationModel
from .objectives import (
    MLE_EXACT, N2CE, NCE, NEG_REWEIGHT, NWJ,
    GradEstimate, ObjectiveKind,
    mle_gradient_oracle, n2ce_gradient, n2ce_gradient_model_negatives,
    neg_reweight_gradient, nwj_gradient, sigmoid,
)

# Appendix-style simulation presets: 2-D endpoints and the 5-D mirror pair.
TWO_D_TARGET = np.array([1.5, -0.8])
TWO_D_INIT = np.array([-2.0, 1.0])
FIVE_D_TARGET = np.array([-1.5, -0.75, 0.0, 0.75, 1.5])
FIVE_D_INIT = -FIVE_D_TARGET

NEGATIVES_NOISE = "noise"
NEGATIVES_MODEL = "model"


@dataclass
class TrajectoryConfig:
    target_mean: np.ndarray = field(default_factory=lambda: TWO_D_TARGET.copy())
    init_mean: np.ndarray = field(default_factory=lambda: TWO_D_INIT.copy())
    estimator: ObjectiveKind = field(default_factory=lambda: ObjectiveKind(N2CE, 1000.0))
    samples_per_iter: int = 4000
    step_size: float = 0.2
    iterations: int = 150
    seed: int = 0
    common_random_numbers: bool = True
    negatives: str = NEGATIVES_NOISE

    def __post_init__(self):
        self.target_mean = np.asarray(self.target_mean, dtype=float)
        self.init_mean = np.asarray(self.init_mean, dtype=float)
        if self.target_mean.shape != self.init_mean.shape:
            raise ValueError("target and init dimensions disagree")
        if self.negatives not in (NEGATIVES_NOISE, NEGATIVES_MODEL):
            raise ValueError("negatives must be 'noise' or 'model'")


@dataclass
class TrajectoryRecord:
    """Per-iteration distances to the optimum and gradient errors.

    `distances` covers iterations 0..T-1 (before each update);
    `final_distance` is measured after the last update.
    """
    distances: np.ndarray
    grad_errors: np.ndarray
    alphas: np.ndarray
    final_distance: float

    @property
    def mse(self):
        """Trajectory-averaged squared distance over iterations 0..T-1."""
        return float(np.mean(self.distances ** 2))


def _estimator_gradient(kind, model, target, pos, neg, negatives):
    tag = kind.tag
    if tag == MLE_EXACT:
        g = mle_gradient_oracle(model, target)
        return GradEstimate(g, 1, 1)
    if tag in (NCE, N2CE):
        M = kind.noise_magnitude
        if negatives == NEGATIVES_MODEL:
            return n2ce_gradient_model_negatives(model, pos, neg, M)
        return n2ce_gradient(model, pos, neg, M)
    if tag == NWJ:
        return nwj_gradient(model, pos, neg)
    if tag == NEG_REWEIGHT:
        return neg_reweight_gradient(model, pos, neg, kind.noise_magnitude)
    raise ValueError("estimator %r cannot drive a trajectory" % (tag,))


def trajectory_run(config, rng=None):
    """Plain gradient ascent on the chosen estimator.

    Positives come from q* and negatives from q0 (fresh draws each
    iteration); with negatives='model' the negative innovations are shifted
    by the current parameter instead, the low-variance form used for
    trajectory-coincidence comparisons. MLE_EXACT follows the deterministic
    oracle flow.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    target = config.target_mean
    d = target.shape[0]
    n, eta, T = config.samples_per_iter, config.step_size, config.iterations
    alpha = config.init_mean.copy()
    model = GaussianLocationModel(alpha)
    alphas = np.empty((T + 1, d))
    distances = np.empty(T)
    grad_errors = np.empty(T)
    for t in range(T):
        alphas[t] = model.mean
        distances[t] = np.linalg.norm(model.mean - target)
        if config.estimator.tag == MLE_EXACT:
            pos = neg = None
        else:
            eps_pos = rng.standard_normal((n, d))
            eps_neg = rng.standard_normal((n, d))
            pos = target + eps_pos
            neg = model.mean + eps_neg if config.negatives == NEGATIVES_MODEL \
                else eps_neg
        g = _estimator_gradient(config.estimator, model, target, pos, neg,
                                config.negatives).vector
        grad_errors[t] = np.linalg.norm(g - (target - model.mean))
        model.mean = model.mean + eta * g
    alphas[T] = model.mean
    return TrajectoryRecord(distances, grad_errors, alphas,
                            float(np.linalg.norm(model.mean - target)))


def trajectory_batch(base_config, estimators, seed=None):
    """Run several estimators under common random numbers.

    The same per-iteration standard-normal innovations feed every
    estimator (shifted by the relevant means), so trajectory differences
    reflect the estimators alone.
    """
    seed = base_config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    target = base_config.target_mean
    d = target.shape[0]
    n, eta, T = (base_config.samples_per_iter, base_config.step_size,
                 base_config.iterations)
    models = [GaussianLocationModel(base_config.init_mean.copy())
              for _ in estimators]
    alphas = [np.empty((T + 1, d)) for _ in estimators]
    distances = [np.empty(T) for _ in estimators]
    grad_errors = [np.empty(T) for _ in estimators]
    for t in range(T):
        eps_pos = rng.standard_normal((n, d))
        eps_neg = rng.standard_normal((n, d))
        pos = target + eps_pos
        for i, kind in enumerate(estimators):
            model = models[i]
            alphas[i][t] = model.mean
            distances[i][t] = np.linalg.norm(model.mean - target)
            if kind.tag == MLE_EXACT:
                neg = None
            elif base_config.negatives == NEGATIVES_MODEL:
                neg = model.mean + eps_neg
            else:
                neg = eps_neg
            g = _estimator_gradient(kind, model, target, pos, neg,
                                    base_config.negatives).vector
            grad_errors[i][t] = np.linalg.norm(g - (target - model.mean))
            model.mean = model.mean + eta * g
    records = []
    for i in range(len(estimators)):
        alphas[i][T] = models[i].mean
        records.append(TrajectoryRecord(
            distances[i], grad_errors[i], alphas[i],
            float(np.linalg.norm(models[i].mean - target))))
    return records


def gradient_error_vs_M(alpha, target, M_grid, n=10 ** 6, repeats=5, seed=0):
    """Mean gradient-estimate error against the exact gradient, per M.

    Common random numbers across the grid: each repeat draws one set of
    innovations and evaluates every M on it, so the decay across M is not
    confounded by sampling noise.
    """
    M_grid = list(M_grid)
    if not M_grid:
        raise ValueError("M grid must be nonempty")
    alpha = np.asarray(alpha, dtype=float)
    target = np.asarray(target, dtype=float)
    d = alpha.shape[0]
    exact = target - alpha
    errors = np.empty((repeats, len(M_grid)))
    for rep in range(repeats):
        rng = np.random.default_rng([seed, rep])
        pos = target + rng.standard_normal((n, d))
        neg = rng.standard_normal((n, d))
        f_pos = pos @ alpha - 0.5 * alpha @ alpha
        f_neg = neg @ alpha - 0.5 * alpha @ alpha
        for j, M in enumerate(M_grid):
            logM = np.log(M)
            g = (sigmoid(logM - f_pos) @ (pos - alpha) / n
                 - M * (sigmoid(f_neg - logM) @ (neg - alpha) / n))
            errors[rep, j] = np.linalg.norm(g - exact)
    mean = errors.mean(axis=0)
    stderr = (errors.std(axis=0, ddof=1) / np.sqrt(repeats)
              if repeats > 1 else np.zeros(len(M_grid)))
    return mean, stderr


@dataclass
class SweepRow:
    estimator: str
    M: float | None
    n: int
    repeats: int
    mse_mean: float
    mse_std: float


def _thread_count():
    env = os.environ.get("N2CE_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _sweep_one_run(entry_index, kind, dim, n, seed, run_index,
                   target, init, step_size, iterations):
    rng = np.random.default_rng([seed, entry_index, run_index])
    config = TrajectoryConfig(
        target_mean=target, init_mean=init, estimator=kind,
        samples_per_iter=n, step_size=step_size, iterations=iterations,
        seed=seed)
    return trajectory_run(config, rng=rng).mse


def mse_sweep(dim, n, M_grid, repeats, seed, target=None, init=None,
              step_size=0.2, iterations=150):
    """Trajectory-MSE sweep over estimator entries, mirroring the M tables.

    Run r of entry e owns the RNG stream seeded by (seed, e, r); repeats run
    concurrently and are aggregated by run index, so results are identical
    at any thread count.
    """
    if repeats < 2:
        raise ValueError("repeats must be >= 2 to report a std")
    if target is None:
        target = FIVE_D_TARGET if dim == 5 else TWO_D_TARGET
    if init is None:
        init = FIVE_D_INIT if dim == 5 else TWO_D_INIT
    rows = []
    workers = _thread_count()
    for e, kind in enumerate(M_grid):
        mses = np.empty(repeats)
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futs = {
                    pool.submit(_sweep_one_run, e, kind, dim, n, seed, r,
                                target, init, step_size, iterations): r
                    for r in range(repeats)}
                for fut, r in futs.items():
                    mses[r] = fut.result()
        else:
            for r in range(repeats):
                mses[r] = _sweep_one_run(e, kind, dim, n, seed, r,
                                         target, init, step_size, iterations)
        rows.append(SweepRow(
            estimator=kind.tag,
            M=kind.noise_magnitude,
            n=n, repeats=repeats,
            mse_mean=float(mses.mean()),
            mse_std=float(mses.std(ddof=1))))
    return rows


DEFAULT_OPTIMAL_M_GRID = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0,
                          256.0, 512.0)


def optimal_m_scaling_check(ns, repeats=100, seed=1,
                            M_values=DEFAULT_OPTIMAL_M_GRID):
    """Empirical argmin of the MSE over a geometric M grid, per sample size.

    Reports whether each argmin falls inside [sqrt(n), 10 sqrt(n)], the
    predicted scaling window for the optimal noise magnitude.
    """
    results = []
    grid = [ObjectiveKind(N2CE, M) for M in M_values]
    vacuous = len(M_values) < 2
    for n in ns:
        rows = mse_sweep(5, n, grid, repeats, seed)
        best = min(rows, key=lambda row: row.mse_mean)
        lo, hi = float(np.sqrt(n)), float(10.0 * np.sqrt(n))
        results.append({
            "n": n,
            "argmin_M": best.M,
            "bracket": (lo, hi),
            "within": bool(lo <= best.M <= hi),
            "vacuous": vacuous,
            "rows": rows,
        })
    return results


def empirical_condition_number(target, n_samples=10 ** 6, seed=0):
    """Condition number of E[T(x) T(x)^T] at the target parameter.

    T(x) extends the sufficient statistic with a constant coordinate,
    matching the second-moment matrix whose eigenvalue ratio drives the
    iteration bound.
    """
    target = np.asarray(target, dtype=float)
    rng = np.random.default_rng(seed)
    x = target + rng.standard_normal((n_samples, target.shape[0]))
    ext = np.hstack([x, -np.ones((n_samples, 1))])
    second_moment = ext.T @ ext / n_samples
    eigs = np.linalg.eigvalsh(second_moment)
    return float(eigs[-1] / eigs[0])


def normalized_ascent_converge(alpha0, target, M, delta, step=0.025,
                               n=10 ** 5, seed=0, constant=10.0,
                               kappa_samples=10 ** 6):
    """Normalized gradient ascent with the kappa^3 iteration budget.

    Iterates alpha <- alpha + step * g/||g|| until within `delta` of the
    target or the budget ceil(C kappa^3 ||alpha0 - target||^2 / delta^2)
    is exhausted. Zero-norm gradients skip the step and record a stall.
    """
    if M < 100:
        raise ValueError("the convergence bound assumes M >= 100")
    if delta <= 0:
        raise ValueError("delta must be positive")
    alpha0 = np.asarray(alpha0, dtype=float)
    target = np.asarray(target, dtype=float)
    kappa = empirical_condition_number(target, kappa_samples, seed)
    dist0_sq = float(np.sum((alpha0 - target) ** 2))
    bound = int(np.ceil(constant * kappa ** 3 * dist0_sq / delta ** 2))
    rng = np.random.default_rng([seed, 1])
    model = GaussianLocationModel(alpha0.copy())
    d = target.shape[0]
    logM = np.log(M)
    stalls = 0
    first_hit = None
    for t in range(bound + 1):
        if np.linalg.norm(model.mean - target) <= delta:
            first_hit = t
            break
        pos = target + rng.standard_normal((n, d))
        neg = rng.standard_normal((n, d))
        g = n2ce_gradient(model, pos, neg, M).vector
        norm = np.linalg.norm(g)
        if norm == 0.0:
            stalls += 1
            continue
        model.mean = model.mean + step * g / norm
    return {
        "success": first_hit is not None,
        "first_hit": first_hit,
        "bound": bound,
        "kappa": kappa,
        "stalls": stalls,
    }


def loglog_slope(xs, ys):
    """Ordinary least-squares slope of ln(y) on ln(x)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.size < 2:
        raise ValueError("need at least two matching points")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("log-log slope requires positive values")
    lx, ly = np.log(xs), np.log(ys)
    lx = lx - lx.mean()
    return float(lx @ (ly - ly.mean()) / (lx @ lx))
