"""Multi-stage (telescoping) ratio estimation.

The ratio between a target and a standard normal base is factored into
K+1 stage ratios along a sigma schedule of spherically interpolated
intermediate distributions; one shared network with a stage-index
embedding implements the whole ensemble, and the sum of its stage outputs
is the telescoped log ratio.
"""
from dataclasses import dataclass

import numpy as np

from .models import AdamState, adam_step
from .objectives import sigmoid_form_objective, sigmoid_form_stage_gradient

K3_PAPER = "K3_PAPER"
K6_PAPER = "K6_PAPER"
_PRESETS = {
    K3_PAPER: [0.01, 0.69175489, 0.92238785, 0.99974058],
    K6_PAPER: [0.01, 0.3237, 0.5165, 0.6322, 0.7132, 0.7734, 0.9997],
}

SYMMETRIC = "symmetric"
SCALED_NEGATIVES = "scaled-negatives"
NEG_SAMPLE_CAP = 10 ** 6


@dataclass(frozen=True)
class SigmaSchedule:
    """Strictly increasing sigma-squared ladder, last value <= 1."""
    sigma_sq: tuple

    def __post_init__(self):
        vals = np.asarray(self.sigma_sq, dtype=float)
        if vals.ndim != 1 or vals.size < 1:
            raise ValueError("schedule needs at least one value")
        if np.any(vals <= 0) or vals[-1] > 1.0:
            raise ValueError("sigma^2 values must lie in (0, 1]")
        if np.any(np.diff(vals) <= 0):
            raise ValueError("sigma^2 values must be strictly increasing")
        object.__setattr__(self, "sigma_sq", tuple(float(v) for v in vals))

    @property
    def K(self):
        return len(self.sigma_sq) - 1

    @property
    def sigmas(self):
        return np.sqrt(np.asarray(self.sigma_sq))


def sigma_schedule(preset=None, values=None):
    """Build a schedule from a named paper preset or custom sigma^2 values."""
    if (preset is None) == (values is None):
        raise ValueError("give exactly one of preset or values")
    if preset is not None:
        if preset not in _PRESETS:
            raise ValueError("unknown preset %r" % (preset,))
        return SigmaSchedule(tuple(_PRESETS[preset]))
    return SigmaSchedule(tuple(values))


def general_sigma_schedule(K, first_sq=0.01, last_sq=0.9997):
    """A K-stage ladder in one-minus-cumulative-product-of-linear-betas space.

    Beta increments grow linearly with the stage index; the single scale
    factor is bisected so the ladder lands on the requested endpoints.
    The named presets always take priority over this construction.
    """
    if K < 1:
        raise ValueError("K must be >= 1")

    def ladder(c):
        betas = c * np.arange(1, K + 1)
        if np.any(betas >= 1):
            return None
        keep = (1.0 - first_sq) * np.cumprod(1.0 - betas)
        return np.concatenate([[first_sq], 1.0 - keep])

    lo, hi = 0.0, 2.0 / (K + 1)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        vals = ladder(mid)
        if vals is None or vals[-1] > last_sq:
            hi = mid
        else:
            lo = mid
    return SigmaSchedule(tuple(ladder(lo)))


@dataclass(frozen=True)
class StageWeights:
    """Per-stage objective weights w_k = sqrt(sigma_K / prod_{i>=k} sigma_i)."""
    w: tuple

    def __post_init__(self):
        if np.any(np.asarray(self.w) <= 0):
            raise ValueError("stage weights must be positive")


def stage_weights(schedule):
    sig = schedule.sigmas
    w = [np.sqrt(sig[-1] / np.prod(sig[k:])) for k in range(len(sig))]
    return StageWeights(tuple(float(v) for v in w))


def interpolate_stage(z0, zK1, sigma_k):
    """Variance-preserving blend sqrt(1 - sigma^2) z0 + sigma z_{K+1}."""
    if not 0.0 <= sigma_k <= 1.0:
        raise ValueError("sigma must lie in [0, 1]")
    z0 = np.asarray(z0, dtype=float)
    zK1 = np.asarray(zK1, dtype=float)
    if z0.shape != zK1.shape:
        raise ValueError("endpoint shapes disagree")
    return np.sqrt(1.0 - sigma_k ** 2) * z0 + sigma_k * zK1


def telescoping_log_ratio(model, z):
    """Sum of stage outputs: the log of the telescoped ratio product."""
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    total = None
    for k in range(model.num_stages):
        out = model.forward(z, k)
        total = out if total is None else total + out
    return float(total) if single else total


@dataclass
class FitResult:
    model: object
    loss_trace: np.ndarray
    stage_counts: np.ndarray


def fit_telescoping(target_sampler, schedule, model, M, iterations=1500,
                    batch_n1=64, seed=0, learning_rate=1e-3,
                    convention=SCALED_NEGATIVES, use_stage_weights=False,
                    coupled_draws=True, lr_decay=True):
    """Train the shared stage network on one uniformly sampled stage per step.

    Stage-k positives sit at sigma_{k+1} on the interpolation path (the top
    stage uses raw target draws) and negatives at sigma_k; under the
    scaled-negatives convention the negative batch is M times the positive
    one, capped. Draw coupling reuses one (z0, z_{K+1}) pool for both
    batches of a step; a config switch draws them independently.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    K = schedule.K
    if model.num_stages != K + 1:
        raise ValueError("model stage count must equal K + 1")
    sig = schedule.sigmas
    weights = stage_weights(schedule).w if use_stage_weights else None
    n_pos = batch_n1
    if convention == SCALED_NEGATIVES:
        n_neg = min(int(round(M * batch_n1)), NEG_SAMPLE_CAP)
    elif convention == SYMMETRIC:
        n_neg = batch_n1
    else:
        raise ValueError("unknown sample-size convention %r" % (convention,))

    rng = np.random.default_rng(seed)
    adam = AdamState(model.n_params, learning_rate=learning_rate)
    loss_trace = np.empty(iterations)
    stage_counts = np.zeros(K + 1, dtype=int)
    dim = model.input_dim

    def stage_batch(count, sigma, z0, zK1):
        if sigma is None:  # top of the ladder: raw target draws
            return zK1[:count]
        return interpolate_stage(z0[:count], zK1[:count], sigma)

    for it in range(iterations):
        if lr_decay:
            # hold the rate for the first half, then anneal linearly; the
            # annealing kills the stationary Adam wander around the optimum
            frac = 1.0 - it / iterations
            adam.learning_rate = learning_rate * min(1.0, 2.0 * frac)
        k = int(rng.integers(0, K + 1))
        stage_counts[k] += 1
        n_draw = max(n_pos, n_neg)
        z0 = rng.standard_normal((n_draw, dim))
        zK1 = target_sampler(n_draw, rng)
        sigma_pos = sig[k + 1] if k < K else None
        pos = stage_batch(n_pos, sigma_pos, z0, zK1)
        if coupled_draws:
            neg = stage_batch(n_neg, sig[k], z0, zK1)
        else:
            z0b = rng.standard_normal((n_neg, dim))
            zK1b = target_sampler(n_neg, rng)
            neg = stage_batch(n_neg, sig[k], z0b, zK1b)
        grad = sigmoid_form_stage_gradient(model, pos, neg, k, M).vector
        if weights is not None:
            grad = weights[k] * grad
        model.set_params(adam_step(adam, model.get_params(), grad,
                                   maximize=True))
        loss_trace[it] = sigmoid_form_objective(model, pos, neg, k, M)
    return FitResult(model, loss_trace, stage_counts)


def gaussian_target_sampler(mean):
    """Sampler closure for an identity-covariance Gaussian target."""
    mean = np.asarray(mean, dtype=float)

    def sample(count, rng):
        return mean + rng.standard_normal((count, mean.shape[0]))

    return sample
