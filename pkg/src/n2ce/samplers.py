"""Gradient-based samplers: short-run Langevin dynamics and Stein
variational gradient descent with the adaptive median-distance bandwidth.
"""
import warnings
from dataclasses import dataclass

import numpy as np

from .models import AdamState, adam_step


@dataclass
class LangevinConfig:
    steps: int = 100
    step_size: float = 0.4
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1 or self.step_size <= 0:
            raise ValueError("steps must be >= 1 and step_size positive")


@dataclass
class SvgdConfig:
    steps: int = 500
    particle_count: int = 128
    initial_step: float = 0.4
    beta1: float = 0.9
    beta2: float = 0.999
    bandwidth_floor: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.particle_count < 1:
            raise ValueError("need at least one particle")
        if self.particle_count == 1:
            warnings.warn("single-particle SVGD degenerates to plain "
                          "gradient ascent", RuntimeWarning)


def langevin_run(log_density_grad, init, config):
    """Discretized Langevin chain z <- z + (s^2/2) grad log p(z) + s eps."""
    z = np.array(init, dtype=float)
    rng = np.random.default_rng(config.seed)
    s = config.step_size
    for t in range(config.steps):
        g = np.asarray(log_density_grad(z), dtype=float)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(
                "non-finite log-density gradient at step %d" % t)
        z = z + 0.5 * s * s * g + s * rng.standard_normal(z.shape)
    return z


def svgd_bandwidth(particles, floor=1e-6):
    """Median-distance heuristic h^2 = med^2 / (2 ln(Q+1)), floored."""
    particles = np.atleast_2d(np.asarray(particles, dtype=float))
    Q = particles.shape[0]
    if Q < 2:
        raise ValueError("bandwidth needs at least two particles")
    diff = particles[:, None, :] - particles[None, :, :]
    dist = np.sqrt(np.sum(diff ** 2, axis=-1))
    med = np.median(dist[np.triu_indices(Q, k=1)])
    return max(med ** 2 / (2.0 * np.log(Q + 1.0)), floor)


def svgd_phi(log_density_grad, particles, floor=1e-6):
    """The kernelized update direction: attraction plus repulsion.

    phi(z_i) = (1/Q) sum_j [k(z_j, z_i) grad log p(z_j) + grad_{z_j} k(z_j, z_i)]
    with the RBF kernel k(z, z') = exp(-||z - z'||^2 / (2 h^2)).
    """
    particles = np.atleast_2d(np.asarray(particles, dtype=float))
    Q = particles.shape[0]
    grads = np.asarray(log_density_grad(particles), dtype=float)
    if Q == 1:
        return grads
    h_sq = svgd_bandwidth(particles, floor)
    diff = particles[:, None, :] - particles[None, :, :]  # z_i - z_j
    sq = np.sum(diff ** 2, axis=-1)
    kern = np.exp(-sq / (2.0 * h_sq))  # symmetric
    # grad_{z_j} k(z_j, z_i) = (z_i - z_j)/h^2 * k
    attraction = kern @ grads
    repulsion = np.einsum("ij,ijd->id", kern, diff) / h_sq
    return (attraction + repulsion) / Q


def svgd_run(log_density_grad, init, config, return_trace=False):
    """SVGD with an adaptive-moment step and per-step bandwidth refresh."""
    z = np.atleast_2d(np.array(init, dtype=float))
    adam = AdamState(z.size, learning_rate=config.initial_step,
                     beta1=config.beta1, beta2=config.beta2)
    trace = []
    for t in range(config.steps):
        phi = svgd_phi(log_density_grad, z, config.bandwidth_floor)
        if not np.all(np.isfinite(phi)):
            raise FloatingPointError("non-finite SVGD direction at step %d" % t)
        flat = adam_step(adam, z.ravel(), phi.ravel(), maximize=True)
        z = flat.reshape(z.shape)
        if return_trace:
            trace.append(z.copy())
    if return_trace:
        return z, trace
    return z
