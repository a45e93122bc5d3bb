"""Optional figure rendering for the experiment CLI.

Every function writes a single PNG next to the CSV it illustrates; the
CLI only calls in here when figures are requested, so headless runs never
touch the plotting stack.
"""
import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_trajectories(records_by_label, path):
    """Distance-to-optimum curves, one line per estimator."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, record in records_by_label.items():
        ax.plot(np.arange(record.distances.size), record.distances,
                label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel("distance to optimum")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_mse_sweep(rows, path):
    """Trajectory MSE against noise magnitude, log-log with error bars."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ms = [row.M for row in rows if row.M is not None]
    means = [row.mse_mean for row in rows if row.M is not None]
    stds = [row.mse_std for row in rows if row.M is not None]
    ax.errorbar(ms, means, yerr=stds, marker="o", capsize=3)
    for row in rows:
        if row.M is None:
            ax.axhline(row.mse_mean, linestyle="--", color="gray",
                       label=row.estimator)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("noise magnitude M")
    ax.set_ylabel("trajectory MSE")
    if any(row.M is None for row in rows):
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_bias_decay(M_values, means, stderrs, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(M_values, means, yerr=stderrs, marker="o", capsize=3)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("noise magnitude M")
    ax.set_ylabel("gradient error")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_loss_trace(trace, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.arange(len(trace)), trace)
    ax.set_xlabel("iteration")
    ax.set_ylabel("stage objective")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_particles(particles, path, centers=None):
    """Scatter of 2-D sampler output, optionally with target mode centers."""
    particles = np.atleast_2d(particles)
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(particles[:, 0], particles[:, 1], s=12, alpha=0.6)
    if centers is not None:
        centers = np.atleast_2d(centers)
        ax.scatter(centers[:, 0], centers[:, 1], marker="x", color="red",
                   s=60)
    ax.set_xlabel("z1")
    ax.set_ylabel("z2")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_divergence(M_values, mc_values, quad_values, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(M_values, mc_values, marker="o", label="Monte-Carlo bound")
    ax.plot(M_values, quad_values, marker="s", label="quadrature")
    ax.set_xscale("log")
    ax.set_xlabel("noise magnitude M")
    ax.set_ylabel("divergence value")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
