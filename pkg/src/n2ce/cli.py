"""Experiment runner.

Every harness is a subcommand producing headered CSV files plus a
resolved-config sidecar; re-running a subcommand from its sidecar
reproduces the CSVs byte for byte at any thread count. Failures exit
nonzero after emitting a machine-readable error record on stderr.
"""
import argparse
import csv
import json
import os
import sys

import numpy as np

from . import analysis, config as cfgmod, objectives, samplers, tasks
from . import telescoping as tele
from .config import ConfigError, estimator_from_spec, format_float
from .models import GaussianLocationModel, MlpRatioModel, StageRatioModel

SIDECAR_NAME = "resolved_config.yaml"

SUBCOMMANDS = ("gradcheck", "trajectory", "bias-decay", "mse-sweep",
               "optimal-m", "converge-expfam", "divergence-check",
               "telescope-fit", "svgd-sample", "langevin-sample", "branin")


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return "%d" % value
    if isinstance(value, (float, np.floating)):
        return format_float(float(value))
    return str(value)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _schedule_from(section):
    if section["sigma_sq"]:
        return tele.sigma_schedule(values=section["sigma_sq"])
    return tele.sigma_schedule(preset=section["schedule"])


def _fd_gradient(objective, model, h=1e-6):
    """Central finite differences of `objective()` over the model params."""
    base = model.get_params()
    grad = np.empty_like(base)
    for i in range(base.size):
        bump = np.zeros_like(base)
        bump[i] = h
        model.set_params(base + bump)
        hi = objective()
        model.set_params(base - bump)
        lo = objective()
        grad[i] = (hi - lo) / (2.0 * h)
    model.set_params(base)
    return grad


def _run_gradcheck(cfg, out_dir, figures):
    rng = np.random.default_rng(cfg["seed"])
    pos = np.array([1.5, -0.8]) + rng.standard_normal((64, 2))
    neg = rng.standard_normal((64, 2))
    gauss = GaussianLocationModel(np.array([0.3, -0.2]))
    mlp = StageRatioModel(
        MlpRatioModel(2, hidden_width=16, num_resblocks=2, num_stages=1,
                      seed=cfg["seed"]), 0)
    checks = [
        ("n2ce_gaussian", gauss, 1e-6,
         lambda m: objectives.n2ce_objective(m, pos, neg, 100.0),
         lambda m: objectives.n2ce_gradient(m, pos, neg, 100.0).vector),
        ("nce_gaussian", gauss, 1e-6,
         lambda m: objectives.nce_objective(m, pos, neg),
         lambda m: objectives.nce_gradient(m, pos, neg).vector),
        ("nwj_gaussian", gauss, 1e-6,
         lambda m: objectives.nwj_objective(m, pos, neg),
         lambda m: objectives.nwj_gradient(m, pos, neg).vector),
        ("neg_reweight_gaussian", gauss, 1e-6,
         lambda m: objectives.neg_reweight_objective(m, pos, neg, 10.0),
         lambda m: objectives.neg_reweight_gradient(m, pos, neg, 10.0).vector),
        ("n2ce_mlp", mlp, 1e-4,
         lambda m: objectives.n2ce_objective(m, pos, neg, 100.0),
         lambda m: objectives.n2ce_gradient(m, pos, neg, 100.0).vector),
    ]
    rows = []
    failures = []
    for name, model, tol, objective, gradient in checks:
        analytic = gradient(model)
        fd = _fd_gradient(lambda: objective(model), model)
        rel = float(np.linalg.norm(analytic - fd)
                    / max(np.linalg.norm(fd), 1e-12))
        ok = rel <= tol
        if not ok:
            failures.append(name)
        rows.append((name, rel, tol, ok))
    _write_csv(os.path.join(out_dir, "gradcheck.csv"),
               ["check", "rel_error", "tolerance", "passed"], rows)
    if failures:
        raise RuntimeError("gradient checks failed: %s" % ", ".join(failures))
    print("gradcheck: %d checks passed" % len(rows))


def _run_trajectory(cfg, out_dir, figures):
    section = cfg["trajectory"]
    kinds = [estimator_from_spec(s) for s in section["estimators"]]
    base = analysis.TrajectoryConfig(
        target_mean=section["target_mean"],
        init_mean=section["init_mean"],
        samples_per_iter=section["samples_per_iter"],
        step_size=section["step_size"],
        iterations=section["iterations"],
        seed=cfg["seed"],
        negatives=section["negatives"])
    records = analysis.trajectory_batch(base, kinds, seed=cfg["seed"])
    rows = []
    for spec, record in zip(section["estimators"], records):
        for t in range(record.distances.size):
            rows.append((spec, t, record.distances[t], record.grad_errors[t]))
    _write_csv(os.path.join(out_dir, "trajectory.csv"),
               ["run_id", "iter", "distance", "grad_error"], rows)
    for spec, record in zip(section["estimators"], records):
        print("trajectory %s: final distance %.6f" % (spec,
                                                      record.final_distance))
    if figures:
        from . import plotting
        plotting.plot_trajectories(
            dict(zip(section["estimators"], records)),
            os.path.join(out_dir, "trajectory.png"))


def _run_bias_decay(cfg, out_dir, figures):
    section = cfg["bias_decay"]
    means, stderrs = analysis.gradient_error_vs_M(
        section["alpha"], section["target"], section["M_values"],
        n=section["n"], repeats=section["repeats"], seed=cfg["seed"])
    rows = list(zip(section["M_values"], means, stderrs))
    _write_csv(os.path.join(out_dir, "bias_decay.csv"),
               ["M", "grad_error_mean", "grad_error_stderr"], rows)
    slope = analysis.loglog_slope(section["M_values"], means)
    print("bias-decay: log-log slope %.4f over M=%s"
          % (slope, list(section["M_values"])))
    if figures:
        from . import plotting
        plotting.plot_bias_decay(section["M_values"], means, stderrs,
                                 os.path.join(out_dir, "bias_decay.png"))


def _run_mse_sweep(cfg, out_dir, figures):
    section = cfg["sweep"]
    kinds = [estimator_from_spec(s) for s in section["estimators"]]
    rows = analysis.mse_sweep(
        section["dim"], section["n"], kinds, section["repeats"], cfg["seed"],
        step_size=section["step_size"], iterations=section["iterations"])
    _write_csv(os.path.join(out_dir, "mse_sweep.csv"),
               ["estimator", "M", "n", "repeats", "mse_mean", "mse_std"],
               [(r.estimator, r.M, r.n, r.repeats, r.mse_mean, r.mse_std)
                for r in rows])
    best = min(rows, key=lambda r: r.mse_mean)
    print("mse-sweep: argmin %s M=%s mse %.4f"
          % (best.estimator, best.M, best.mse_mean))
    if figures:
        from . import plotting
        plotting.plot_mse_sweep(rows, os.path.join(out_dir, "mse_sweep.png"))


def _run_optimal_m(cfg, out_dir, figures):
    section = cfg["optimal_m"]
    results = analysis.optimal_m_scaling_check(
        section["ns"], repeats=section["repeats"], seed=cfg["seed"],
        M_values=section["M_values"])
    rows = [(res["n"], res["argmin_M"], res["bracket"][0], res["bracket"][1],
             res["within"]) for res in results]
    _write_csv(os.path.join(out_dir, "optimal_m.csv"),
               ["n", "argmin_M", "bracket_lo", "bracket_hi", "within"], rows)
    for res in results:
        print("optimal-m: n=%d argmin M=%s within [%.2f, %.2f]: %s"
              % (res["n"], res["argmin_M"], res["bracket"][0],
                 res["bracket"][1], res["within"]))


def _run_converge(cfg, out_dir, figures):
    section = cfg["converge"]
    result = analysis.normalized_ascent_converge(
        section["alpha0"], section["target"], section["M"], section["delta"],
        step=section["step"], n=section["n"], seed=cfg["seed"],
        constant=section["constant"])
    _write_csv(os.path.join(out_dir, "converge.csv"),
               ["kappa", "delta", "bound", "first_hit", "success"],
               [(result["kappa"], section["delta"], result["bound"],
                 result["first_hit"], result["success"])])
    print("converge-expfam: success=%s first_hit=%s bound=%d kappa=%.4f"
          % (result["success"], result["first_hit"], result["bound"],
             result["kappa"]))


def _run_divergence(cfg, out_dir, figures):
    section = cfg["divergence"]
    mean1 = np.array([section["mean_diff"]])
    model = GaussianLocationModel(mean1)
    n = section["n"]
    rows = []
    mcs, quads = [], []
    for i, M in enumerate(section["M_values"]):
        rng = np.random.default_rng([cfg["seed"], i])
        pos = mean1 + rng.standard_normal((n, 1))
        neg = rng.standard_normal((n, 1))
        mc, stderr = objectives.d_alpha_variational_value(
            model, pos, neg, M, with_stderr=True)
        quad = objectives.d_alpha_quadrature_oracle(mean1, np.zeros(1), M)
        alpha = M / (1.0 + M)
        rows.append((M, alpha, mc, quad, stderr))
        mcs.append(mc)
        quads.append(quad)
        print("divergence-check: M=%s bound %.6f quadrature %.6f (+-%.6f)"
              % (M, mc, quad, stderr))
    _write_csv(os.path.join(out_dir, "divergence.csv"),
               ["M", "alpha", "mc_bound", "quadrature", "stderr"], rows)
    if figures:
        from . import plotting
        plotting.plot_divergence(section["M_values"], mcs, quads,
                                 os.path.join(out_dir, "divergence.png"))


def _run_telescope_fit(cfg, out_dir, figures):
    section = cfg["telescoping"]
    schedule = _schedule_from(section)
    target_mean = np.asarray(section["target_mean"], dtype=float)
    dim = target_mean.shape[0]
    model = MlpRatioModel(dim, hidden_width=64, num_resblocks=3,
                          num_stages=schedule.K + 1, seed=cfg["seed"])
    result = tele.fit_telescoping(
        tele.gaussian_target_sampler(target_mean), schedule, model,
        section["M"], iterations=section["iterations"],
        batch_n1=section["batch_n1"], seed=cfg["seed"],
        learning_rate=section["learning_rate"],
        convention=section["convention"],
        use_stage_weights=section["use_stage_weights"],
        coupled_draws=section["coupled_draws"],
        lr_decay=section["lr_decay"])
    _write_csv(os.path.join(out_dir, "telescope_fit.csv"),
               ["iter", "loss"], list(enumerate(result.loss_trace)))
    axes = [np.linspace(m - 4.0, m + 4.0, 15) for m in target_mean]
    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.stack([m.ravel() for m in mesh], axis=1)
    fitted = tele.telescoping_log_ratio(model, grid)
    closed = grid @ target_mean - 0.5 * target_mean @ target_mean
    pearson = float(np.corrcoef(fitted, closed)[0, 1])
    print("telescope-fit: grid Pearson %.4f vs closed-form log ratio"
          % pearson)
    if figures:
        from . import plotting
        plotting.plot_loss_trace(result.loss_trace,
                                 os.path.join(out_dir, "telescope_fit.png"))


def _run_sampler(cfg, out_dir, figures, kind):
    section = cfg["sampler"]
    target = tasks.branin_optima_gmm(section["gmm_variance"])
    center = target.means.mean(axis=0)
    spread = float(np.max(np.linalg.norm(target.means - center, axis=1))
                   + 3.0 * np.sqrt(target.variance))

    def grad(z):
        return tasks.gmm_logdensity_grad(target, z)

    rng = np.random.default_rng([cfg["seed"], 0])
    init = center + spread * rng.standard_normal(
        (section["particle_count"], 2))
    if kind == "SVGD":
        sampler_cfg = samplers.SvgdConfig(
            steps=section["svgd_steps"],
            particle_count=section["particle_count"],
            initial_step=section["svgd_initial_step"],
            bandwidth_floor=section["bandwidth_floor"],
            seed=cfg["seed"])
        finals = samplers.svgd_run(grad, init, sampler_cfg)
        stem = "svgd_samples"
    else:
        sampler_cfg = samplers.LangevinConfig(
            steps=section["langevin_steps"],
            step_size=section["langevin_step_size"],
            seed=cfg["seed"])
        finals = samplers.langevin_run(grad, init, sampler_cfg)
        stem = "langevin_samples"
    rows = [(i, finals[i, 0], finals[i, 1]) for i in range(finals.shape[0])]
    _write_csv(os.path.join(out_dir, stem + ".csv"),
               ["particle_id", "z1", "z2"], rows)
    print("%s: %d particles, mean (%.3f, %.3f)"
          % (stem, finals.shape[0], finals[:, 0].mean(), finals[:, 1].mean()))
    if figures:
        from . import plotting
        plotting.plot_particles(finals, os.path.join(out_dir, stem + ".png"),
                                centers=target.means)


def _run_branin(cfg, out_dir, figures):
    section = cfg["bbo"]
    schedule = tele.sigma_schedule(preset=section["schedule"])
    rows = []
    best_particles = None
    for s in section["seeds"]:
        task = tasks.branin_dataset(section["dataset_size"],
                                    section["remove_top_fraction"],
                                    seed=[cfg["seed"], s])
        result = tasks.bbo_run(
            task, schedule, section["M"], sampler=section["sampler"],
            Q=section["Q"], seed=s,
            prior_quantile=section["prior_quantile"],
            prior_iterations=section["prior_iterations"],
            prior_batch=section["prior_batch"],
            prior_stage_weights=section["prior_stage_weights"],
            regressor_iterations=section["regressor_iterations"])
        rows.append((s, section["Q"], result.best_value,
                     result.y_max_dataset))
        best_particles = result.candidates
        print("branin: seed %d best %.4f (dataset max %.4f, regressor rmse "
              "%.4f)" % (s, result.best_value, result.y_max_dataset,
                         result.regressor_rmse))
    _write_csv(os.path.join(out_dir, "branin.csv"),
               ["seed", "Q", "best_value", "y_max_dataset"], rows)
    if figures and best_particles is not None:
        from . import plotting
        plotting.plot_particles(best_particles,
                                os.path.join(out_dir, "branin.png"),
                                centers=tasks.BRANIN_MAXIMA)


_HANDLERS = {
    "gradcheck": _run_gradcheck,
    "trajectory": _run_trajectory,
    "bias-decay": _run_bias_decay,
    "mse-sweep": _run_mse_sweep,
    "optimal-m": _run_optimal_m,
    "converge-expfam": _run_converge,
    "divergence-check": _run_divergence,
    "telescope-fit": _run_telescope_fit,
    "svgd-sample": lambda cfg, out, fig: _run_sampler(cfg, out, fig, "SVGD"),
    "langevin-sample": lambda cfg, out, fig: _run_sampler(cfg, out, fig,
                                                          "LD"),
    "branin": _run_branin,
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="n2ce",
        description="Noise-amplified contrastive estimation experiments.")
    sub = parser.add_subparsers(dest="subcommand", metavar="subcommand")
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help="run the %s experiment" % name)
        p.add_argument("-c", "--config", default=None,
                       help="YAML config path (defaults apply when omitted)")
        p.add_argument("-o", "--out", default=None,
                       help="output directory (default: $N2CE_OUT or cwd)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--figures", action="store_true",
                       help="also render PNG figures next to the CSVs")
    return parser


def _error_record(subcommand, exc):
    return json.dumps({
        "subcommand": subcommand,
        "error": type(exc).__name__,
        "message": str(exc),
        "problems": getattr(exc, "problems", None),
    }, sort_keys=True)


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.subcommand is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        if args.config is not None:
            cfg = cfgmod.load_config(args.config)
        else:
            cfg = cfgmod.default_config()
        if args.seed is not None:
            cfg["seed"] = args.seed
        out_dir = args.out or os.environ.get("N2CE_OUT") or os.getcwd()
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, SIDECAR_NAME), "w") as fh:
            fh.write(cfgmod.serialize_config(cfg))
        _HANDLERS[args.subcommand](cfg, out_dir, args.figures)
    except ConfigError as exc:
        print(_error_record(args.subcommand, exc), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(_error_record(args.subcommand, exc), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
