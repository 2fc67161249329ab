"""Command-line interface.

Subcommands: simulate, sweep, hyperopt, bounds, compare.  Exit codes:
0 success, 1 configuration/argument error, 2 numerical failure.  All
artifacts land in the output directory (flag, [run] out_dir, or
$REGUL_OUT_DIR) together with a manifest carrying the config hash.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import bounds as bnd
from . import gp, io, vdp
from .config import RunConfig, build_components, parse_config
from .errors import ConfigError, NumericalError

__all__ = ["main"]


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; the contract here is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="gpregul", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one closed-loop episode")
    sim.add_argument("--config", default=None, help="INI-style configuration file")
    sim.add_argument("--identifier", choices=("gp", "ls"), default=None)
    sim.add_argument("--out-dir", default=None)

    sweep = sub.add_parser("sweep", help="run the GP identifier at several buffer sizes")
    sweep.add_argument("--config", default=None)
    sweep.add_argument("--samples", default="50,100,200", help="comma list of buffer sizes")
    sweep.add_argument("--out-dir", default=None)
    sweep.add_argument("--jobs", type=int, default=1)

    hyp = sub.add_parser("hyperopt", help="fit kernel hyperparameters to a dataset CSV")
    hyp.add_argument("--dataset", required=True)
    hyp.add_argument("--config", default=None)
    hyp.add_argument("--budget", type=int, default=300)
    hyp.add_argument("--out-dir", default=None)

    bo = sub.add_parser("bounds", help="error certificate for a dataset along a trajectory")
    bo.add_argument("--dataset", required=True)
    bo.add_argument("--trajectory", required=True)
    bo.add_argument("--delta", type=float, default=0.01)
    bo.add_argument("--config", default=None)
    bo.add_argument("--out-dir", default=None)

    cmp_ = sub.add_parser("compare", help="baseline vs GP at each buffer size, with figures")
    cmp_.add_argument("--config", default=None)
    cmp_.add_argument("--samples", default="50,100,200")
    cmp_.add_argument("--out-dir", default=None)
    cmp_.add_argument("--jobs", type=int, default=1)
    return p


def _out_dir(cfg: RunConfig, flag: str | None) -> str:
    out = flag or cfg.resolved_out_dir()
    os.makedirs(out, exist_ok=True)
    return out


def _parse_samples(raw: str) -> list[int]:
    try:
        values = [int(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse --samples {raw!r}") from None
    if not values or any(v < 1 for v in values):
        raise ConfigError("--samples must be positive integers")
    return values


def _run_one(cfg: RunConfig, identifier: str, capacity: int,
             delta: float = 0.01, reference_eta=None) -> vdp.BenchmarkResult:
    bench, setup, sim = build_components(cfg, identifier=identifier, capacity=capacity)
    return vdp.run_benchmark(bench, setup, sim, delta=delta, reference_eta=reference_eta)


def _metrics_row(res: vdp.BenchmarkResult) -> dict:
    return {
        "identifier": res.label,
        "N": res.capacity,
        "max_abs_y_ss": res.metrics["max_abs_y"],
        "rms_y_ss": res.metrics["rms_y"],
        "max_friend_err": res.metrics["max_friend_err"],
        "rho_star": res.rho_star,
        "claim2_bound": res.claim_bound,
    }


def _emit_run(res: vdp.BenchmarkResult, out: str, entries: list) -> str:
    traj_name = f"trajectory_{res.label}.csv"
    rows = io.write_trajectory_csv(res.trajectory, os.path.join(out, traj_name))
    entries.append((traj_name, rows))
    ds_name = f"dataset_{res.label}.csv"
    rows = io.write_dataset_csv(res.dataset_inputs, res.dataset_outputs, os.path.join(out, ds_name))
    entries.append((ds_name, rows))
    if res.bound_report is not None:
        name = f"bounds_{res.label}.txt"
        rows = io.write_bounds_txt(
            res.bound_report,
            os.path.join(out, name),
            extra=_bound_extras(res),
        )
        entries.append((name, rows))
    return traj_name


def _bound_extras(res: vdp.BenchmarkResult) -> dict:
    return {
        "claim2_bound": res.claim_bound,
        "rho_star_convention": "max over reference points of min distance to dataset",
    }


def _cmd_simulate(args) -> int:
    cfg = parse_config(args.config)
    out = _out_dir(cfg, args.out_dir)
    identifier = args.identifier or cfg.identifier
    res = _run_one(cfg, identifier, cfg.n_samples)
    entries: list = []
    traj_name = _emit_run(res, out, entries)
    rows = io.write_metrics_csv([_metrics_row(res)], os.path.join(out, "metrics.csv"))
    entries.append(("metrics.csv", rows))
    from . import plots

    figs = plots.render_error_figures({res.label: res.trajectory}, cfg.ss_window, out)
    entries.extend((os.path.basename(f), 0) for f in figs)
    scripts = plots.write_gnuplot_scripts(
        {res.label: traj_name}, out, cfg.config_hash(), cfg.ss_window, cfg.horizon
    )
    entries.extend((os.path.basename(s), 0) for s in scripts)
    io.write_manifest(out, entries, cfg.config_hash())
    print(
        f"{res.label}: max|y|_ss={res.metrics['max_abs_y']:.6g} "
        f"rms_y_ss={res.metrics['rms_y']:.6g} collected={len(res.dataset_inputs)} "
        f"elapsed={res.elapsed:.1f}s -> {out}"
    )
    return 0


def _sweep_labels(cfg: RunConfig, sizes: list[int], jobs: int, with_ls: bool):
    tasks = []
    if with_ls:
        tasks.append(("ls", cfg.n_samples))
    tasks.extend(("gp", n) for n in sizes)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            futs = [ex.submit(_run_one, cfg, kind, cap) for kind, cap in tasks]
            results = [f.result() for f in futs]
    else:
        results = [_run_one(cfg, kind, cap) for kind, cap in tasks]
    return results


def _rescore_common_reference(results: list[vdp.BenchmarkResult], cfg: RunConfig,
                              delta: float = 0.01) -> None:
    """Recompute coverage and certificates against one shared reference window.

    The window of the largest-N GP run is used so the per-run numbers are
    comparable; single runs keep their own window.
    """
    gp_runs = [r for r in results if r.identifier == "gp"]
    if not gp_runs:
        return
    ref_run = max(gp_runs, key=lambda r: r.capacity)
    traj = ref_run.trajectory
    reference = traj.eta[traj.window_mask(traj.t[-1] - cfg.ss_window)]
    hyper = gp.KernelHyperparams(cfg.sigma_p2, np.asarray(cfg.lengthscales), cfg.sigma_n2)
    for res in results:
        if not len(res.dataset_inputs):
            continue
        if res.identifier == "gp":
            report, rho_star, bound, floor = vdp.benchmark_bound_report(
                hyper, res.dataset_inputs, res.dataset_outputs, res.trajectory,
                cfg.ss_window, delta, reference_eta=reference,
            )
            res.bound_report = report
            res.rho_star = rho_star
            res.claim_bound = bound
            res.noise_floor = floor
        else:
            res.rho_star = bnd.covering_radius(res.dataset_inputs, reference)


def _cmd_sweep(args) -> int:
    cfg = parse_config(args.config)
    out = _out_dir(cfg, args.out_dir)
    sizes = _parse_samples(args.samples)
    results = _sweep_labels(cfg, sizes, args.jobs, with_ls=False)
    _rescore_common_reference(results, cfg)
    entries: list = []
    for res in results:
        _emit_run(res, out, entries)
    rows = io.write_metrics_csv([_metrics_row(r) for r in results], os.path.join(out, "metrics.csv"))
    entries.append(("metrics.csv", rows))
    io.write_manifest(out, entries, cfg.config_hash())
    for res in results:
        print(
            f"{res.label}: max|y|_ss={res.metrics['max_abs_y']:.6g} "
            f"max_friend_err={res.metrics['max_friend_err']:.6g} rho*={res.rho_star:.6g}"
        )
    return 0


def _cmd_compare(args) -> int:
    cfg = parse_config(args.config)
    out = _out_dir(cfg, args.out_dir)
    sizes = _parse_samples(args.samples)
    results = _sweep_labels(cfg, sizes, args.jobs, with_ls=True)
    _rescore_common_reference(results, cfg)
    entries: list = []
    labels_to_csv = {}
    for res in results:
        labels_to_csv[res.label] = _emit_run(res, out, entries)
    rows = io.write_metrics_csv([_metrics_row(r) for r in results], os.path.join(out, "metrics.csv"))
    entries.append(("metrics.csv", rows))

    from . import plots

    trajs = {r.label: r.trajectory for r in results}
    figs = plots.render_error_figures(trajs, cfg.ss_window, out)
    figs.append(plots.render_feedforward_figure(trajs, cfg.ss_window, out))
    entries.extend((os.path.basename(f), 0) for f in figs)
    scripts = plots.write_gnuplot_scripts(
        labels_to_csv, out, cfg.config_hash(), cfg.ss_window, cfg.horizon
    )
    entries.extend((os.path.basename(s), 0) for s in scripts)
    io.write_manifest(out, entries, cfg.config_hash())
    for res in results:
        print(
            f"{res.label}: max|y|_ss={res.metrics['max_abs_y']:.6g} "
            f"rms_y_ss={res.metrics['rms_y']:.6g} "
            f"max_friend_err={res.metrics['max_friend_err']:.6g} "
            f"rho*={res.rho_star:.6g} bound={res.claim_bound:.6g}"
        )
    return 0


def _cmd_hyperopt(args) -> int:
    cfg = parse_config(args.config)
    out = _out_dir(cfg, args.out_dir)
    X, u = io.read_dataset_csv(args.dataset)
    if X.shape[0] < 2:
        raise ConfigError(f"dataset {args.dataset} needs at least two rows")
    if X.shape[1] != cfg.n_eta:
        raise ConfigError(
            f"dataset has {X.shape[1]} input columns, config expects {cfg.n_eta}"
        )
    init = gp.KernelHyperparams(cfg.sigma_p2, np.asarray(cfg.lengthscales), cfg.sigma_n2)
    samples = gp.SampleSet(X.shape[0], X.shape[1])
    for x, val in zip(X, u):
        samples.insert(x, val)
    before = gp.log_marginal_likelihood(samples, init)
    fitted = gp.optimize_hyperparams(samples, init, budget=args.budget, seed=cfg.seed)
    after = gp.log_marginal_likelihood(samples, fitted)
    path = os.path.join(out, "hyperparams.txt")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# fitted kernel hyperparameters; paste into a config file\n")
        fh.write(f"# log marginal likelihood: init={before:.9g} fitted={after:.9g}\n")
        fh.write("[gp]\n")
        fh.write("lengthscales = " + ", ".join(format(v, ".9g") for v in fitted.length_scales) + "\n")
        fh.write(f"sigma_p2 = {fitted.amplitude:.9g}\n")
        fh.write(f"sigma_n2 = {fitted.noise_variance:.9g}\n")
    io.write_manifest(out, [("hyperparams.txt", 5)], cfg.config_hash())
    print(f"lml {before:.6g} -> {after:.6g}; wrote {path}")
    return 0


def _cmd_bounds(args) -> int:
    cfg = parse_config(args.config)
    out = _out_dir(cfg, args.out_dir)
    if not 0.0 < args.delta < 1.0:
        raise ConfigError("--delta must lie in (0, 1)")
    X, u = io.read_dataset_csv(args.dataset)
    if not len(X):
        raise ConfigError(f"dataset {args.dataset} is empty")
    cols = io.read_trajectory_csv(args.trajectory)
    n_eta = X.shape[1]
    eta = np.column_stack([cols[f"eta{i + 1}"] for i in range(n_eta)])
    t = cols["t"]
    mask = t >= t[-1] - cfg.ss_window - 1e-12
    reference = eta[mask]

    hyper = gp.KernelHyperparams(cfg.sigma_p2, np.asarray(cfg.lengthscales[:n_eta]), cfg.sigma_n2)
    samples = gp.SampleSet(len(X), n_eta)
    for x, val in zip(X, u):
        samples.insert(x, val)
    model = gp.fit(samples, hyper)
    rho_star = bnd.covering_radius(X, reference)
    # friend Lipschitz from the logged ideal input along the window
    du = np.abs(np.diff(cols["u_star"][mask]))
    deta = np.linalg.norm(np.diff(reference, axis=0), axis=1)
    w2 = cols["w2"][mask]
    crosses = np.sign(w2[:-1]) != np.sign(w2[1:])
    ok = (~crosses) & (deta > 1e-12)
    l_f = float(np.max(du[ok] / deta[ok])) if np.any(ok) else 0.0
    l_mean, l_var = bnd.posterior_lipschitz_constants(model, rho_star)
    report = bnd.BoundReport.build(rho_star, args.delta, model.count, l_f, l_mean, l_var, hyper)
    bound, floor = bnd.regulation_error_bound(hyper, rho_star, report)

    entries = []
    rows = io.write_bounds_txt(
        report,
        os.path.join(out, "bounds.txt"),
        extra={
            "claim2_bound": bound,
            "rho_star_convention": "max over reference points of min distance to dataset",
            "config_hash": cfg.config_hash(),
        },
    )
    entries.append(("bounds.txt", rows))
    per_point = os.path.join(out, "per_point_bounds.csv")
    from scipy.spatial.distance import cdist

    dmin = cdist(reference, X).min(axis=1)
    with open(per_point, "w", encoding="utf-8") as fh:
        fh.write("t,min_dist,var,uniform_bound\n")
        for i, x in enumerate(reference):
            _, var = gp.posterior_predict(model, x)
            ub = bnd.uniform_error_bound(model, x, report)
            fh.write(
                ",".join(format(v, ".9g") for v in (t[mask][i], dmin[i], var, ub)) + "\n"
            )
    entries.append(("per_point_bounds.csv", len(reference)))
    io.write_manifest(out, entries, cfg.config_hash())
    print(
        f"rho*={rho_star:.6g} beta={report.beta:.6g} alpha={report.alpha:.6g} "
        f"bound={bound:.6g} noise_floor={floor:.6g}"
    )
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "hyperopt": _cmd_hyperopt,
    "bounds": _cmd_bounds,
    "compare": _cmd_compare,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
