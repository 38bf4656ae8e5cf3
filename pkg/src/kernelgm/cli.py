"""Command-line front end.

Subcommands:
  simulate   draw replicated datasets from a configured truth model
  fit        fit the configured estimator on a dataset file over the penalty grid
  evaluate   score an estimate matrix against the configured truth support
  replicate  full protocol: simulate, tune on held-out data, fit, score
  ratecheck  gradient concentration or estimation-error scaling diagnostics
  ingest     window a price CSV into unit-normalized feature vectors

Shared flags: --config <path> (JSON), --seed <u64>, --out <dir>,
--threads <k>.  The seed always comes from config or --seed, never the
clock.  Output dir resolution: --out, then the config's out_dir, then
the KERNELGM_OUT environment variable, then ./kernelgm_out.

Exit codes: 0 success (all fits converged), 1 at least one fit did not
converge, 2 bad usage or config, 3 nothing to do.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .harness import ExperimentConfig, PriceIngestSpec, emit_report, run_replicated_experiment

EXIT_OK = 0
EXIT_UNCONVERGED = 1
EXIT_USAGE = 2
EXIT_NOOP = 3


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InvalidInputError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"config file {path} is not valid JSON: {e}")


def _experiment_config(args) -> ExperimentConfig:
    payload = _load_json(args.config)
    cfg = ExperimentConfig.from_dict(payload)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out_dir=str(args.out))
    if args.threads is not None:
        cfg = replace(cfg, threads=args.threads)
    return cfg


def _out_dir(args, cfg_out=None) -> Path:
    target = args.out or cfg_out or os.environ.get("KERNELGM_OUT") or "kernelgm_out"
    out = Path(target)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out, command, cfg_dict, files, extra=None, all_converged=True):
    from . import __version__
    from .io import config_hash, write_manifest

    cfg_dict = dict(cfg_dict)
    # output location and worker count never change output bytes
    if "out_dir" in cfg_dict:
        cfg_dict["out_dir"] = None
    if "threads" in cfg_dict:
        cfg_dict["threads"] = 1
    manifest = {
        "command": command,
        "config": cfg_dict,
        "config_hash": config_hash(cfg_dict),
        "version": __version__,
        "files": files,
        "all_converged": bool(all_converged),
        "no_op": not files,
    }
    if extra:
        manifest.update(extra)
    write_manifest(out / "manifest.json", manifest)
    return manifest


def _spawn_children(seed):
    root = np.random.SeedSequence(seed)
    truth_ss, train_ss, valid_ss, report_ss = root.spawn(4)
    return truth_ss, train_ss, valid_ss, report_ss


def cmd_simulate(args) -> int:
    from .density import ModelSpec
    from .harness import _build_truth, _truth_kernel
    from .io import write_dataset_csv, write_matrix_csv
    from .sampling import GibbsConfig, gibbs_generate_batch

    cfg = _experiment_config(args)
    out = _out_dir(args, cfg.out_dir)
    truth_ss, train_ss, _, _ = _spawn_children(cfg.seed)
    truth = _build_truth(cfg, truth_seed=truth_ss)
    model = ModelSpec(
        _truth_kernel(cfg), truth, domain=cfg.domain, base_coeff=cfg.base_coeff,
        lift_dim=cfg.lift_dim,
    )
    gibbs = GibbsConfig(n_grid=cfg.gibbs_grid, burn_in=cfg.burn_in, thin=cfg.thin)
    datasets = gibbs_generate_batch(model, cfg.n, cfg.replications, gibbs, train_ss)
    write_matrix_csv(out / "truth.csv", truth.theta)
    files = ["truth.csv"]
    for r, data in enumerate(datasets):
        name = f"dataset_{r:03d}.csv"
        write_dataset_csv(out / name, data)
        files.append(name)
    lineage = {"master_seed": int(cfg.seed), "train_key": list(train_ss.spawn_key)}
    _write_manifest(out, "simulate", cfg.to_dict(), files, {"seed_lineage": lineage})
    print(f"simulate: wrote {len(datasets)} datasets (n={cfg.n}, p={cfg.p}) to {out}")
    return EXIT_OK


def _fit_on_dataset(cfg, data):
    """Fit the configured estimator at every grid penalty; no tuning."""
    from .baselines import (
        fit_glasso,
        flatten_features,
        kendall_tau_matrix,
        sample_covariance,
        skeptic_correlation,
    )
    from .estimators import (
        SolveConfig,
        fit_joint_logdet,
        fit_joint_mle_exact,
        fit_nodewise_lasso,
        fit_nodewise_mle_exact,
        symmetrize_min_magnitude,
    )
    from .harness import _lam_grid, _truth_kernel
    from .kernels import average_gram

    solve_cfg = SolveConfig(grad_tol=cfg.grad_tol, max_iter=cfg.max_iter, accelerate=True)
    kern = _truth_kernel(cfg)
    p = data.p
    rows, mats = [], []

    def record(lam, converged, n_iter, kkt, mat):
        rows.append(
            {"lam": lam, "converged": converged, "n_iter": n_iter, "kkt_residual": kkt}
        )
        mats.append(mat)

    if cfg.estimator == "semi_efgm_joint":
        gram = average_gram(kern, data)
        warm = None
        for lam in _lam_grid(cfg, gram.matrix):
            m = float(cfg.m_grid[0])
            fr = fit_joint_logdet(gram, float(lam), m, solve_cfg, x0=warm)
            warm = fr.solution
            record(float(lam), fr.converged, fr.n_iter, fr.kkt_residual, fr.solution)
    elif cfg.estimator == "semi_efgm_nodewise":
        gram = average_gram(kern, data)
        warm = None
        for lam in _lam_grid(cfg, gram.matrix):
            built = np.eye(p)
            conv, iters, kkt = True, 0, 0.0
            for s in range(p):
                w0 = None if warm is None else np.delete(warm[s], s)
                fr = fit_nodewise_lasso(gram, s, float(lam), solve_cfg, x0=w0)
                built[s, np.arange(p) != s] = fr.solution
                conv &= fr.converged
                iters = max(iters, fr.n_iter)
                kkt = max(kkt, fr.kkt_residual)
            warm = built
            record(float(lam), conv, iters, kkt, symmetrize_min_magnitude(built).theta)
    elif cfg.estimator in ("ggm", "nonparanormal"):
        flat = flatten_features(data)
        if cfg.estimator == "ggm":
            s_mat = sample_covariance(flat)
        else:
            s_mat = skeptic_correlation(kendall_tau_matrix(flat))
        warm = None
        for lam in _lam_grid(cfg, s_mat):
            theta, info = fit_glasso(s_mat, float(lam), grad_tol=cfg.grad_tol, warm=warm)
            warm = info["warm"]
            record(float(lam), info["converged"], info["n_cycles"], info["kkt_residual"], theta.theta)
    else:  # oracle_mle
        gram = average_gram(kern, data)
        lams = _lam_grid(cfg, gram.matrix)
        if p <= 4:
            warm = None
            for lam in lams:
                fr = fit_joint_mle_exact(
                    kern, data, float(lam), solve_cfg, domain=cfg.domain,
                    base_coeff=cfg.base_coeff, n_grid=cfg.quad_grid, x0=warm,
                )
                warm = fr.solution
                record(float(lam), fr.converged, fr.n_iter, fr.kkt_residual, fr.theta.theta)
        else:
            warm = None
            for lam in lams:
                built = np.eye(p)
                conv, iters, kkt = True, 0, 0.0
                for s in range(p):
                    w0 = None if warm is None else np.delete(warm[s], s)
                    fr = fit_nodewise_mle_exact(
                        kern, data, s, float(lam), solve_cfg, domain=cfg.domain,
                        base_coeff=cfg.base_coeff, n_grid=cfg.quad_grid, x0=w0,
                    )
                    built[s, np.arange(p) != s] = fr.solution
                    conv &= fr.converged
                    iters = max(iters, fr.n_iter)
                    kkt = max(kkt, fr.kkt_residual)
                warm = built
                record(float(lam), conv, iters, kkt, symmetrize_min_magnitude(built).theta)
    return rows, mats


def cmd_fit(args) -> int:
    from .io import read_dataset_csv, write_matrix_csv, write_rows_csv

    cfg = _experiment_config(args)
    if not cfg.data_file:
        raise InvalidInputError("config field 'data_file': required for the fit subcommand")
    data = read_dataset_csv(cfg.data_file)
    out = _out_dir(args, cfg.out_dir)
    rows, mats = _fit_on_dataset(cfg, data)
    files = []
    if rows:
        write_rows_csv(out / "fits.csv", rows, ("lam", "converged", "n_iter", "kkt_residual"))
        files.append("fits.csv")
        for i, mat in enumerate(mats):
            name = f"estimate_{i:03d}.csv"
            write_matrix_csv(out / name, mat)
            files.append(name)
    all_conv = all(r["converged"] for r in rows) if rows else True
    _write_manifest(out, "fit", cfg.to_dict(), files, all_converged=all_conv)
    if not rows:
        print("fit: empty penalty grid, nothing to do")
        return EXIT_NOOP
    n_bad = sum(not r["converged"] for r in rows)
    print(f"fit: {len(rows)} fits on n={data.n}, p={data.p} ({n_bad} unconverged) -> {out}")
    return EXIT_OK if n_bad == 0 else EXIT_UNCONVERGED


def cmd_evaluate(args) -> int:
    from .density import ParamMatrix
    from .evaluation import support_metrics
    from .harness import _build_truth
    from .io import read_matrix_csv, write_rows_csv

    cfg = _experiment_config(args)
    if not cfg.estimate_file:
        raise InvalidInputError("config field 'estimate_file': required for the evaluate subcommand")
    truth_ss, _, _, _ = _spawn_children(cfg.seed)
    truth = _build_truth(cfg, truth_seed=truth_ss)
    estimate = ParamMatrix(read_matrix_csv(cfg.estimate_file))
    metrics = support_metrics(estimate, truth, cfg.threshold)
    out = _out_dir(args, cfg.out_dir)
    row = {
        "precision": metrics.precision,
        "recall": metrics.recall,
        "fscore": metrics.fscore,
        "tp": metrics.tp,
        "fp": metrics.fp,
        "fn": metrics.fn,
        "threshold": metrics.threshold,
    }
    write_rows_csv(out / "metrics.csv", [row], tuple(row))
    _write_manifest(out, "evaluate", cfg.to_dict(), ["metrics.csv"])
    print(
        f"evaluate: precision={metrics.precision:.4f} recall={metrics.recall:.4f} "
        f"fscore={metrics.fscore:.4f}"
    )
    return EXIT_OK


def cmd_replicate(args) -> int:
    cfg = _experiment_config(args)
    out = _out_dir(args, cfg.out_dir)
    report = run_replicated_experiment(cfg)
    emit_report(report, out)
    s = report.summary
    print(
        f"replicate: {cfg.estimator} on {cfg.truth} (p={cfg.p}, n={cfg.n}, "
        f"R={cfg.replications}): mean F = {s['mean_fscore']:.4f} "
        f"(SE {s['se_fscore']:.4f}) -> {out}"
    )
    return EXIT_OK if report.all_converged else EXIT_UNCONVERGED


def cmd_ratecheck(args) -> int:
    from .density import ModelSpec
    from .evaluation import error_scaling_check, gradient_concentration_check
    from .harness import _build_truth, _truth_kernel
    from .io import write_ratecheck_csv
    from .sampling import GibbsConfig

    cfg = _experiment_config(args)
    out = _out_dir(args, cfg.out_dir)
    truth_ss, _, _, _ = _spawn_children(cfg.seed)
    truth = _build_truth(cfg, truth_seed=truth_ss)
    model = ModelSpec(
        _truth_kernel(cfg), truth, domain=cfg.domain, base_coeff=cfg.base_coeff,
        lift_dim=cfg.lift_dim,
    )
    gibbs = GibbsConfig(n_grid=cfg.gibbs_grid, burn_in=cfg.burn_in, thin=cfg.thin)
    kw = dict(seed=cfg.seed, quad_grid=cfg.quad_grid, gibbs=gibbs, n_boot=cfg.n_boot)
    if cfg.sample_sizes is not None:
        kw["sample_sizes"] = cfg.sample_sizes
    if cfg.rate_replications is not None:
        kw["replications"] = cfg.rate_replications
    if cfg.check == "concentration":
        result = gradient_concentration_check(model, **kw)
    else:
        from .estimators import SolveConfig

        result = error_scaling_check(
            model, estimator=cfg.rate_estimator, lam_scale=cfg.lam_scale,
            config=SolveConfig(grad_tol=cfg.grad_tol, max_iter=cfg.max_iter, accelerate=True),
            **kw,
        )
    write_ratecheck_csv(out / "ratecheck.csv", result)
    n_bad = int(result.meta.get("n_unconverged", 0))
    extra = {
        "summary": {
            "check": cfg.check,
            "fitted_slope": result.fitted_slope,
            "slope_ci": list(result.slope_ci),
            "sample_sizes": [int(v) for v in result.sample_sizes],
            "statistic_medians": [float(v) for v in result.statistic_medians],
            "meta": {k: v for k, v in result.meta.items() if isinstance(v, (int, float, str))},
        }
    }
    _write_manifest(out, "ratecheck", cfg.to_dict(), ["ratecheck.csv"], extra,
                    all_converged=n_bad == 0)
    lo, hi = result.slope_ci
    print(
        f"ratecheck: {cfg.check} slope = {result.fitted_slope:.4f} "
        f"(CI [{lo:.4f}, {hi:.4f}]) -> {out}"
    )
    return EXIT_OK if n_bad == 0 else EXIT_UNCONVERGED


def cmd_ingest(args) -> int:
    from .harness import _ingest
    from .io import write_dataset_csv

    payload = _load_json(args.config)
    known = {"path", "window", "return_type", "window_mode"}
    unknown = sorted(set(payload) - known)
    if unknown:
        raise InvalidInputError(f"config field {unknown[0]!r}: unknown key")
    if args.window_mode is not None:
        payload["window_mode"] = args.window_mode
    spec = PriceIngestSpec(**payload)
    data, info = _ingest(spec)
    out = _out_dir(args)
    write_dataset_csv(out / "dataset.csv", data)
    cfg_dict = {
        "path": spec.path, "window": spec.window, "return_type": spec.return_type,
        "window_mode": spec.window_mode,
    }
    _write_manifest(out, "ingest", cfg_dict, ["dataset.csv"], {"ingest": info})
    print(
        f"ingest: {data.n} samples x {data.p} tickers x window {spec.window} "
        f"({info['n_rows_dropped']} rows dropped) -> {out}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kernelgm",
        description="Kernel-based graphical model estimation: simulation, fitting, diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    specs = (
        ("simulate", cmd_simulate, "draw replicated datasets from the configured truth"),
        ("fit", cmd_fit, "fit the configured estimator on a dataset file over the penalty grid"),
        ("evaluate", cmd_evaluate, "score an estimate matrix against the configured truth"),
        ("replicate", cmd_replicate, "run the replicated simulate/tune/fit/score protocol"),
        ("ratecheck", cmd_ratecheck, "gradient concentration or error scaling diagnostics"),
        ("ingest", cmd_ingest, "window a price CSV into unit-normalized feature vectors"),
    )
    for name, func, help_text in specs:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--threads", type=int, default=None, help="worker count (recorded; execution is sequential)")
        if name == "ingest":
            p.add_argument(
                "--window-mode", choices=("returns", "prices"), default=None,
                help="window log returns (default) or raw prices",
            )
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvalidInputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
