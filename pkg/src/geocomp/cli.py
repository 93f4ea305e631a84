"""Command-line interface: fit, profile, predict, simulate, study.

Every command is reproducible: identical inputs, flags and seed produce
byte-identical output files. Exit codes: 0 success, 1 malformed input,
2 usage error, 3 numerical failure (non-convergence; files still written
where meaningful).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .io import fmt, load_fitfile, read_dataset, save_fitfile, write_dataset
from .mle import FitOptions, fit, lambda_names, profile_trace
from .predict import make_prediction_grid, predict_grid
from .simstudy import PRESETS, STUDY_PARAMS, SimConfig, preset_config, run_study, simulate_dataset
from .spatial import CorrelationFamily, CovarianceParams

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _table(rows: list[tuple[str, float, float, float, float]], level: float) -> str:
    lo_pct = 100 * (1 - level) / 2
    header = f"{'Parameter':<12}{'Estimate':>12}{'SE':>12}{lo_pct:>11.1f}%{100 - lo_pct:>11.1f}%"
    lines = [header]
    for name, est, se, lo, hi in rows:
        lines.append(f"{name:<12}{est:>12.4f}{se:>12.4f}{lo:>12.4f}{hi:>12.4f}")
    return "\n".join(lines)


def _family(args) -> CorrelationFamily:
    return CorrelationFamily(args.correlation, args.matern_smoothness)


def cmd_fit(args) -> int:
    dataset = read_dataset(args.dataset, denominator=args.denominator)
    init = None
    if args.init:
        with open(args.init, encoding="utf-8") as fh:
            doc = json.load(fh)
        init = CovarianceParams(
            sigma2=np.asarray(doc["sigma2"], dtype=float),
            tau2=np.asarray(doc["tau2"], dtype=float),
            phi=float(doc["phi"]),
            rho=np.asarray(doc.get("rho", []), dtype=float),
        )
    options = FitOptions(ci_level=args.ci_level)
    fitted = fit(dataset, _family(args), init=init, options=options)
    save_fitfile(args.out, fitted)
    print(f"log-likelihood: {fitted.loglik:.4f}   converged: {fitted.converged} "
          f"({fitted.iterations} iterations, |proj grad| {fitted.gradient_norm:.2e})")
    print(f"denominator part: {dataset.part_names[dataset.denominator]}   family: {fitted.family.family}")
    for note in fitted.notes:
        print(f"note: {note}")
    print(_table(fitted.summary_rows(), fitted.ci_level))
    print(f"fit written to {args.out}")
    return EXIT_OK if fitted.converged else EXIT_NUMERIC


def cmd_profile(args) -> int:
    fitted = load_fitfile(args.fitfile)
    dataset = read_dataset(args.dataset, denominator=fitted.part_names[fitted.denominator])
    m = fitted.params.cov.n_components
    known = lambda_names(m)
    params = args.params.split(",") if args.params else known
    for name in params:
        if name not in known:
            print(f"error: unknown covariance parameter {name!r}; choose from {known}", file=sys.stderr)
            return EXIT_USAGE
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ci_doc = {}
    print(f"{'Parameter':<12}{'MLE':>12}{'Lower':>12}{'Upper':>12}  (profile deviance, level {args.level})")
    for name in params:
        trace = profile_trace(
            fitted, dataset, name, n_points=args.grid_points, span_se=args.span, level=args.level
        )
        path = out_dir / f"profile_{name}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["parameter", "value", "deviance"])
            for g, d in zip(trace.grid, trace.deviance):
                writer.writerow([name, fmt(g), fmt(d)])
        lo, hi = trace.ci
        right = hi - trace.mle
        left = trace.mle - lo
        asymmetric = bool(np.isinf(hi) and np.isfinite(lo)) or bool(
            np.isfinite(right) and np.isfinite(left) and left > 0 and right > 2.0 * left
        )
        ci_doc[name] = {
            "mle": trace.mle,
            "lower": None if np.isinf(lo) else lo,
            "upper": None if np.isinf(hi) else hi,
            "level": trace.level,
            "right_tail_heavy": asymmetric,
        }
        print(f"{name:<12}{trace.mle:>12.4f}{lo:>12.4f}{hi:>12.4f}" + ("   [heavy right tail]" if asymmetric else ""))
    with open(out_dir / "profile_ci.json", "w", encoding="utf-8") as fh:
        json.dump(ci_doc, fh, indent=2)
        fh.write("\n")
    return EXIT_OK


def _qname(level: float) -> str:
    s = f"{level * 100:g}"
    return "q" + (s.zfill(2) if len(s) == 1 else s)


def cmd_predict(args) -> int:
    fitted = load_fitfile(args.fitfile)
    dataset = read_dataset(args.dataset, denominator=fitted.part_names[fitted.denominator])
    if dataset.part_names != fitted.part_names:
        print(
            f"error: dataset parts {dataset.part_names} differ from fitted parts {fitted.part_names}",
            file=sys.stderr,
        )
        return EXIT_INPUT
    if args.bbox:
        bbox = tuple(float(v) for v in args.bbox.split(","))
        if len(bbox) != 4:
            raise ValueError("--bbox expects xmin,ymin,xmax,ymax")
    else:
        coords = dataset.locations.coords
        bbox = (coords[:, 0].min(), coords[:, 1].min(), coords[:, 0].max(), coords[:, 1].max())
    grid = make_prediction_grid(bbox, args.grid_nx, args.grid_ny)
    levels = tuple(float(q) for q in args.quantiles.split(",")) if args.quantiles else ()
    preds = predict_grid(
        fitted,
        dataset,
        grid,
        k=args.gh_points,
        m=args.mc_samples,
        seed=args.seed if args.seed is not None else 0,
        quantile_levels=levels,
        include_nugget=not args.no_nugget,
    )
    parts = fitted.part_names
    header = ["x", "y"]
    for p in parts:
        header += [f"{p}_mean_gh", f"{p}_mean_mc"] + [f"{p}_{_qname(q)}" for q in levels]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for pr in preds:
            row = [fmt(pr.site[0]), fmt(pr.site[1])]
            for j, _ in enumerate(parts):
                row += [fmt(pr.mean_gh.parts[j]), fmt(pr.mean_mc.parts[j])]
                row += [fmt(pr.quantiles[q][j]) for q in levels]
            writer.writerow(row)
    print(f"{len(preds)} predictions written to {args.out}")
    return EXIT_OK


def _config_from_args(args, replicates: int = 1) -> SimConfig:
    if args.config == "custom":
        if not args.params:
            raise ValueError("--config custom requires --params FILE")
        with open(args.params, encoding="utf-8") as fh:
            doc = json.load(fh)
        return SimConfig(
            beta=tuple(doc["beta"]),
            sigma=tuple(doc["sigma"]),
            tau=tuple(doc["tau"]),
            phi=float(doc["phi"]),
            rho=float(doc["rho"]),
            n=args.n,
            replicates=replicates,
            base_seed=args.seed,
        )
    return preset_config(int(args.config), args.n, replicates=replicates, base_seed=args.seed)


def cmd_simulate(args) -> int:
    try:
        config = _config_from_args(args)
    except ValueError as err:
        if "perfect square" in str(err):
            print(f"error: {err}", file=sys.stderr)
            return EXIT_USAGE
        raise
    dataset = simulate_dataset(config, replicate_index=0)
    write_dataset(args.out, dataset)
    print(f"simulated dataset ({config.n} sites) written to {args.out}")
    return EXIT_OK


def cmd_study(args) -> int:
    try:
        config = _config_from_args(args, replicates=args.replicates)
    except ValueError as err:
        if "perfect square" in str(err):
            print(f"error: {err}", file=sys.stderr)
            return EXIT_USAGE
        raise
    summary = run_study(config, jobs=args.jobs)
    prefix = args.out_prefix
    rep_path = f"{prefix}_replicates.csv"
    with open(rep_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["replicate", "converged"]
        for p in STUDY_PARAMS:
            header += [f"est_{p}", f"lo_{p}", f"hi_{p}"]
        writer.writerow(header)
        for rec in summary.records:
            row = [rec.replicate, int(rec.converged)]
            for p in STUDY_PARAMS:
                if rec.converged:
                    lo, hi = rec.ci.get(p, (float("nan"), float("nan")))
                    row += [fmt(rec.estimates.get(p, float("nan"))), fmt(lo), fmt(hi)]
                else:
                    row += ["", "", ""]
            writer.writerow(row)
    summary_doc = {
        "config": {
            "beta": list(summary.config.beta),
            "sigma": list(summary.config.sigma),
            "tau": list(summary.config.tau),
            "phi": summary.config.phi,
            "rho": summary.config.rho,
            "n": summary.config.n,
            "replicates": summary.config.replicates,
            "base_seed": summary.config.base_seed,
            "family": summary.config.fam.family,
        },
        "replicates_converged": summary.replicates_converged,
        "unreliable": summary.unreliable,
        "truth": summary.truth,
        "mean_estimate": summary.mean_estimate,
        "bias": summary.bias,
        "coverage": summary.coverage,
        "coverage_count": summary.coverage_count,
    }
    sum_path = f"{prefix}_summary.json"
    with open(sum_path, "w", encoding="utf-8") as fh:
        json.dump(summary_doc, fh, indent=2, allow_nan=True)
        fh.write("\n")
    print(f"{summary.replicates_converged}/{summary.n_replicates} replicates converged")
    print(f"{'Parameter':<10}{'Truth':>10}{'Bias':>10}{'Coverage':>10}")
    for p in STUDY_PARAMS:
        print(f"{p:<10}{summary.truth[p]:>10.3f}{summary.bias[p]:>10.3f}{summary.coverage[p]:>10.3f}")
    print(f"written {rep_path}, {sum_path}")
    return EXIT_NUMERIC if summary.unreliable else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geocomp",
        description="Likelihood-based geostatistics for compositional data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit the spatial compositional model to a dataset CSV")
    p_fit.add_argument("dataset")
    p_fit.add_argument("--denominator", default=None, help="part name for the alr reference (default: most abundant)")
    p_fit.add_argument("--correlation", choices=["exponential", "spherical", "matern"], default="exponential")
    p_fit.add_argument("--matern-smoothness", type=float, default=1.5)
    p_fit.add_argument("--ci-level", type=float, default=0.95)
    p_fit.add_argument("--init", default=None, help="JSON file with sigma2/tau2/phi/rho starting values")
    p_fit.add_argument("--out", default="fit.json")
    p_fit.set_defaults(func=cmd_fit)

    p_prof = sub.add_parser("profile", help="profile-deviance traces and likelihood-ratio intervals")
    p_prof.add_argument("fitfile")
    p_prof.add_argument("dataset")
    p_prof.add_argument("--params", default=None, help="comma list of covariance parameters (default: all)")
    p_prof.add_argument("--grid-points", type=int, default=30)
    p_prof.add_argument("--span", type=float, default=4.0, help="grid half-width in SEs, floored at bounds")
    p_prof.add_argument("--level", type=float, default=0.95)
    p_prof.add_argument("--out-dir", default="profiles")
    p_prof.set_defaults(func=cmd_profile)

    p_pred = sub.add_parser("predict", help="predict compositions on a grid")
    p_pred.add_argument("fitfile")
    p_pred.add_argument("dataset")
    p_pred.add_argument("--grid-nx", type=int, default=20)
    p_pred.add_argument("--grid-ny", type=int, default=20)
    p_pred.add_argument("--bbox", default=None, help="xmin,ymin,xmax,ymax (default: data bounding box)")
    p_pred.add_argument("--gh-points", type=int, default=20)
    p_pred.add_argument("--mc-samples", type=int, default=10_000)
    p_pred.add_argument("--seed", type=int, default=None)
    p_pred.add_argument("--quantiles", default="0.05,0.95")
    p_pred.add_argument("--no-nugget", action="store_true", help="predict the noise-free signal")
    p_pred.add_argument("--out", default="predictions.csv")
    p_pred.set_defaults(func=cmd_predict)

    p_sim = sub.add_parser("simulate", help="simulate a dataset from a reference configuration")
    p_sim.add_argument("--config", choices=["1", "2", "3", "custom"], default="1")
    p_sim.add_argument("--params", default=None, help="JSON file for --config custom")
    p_sim.add_argument("--n", type=int, default=100, help="grid size (perfect square)")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", default="simulated.csv")
    p_sim.set_defaults(func=cmd_simulate)

    p_study = sub.add_parser("study", help="bias/coverage replication study")
    p_study.add_argument("--config", choices=["1", "2", "3", "custom"], default="1")
    p_study.add_argument("--params", default=None)
    p_study.add_argument("--n", type=int, default=100)
    p_study.add_argument("--replicates", type=int, default=100)
    p_study.add_argument("--seed", type=int, default=0)
    p_study.add_argument("--jobs", type=int, default=1)
    p_study.add_argument("--out-prefix", default="study")
    p_study.set_defaults(func=cmd_study)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "predict" and args.mc_samples > 0 and args.seed is None:
        parser.error("--seed is required when --mc-samples > 0")
    try:
        return args.func(args)
    except (ValueError, OSError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except np.linalg.LinAlgError as err:
        print(f"numerical error: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
