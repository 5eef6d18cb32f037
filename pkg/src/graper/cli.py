"""Command-line interface.

Subcommands: ``fit``, ``predict``, ``simulate``, ``cv``, ``bench``.
Exit codes: 0 success, 1 input error, 2 numerical failure.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .core import HyperPriors
from .exceptions import InputError, NumericalError
from .io import (
    RunManifest,
    emit_fit,
    format_float,
    ingest,
    load_fit,
    read_csv_rows,
    write_csv,
    write_dataset_csv,
    write_groups_csv,
)
from .linear import FitConfig, fit_linear, predict_linear
from .logistic import fit_logistic, predict_logistic
from .multivariate import fit_linear_multivariate
from .simulate import (
    SWEEP_GRIDS,
    SimulationConfig,
    VARIANTS,
    benchmark_runtime,
    block_partition,
    cross_validate,
    run_grid,
    simulate_dataset,
)


class _Parser(argparse.ArgumentParser):
    """Argparse that reports bad usage through the package's input error."""

    def error(self, message):
        raise InputError(f"{message}\n{self.format_usage()}")


def _onoff(value):
    if value not in ("on", "off"):
        raise InputError(f"expected 'on' or 'off', got {value!r}")
    return value == "on"


def resolve_seed(value):
    """Explicit flag first, then the GRAPER_SEED environment variable."""
    if value is not None:
        return int(value)
    env = os.environ.get("GRAPER_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise InputError(f"GRAPER_SEED must be an integer, got {env!r}")
    return 0


def _add_fit_flags(sub):
    sub.add_argument("--model", choices=("linear", "logistic"), default="linear")
    sub.add_argument("--factorization", choices=("full", "multivariate"), default="full")
    sub.add_argument("--dense", action="store_true",
                     help="drop the spike: group-wise normal shrinkage only")
    sub.add_argument("--standardize", type=_onoff, default=True, metavar="on|off")
    sub.add_argument("--intercept", type=_onoff, default=True, metavar="on|off")
    sub.add_argument("--max-iter", type=int, default=3000)
    sub.add_argument("--tol", type=float, default=1e-5)
    sub.add_argument("--seed", type=int, default=None)


def build_parser():
    parser = _Parser(prog="graper", description=__doc__)
    commands = parser.add_subparsers(dest="command", required=True)

    fit = commands.add_parser("fit", help="fit a model to a data/groups CSV pair")
    fit.add_argument("--data", required=True)
    fit.add_argument("--groups", required=True)
    _add_fit_flags(fit)
    fit.add_argument("--out", required=True, help="output directory")

    predict = commands.add_parser("predict", help="apply a stored fit to new data")
    predict.add_argument("--fit", required=True, help="path to fit.json")
    predict.add_argument("--data", required=True)
    predict.add_argument("--out", required=True, help="output CSV path")

    simulate = commands.add_parser(
        "simulate", help="draw synthetic data; with --sweep, run the study grid"
    )
    simulate.add_argument("--n", type=int, default=100)
    simulate.add_argument("--p", type=int, default=300)
    simulate.add_argument("--n-groups", type=int, default=6)
    simulate.add_argument("--rho", type=float, default=0.0)
    simulate.add_argument("--tau", type=float, default=1.0)
    simulate.add_argument("--nu", type=float, default=0.2)
    simulate.add_argument("--gamma-levels", default=None,
                          help="comma-separated true slab precisions, one per group")
    simulate.add_argument("--n-test", type=int, default=1000)
    simulate.add_argument("--seed", type=int, default=None)
    simulate.add_argument("--sweep", choices=sorted(SWEEP_GRIDS), default=None)
    simulate.add_argument("--values", default=None,
                          help="comma-separated sweep values (defaults per sweep)")
    simulate.add_argument("--replicates", type=int, default=10)
    simulate.add_argument("--variants", default="sparse",
                          help=f"comma-separated subset of {','.join(VARIANTS)}")
    simulate.add_argument("--threads", type=int, default=1)
    simulate.add_argument("--out", required=True, help="output directory")

    cv = commands.add_parser("cv", help="k-fold cross-validation")
    cv.add_argument("--data", required=True)
    cv.add_argument("--groups", required=True)
    cv.add_argument("--folds", type=int, default=10)
    _add_fit_flags(cv)
    cv.add_argument("--threads", type=int, default=1)
    cv.add_argument("--out", required=True, help="output CSV path")

    bench = commands.add_parser("bench", help="runtime scaling benchmark")
    bench.add_argument("--dimension", choices=("n", "p", "G"), default="p")
    bench.add_argument("--values", default=None)
    bench.add_argument("--replicates", type=int, default=10)
    bench.add_argument("--sweeps", type=int, default=25,
                       help="fixed number of coordinate sweeps per fit")
    bench.add_argument("--variants", default="sparse,dense,multivariate")
    bench.add_argument("--threads", type=int, default=1)
    bench.add_argument("--seed", type=int, default=None)
    bench.add_argument("--out", required=True, help="output CSV path")

    return parser


def _fit_config(args, seed):
    return FitConfig(
        max_iter=args.max_iter,
        elbo_rel_tol=args.tol,
        seed=seed,
        dense_only=args.dense,
        standardize=args.standardize,
        intercept=args.intercept,
    )


def _dispatch_fit(args, data, groups, config):
    if args.factorization == "multivariate":
        if args.model == "logistic":
            return fit_logistic(data, groups, None, config, "multivariate")
        return fit_linear_multivariate(data, groups, None, config)
    if args.model == "logistic":
        return fit_logistic(data, groups, None, config)
    return fit_linear(data, groups, None, config)


def _manifest(args, command, seed, inputs, output):
    skip = {"command"}
    params = {
        key: value for key, value in sorted(vars(args).items())
        if key not in skip and not key.startswith("_")
    }
    params["seed"] = seed
    return RunManifest(
        command=command, inputs=inputs, output=str(output), params=params, seed=seed
    )


def cmd_fit(args):
    seed = resolve_seed(args.seed)
    data, groups = ingest(args.data, args.groups)
    config = _fit_config(args, seed)
    summary, state = _dispatch_fit(args, data, groups, config)
    outdir = Path(args.out)
    manifest = _manifest(
        args, "fit", seed, {"data": args.data, "groups": args.groups}, outdir
    )
    emit_fit(summary, state, manifest, outdir)
    return 0


def read_feature_matrix(path, feature_names):
    """Features from a data CSV; an optional leading response column is ignored."""
    header, rows = read_csv_rows(path)
    offset = 1 if header and header[0] == "response" else 0
    names = header[offset:]
    if names != list(feature_names):
        if len(names) != len(feature_names):
            raise InputError(
                f"{path}: expected {len(feature_names)} feature columns, got {len(names)}"
            )
        raise InputError(f"{path}: feature columns do not match the fit")
    X = np.empty((len(rows), len(names)))
    for i, row in enumerate(rows):
        for j, cell in enumerate(row[offset:]):
            try:
                X[i, j] = float(cell)
            except ValueError:
                raise InputError(
                    f"{path}: non-numeric value {cell!r} at row {i + 1}, "
                    f"column {names[j]}"
                ) from None
    if not np.all(np.isfinite(X)):
        raise InputError(f"{path}: non-finite feature values")
    return X


def cmd_predict(args):
    summary = load_fit(args.fit)
    X = read_feature_matrix(args.data, summary.feature_names)
    out = Path(args.out)
    manifest = _manifest(
        args, "predict", 0, {"fit": args.fit, "data": args.data}, out
    )
    if summary.model == "logistic":
        probs = predict_logistic(summary, X)
        rows = ([i + 1, float(p), int(p > 0.5)] for i, p in enumerate(probs))
        write_csv(out, ["sample", "probability", "class"], rows, manifest=manifest)
    else:
        preds = predict_linear(summary, X)
        rows = ([i + 1, float(val)] for i, val in enumerate(preds))
        write_csv(out, ["sample", "prediction"], rows, manifest=manifest)
    return 0


def cmd_simulate(args):
    seed = resolve_seed(args.seed)
    gamma_levels = None
    if args.gamma_levels:
        gamma_levels = tuple(float(v) for v in args.gamma_levels.split(","))
    cfg = SimulationConfig(
        n=args.n, p=args.p, n_groups=args.n_groups, rho=args.rho, tau=args.tau,
        nu=args.nu, gamma_levels=gamma_levels, seed=seed, n_test=args.n_test,
    )
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    manifest = _manifest(args, "simulate", seed, {}, outdir)

    if args.sweep is not None:
        values = None
        if args.values:
            values = [float(v) for v in args.values.split(",")]
            if args.sweep in ("p", "n"):
                values = [int(v) for v in values]
        variants = tuple(args.variants.split(","))
        rows = run_grid(
            cfg, args.sweep, values=values, replicates=args.replicates,
            variants=variants, threads=args.threads,
        )
        header = [
            "sweep", "value", "replicate", "seed", "variant", "rmse_y", "rmse_beta",
            "gamma_rank_corr", "pi_abs_err", "selection_f1", "seconds",
            "n_iterations", "converged", "gamma_hat", "pi_hat", "error",
        ]
        csv_rows = []
        for row in rows:
            csv_rows.append([
                row["sweep"], row["value"], row["replicate"], row["seed"],
                row["variant"],
                *(row.get(k, "") for k in (
                    "rmse_y", "rmse_beta", "gamma_rank_corr", "pi_abs_err",
                    "selection_f1", "seconds", "n_iterations", "converged",
                )),
                ";".join(format_float(v) for v in row.get("gamma_hat") or []),
                ";".join(format_float(v) for v in row.get("pi_hat") or []),
                row["error"],
            ])
        write_csv(outdir / "results.csv", header, csv_rows, manifest=manifest)
        return 0

    train, test, truth = simulate_dataset(cfg)
    groups = block_partition(cfg.p, cfg.n_groups)
    write_dataset_csv(outdir / "train.csv", train, manifest=manifest)
    write_dataset_csv(outdir / "test.csv", test, manifest=manifest)
    write_groups_csv(outdir / "groups.csv", groups, train.feature_names,
                     manifest=manifest)
    truth_payload = {
        "manifest": manifest.to_dict(),
        "beta_true": [float(v) for v in truth.beta_true],
        "s_true": [int(v) for v in truth.s_true],
        "gamma_true": [float(v) for v in truth.gamma_true],
        "pi_true": [float(v) for v in truth.pi_true],
    }
    with open(outdir / "truth.json", "w", encoding="utf-8") as handle:
        json.dump(truth_payload, handle, indent=1)
        handle.write("\n")
    return 0


def cmd_cv(args):
    seed = resolve_seed(args.seed)
    data, groups = ingest(args.data, args.groups)
    config = _fit_config(args, seed)
    factorization = "multivariate" if args.factorization == "multivariate" else "factorized"
    folds = cross_validate(
        data, groups, None, config, k_folds=args.folds, model=args.model,
        factorization=factorization, threads=args.threads,
    )
    out = Path(args.out)
    manifest = _manifest(
        args, "cv", seed, {"data": args.data, "groups": args.groups}, out
    )
    metric_keys = sorted({k for fold in folds for k in fold} - {
        "fold", "n_test", "gamma_hat", "pi_hat"
    })
    header = ["fold", "n_test", *metric_keys, "gamma_hat", "pi_hat"]
    rows = [
        [
            fold["fold"], fold["n_test"],
            *(fold.get(k, "") for k in metric_keys),
            ";".join(format_float(v) for v in fold.get("gamma_hat") or []),
            ";".join(format_float(v) for v in fold.get("pi_hat") or []),
        ]
        for fold in folds
    ]
    write_csv(out, header, rows, manifest=manifest)
    return 0


def cmd_bench(args):
    seed = resolve_seed(args.seed)
    values = None
    if args.values:
        values = [int(v) for v in args.values.split(",")]
    rows = benchmark_runtime(
        args.dimension, values=values, replicates=args.replicates,
        n_sweeps=args.sweeps, variants=tuple(args.variants.split(",")),
        base=SimulationConfig(seed=seed), threads=args.threads,
    )
    out = Path(args.out)
    manifest = _manifest(args, "bench", seed, {}, out)
    write_csv(
        out,
        ["dimension", "value", "replicate", "variant", "seconds", "n_sweeps"],
        (
            [r["dimension"], r["value"], r["replicate"], r["variant"],
             r["seconds"], r["n_sweeps"]]
            for r in rows
        ),
        manifest=manifest,
    )
    return 0


HANDLERS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "simulate": cmd_simulate,
    "cv": cmd_cv,
    "bench": cmd_bench,
}


def cli_main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return HANDLERS[args.command](args)
    except InputError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 2


def main(argv=None):
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
