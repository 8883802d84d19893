"""Command-line interface.

Subcommands: fit, region, contains, coverage, test-homoscedastic, select,
simulate. On failure a single line ``error: CODE: message`` goes to stderr
and the exit status is 2.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import files, homoscedasticity, regions, selection, sim
from .errors import DimensionMismatchError, FrechetUQError
from .frechet import fit

MODES = ("homo", "knn", "conformal", "unconditional")


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _add_data_args(p, responses_required=True, predictors_required=True):
    p.add_argument("--predictors", required=predictors_required,
                   help="CSV with a header row, one predictor per column")
    p.add_argument("--responses", required=responses_required,
                   help="CSV with a header row, one response per row")


def _add_space_args(p):
    p.add_argument("--space", choices=("euclidean", "wasserstein", "laplacian"),
                   default="euclidean")
    p.add_argument("--d2", default="same",
                   help="region distance: same, euclidean, sup or frobenius")
    p.add_argument("--responses-format", choices=("values", "series"), default="values",
                   help="wasserstein only: quantile values on the grid, or raw series")
    p.add_argument("--grid", type=_floats, default=None,
                   help="wasserstein quantile levels (default: midpoint grid)")
    p.add_argument("--grid-size", type=int, default=100,
                   help="grid size when converting raw series")
    p.add_argument("--bounds", type=_floats, default=None, help="support bounds lo,hi")
    p.add_argument("--edge-bound", type=float, default=None,
                   help="laplacian maximum edge weight (default: largest observed)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="frechet-uq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a global Fréchet regression")
    _add_data_args(p)
    _add_space_args(p)
    p.add_argument("--cov-ddof", type=int, choices=(0, 1), default=0,
                   help="predictor covariance denominator n - ddof (0 reproduces least squares)")
    p.add_argument("--out", required=True, help="model file to write")

    p = sub.add_parser("region", help="build a prediction region from held-out data")
    p.add_argument("--model", help="model file from 'fit' (not needed for unconditional)")
    _add_data_args(p, predictors_required=False)
    _add_space_args(p)
    p.add_argument("--mode", choices=MODES, default="homo")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--splits", type=_floats, default=None,
                   help="conformal: residual/calibration fractions of the held-out data; "
                        "unconditional: center/radius fractions")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="region file to write")

    for name, text in (("contains", "membership of (x, y) pairs"),
                       ("coverage", "fraction of (x, y) pairs inside the region")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--region", required=True)
        _add_data_args(p, predictors_required=False)
        p.add_argument("--responses-format", choices=("values", "series"), default="values")
        if name == "contains":
            p.add_argument("--out", default=None, help="CSV to write (default: stdout)")

    p = sub.add_parser("test-homoscedastic", help="distance-covariance permutation test")
    p.add_argument("--model", required=True)
    _add_data_args(p)
    p.add_argument("--responses-format", choices=("values", "series"), default="values")
    p.add_argument("--permutations", type=int, default=homoscedasticity.DEFAULT_PERMUTATIONS)
    p.add_argument("--alpha", type=float, default=0.05, help="test level")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("select", help="variable selection report")
    _add_data_args(p)
    _add_space_args(p)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--splits", type=_floats, default=(0.5, 0.5))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="CSV to write (default: stdout)")

    p = sub.add_parser("simulate", help="run a simulation experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: available CPUs)")
    return parser


# ---------------------------------------------------------------------------
# helpers


def _load_responses(args, names=None):
    _, values = files.read_table(args.responses)
    return files.build_space(
        args.space, values, d2=args.d2, grid=args.grid,
        bounds=None if args.bounds is None else tuple(args.bounds),
        edge_bound=args.edge_bound, series=args.responses_format == "series",
        grid_size=args.grid_size,
    )


def _load_xy(args):
    names, X = files.read_table(args.predictors)
    space, Y = _load_responses(args)
    if X.shape[0] != Y.shape[0]:
        raise DimensionMismatchError(
            f"{X.shape[0]} predictor rows but {Y.shape[0]} response rows"
        )
    return names, X, space, Y


def _responses_in(space, path, fmt="values"):
    _, values = files.read_table(path)
    if fmt == "series":
        if space.kind != "wasserstein":
            raise FrechetUQError("raw series input only applies to wasserstein responses")
        return space.from_series(values)
    size = int(np.prod(space.point_shape))
    if values.shape[1] != size:
        raise DimensionMismatchError(
            f"{path} has {values.shape[1]} columns but {space.describe()} points need {size}")
    return space.validate(values.reshape((values.shape[0],) + space.point_shape))


def _xy_for_model(model, args):
    _, X = files.read_table(args.predictors)
    Y = _responses_in(model.space, args.responses, args.responses_format)
    if X.shape[0] != Y.shape[0]:
        raise DimensionMismatchError(f"{X.shape[0]} predictor rows but {Y.shape[0]} response rows")
    return X, Y


def _emit(text, out=None):
    if out is None:
        sys.stdout.write(text)
    else:
        files.atomic_write(out, text)


def _csv(rows, columns):
    lines = [",".join(columns)]
    lines += [",".join(sim.format_value(r[c]) for c in columns) for r in rows]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# commands


def cmd_fit(args):
    _, X, space, Y = _load_xy(args)
    model = fit(X, Y, space, args.cov_ddof)
    files.save_model(args.out, model)
    print(f"n={model.n} p={model.p} space={space.describe()}")


def cmd_region(args):
    alpha = args.alpha
    if args.mode == "unconditional":
        space, Y = _load_responses(args)
        frac = None if args.splits is None else args.splits[0]
        region = regions.fit_unconditional(Y, alpha, space, frac, seed=args.seed)
        files.save_region(args.out, region)
        print(f"mode=unconditional alpha={alpha!r} n={Y.shape[0]} "
              f"radius={region.radius_rule.value!r}")
        return
    if args.model is None:
        raise FrechetUQError(f"--model is required for mode {args.mode}", code="MODE_ARGS")
    if args.predictors is None:
        raise FrechetUQError(f"--predictors is required for mode {args.mode}", code="MODE_ARGS")
    if args.mode in ("knn", "conformal") and args.k is None:
        raise FrechetUQError(f"--k is required for mode {args.mode}", code="MODE_ARGS")
    if args.mode == "conformal" and args.splits is None:
        raise FrechetUQError("conformal mode needs --splits for the calibration split",
                             code="MODE_ARGS")
    model = files.load_model(args.model)
    X, Y = _xy_for_model(model, args)
    rng = np.random.default_rng(args.seed)
    if args.mode == "conformal":
        fr = tuple(args.splits)
        if len(fr) != 2:
            raise FrechetUQError("--splits must give two fractions (residuals, calibration)",
                                 code="MODE_ARGS")
        parts = regions.split(X.shape[0], fr, rng)
        sample = regions.residuals(model, X[parts.train], Y[parts.train], seed=rng)
        calib = regions.residuals(model, X[parts.test], Y[parts.test], seed=rng)
    else:
        sample = regions.residuals(model, X, Y, seed=rng)
    if args.mode in ("knn", "conformal") and not 1 <= args.k <= len(sample):
        raise FrechetUQError(f"k={args.k} outside [1, {len(sample)}]", code="K_RANGE")
    if args.mode == "homo":
        rule = regions.fit_homoscedastic(sample, alpha)
    elif args.mode == "knn":
        rule = regions.fit_heteroscedastic_knn(sample, alpha, args.k)
    else:
        rule = regions.fit_heteroscedastic_conformal(sample, calib, alpha, args.k)
    region = regions.PredictionRegion(model, rule, alpha, model.space)
    files.save_region(args.out, region, args.model)
    radii = region.radius_at(sample.predictors)
    print(f"mode={args.mode} alpha={alpha!r} n2={len(sample)} "
          f"radius_min={float(radii.min())!r} radius_median={float(np.median(radii))!r} "
          f"radius_max={float(radii.max())!r}")


def _region_data(args):
    region = files.load_region(args.region)
    Y = _responses_in(region.space, args.responses, args.responses_format)
    if args.predictors is None:
        if not isinstance(region.center, np.ndarray):
            raise FrechetUQError("--predictors is required for a model-centred region",
                                 code="MODE_ARGS")
        X = None
    else:
        _, X = files.read_table(args.predictors)
        if X.shape[0] != Y.shape[0]:
            raise DimensionMismatchError(
                f"{X.shape[0]} predictor rows but {Y.shape[0]} response rows")
    return region, X, Y


def cmd_contains(args):
    region, X, Y = _region_data(args)
    inside = region.contains_many(X, Y)
    rows = [{"row": i + 1, "contains": bool(v)} for i, v in enumerate(inside)]
    _emit(_csv(rows, ["row", "contains"]), args.out)


def cmd_coverage(args):
    region, X, Y = _region_data(args)
    print(f"coverage={regions.coverage(region, X, Y)!r} n={Y.shape[0]}")


def cmd_test_homoscedastic(args):
    if args.permutations < 1:
        raise FrechetUQError(f"--permutations must be >= 1, got {args.permutations}",
                             code="BAD_B")
    model = files.load_model(args.model)
    X, Y = _xy_for_model(model, args)
    sample = regions.residuals(model, X, Y, seed=args.seed)
    result = homoscedasticity.test(sample.predictors, sample.residuals, args.permutations,
                                   args.seed)
    print(result.to_text())
    print(f"level={args.alpha!r}")
    print(f"decision={homoscedasticity.decide(result.p_value, args.alpha)}")


def cmd_select(args):
    names, X, space, Y = _load_xy(args)
    if X.shape[1] < 2:
        raise FrechetUQError("variable selection needs at least two predictors", code="NEED_P2")
    reports = selection.select_variables(X, Y, space, args.alpha, tuple(args.splits),
                                         seed=args.seed, names=names)
    columns = ["Variable No.", "Variable Name", "Selected", "Raw p-value"]
    _emit(_csv(selection.report_rows(reports), columns), args.out)


def cmd_simulate(args):
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        raise FrechetUQError(f"cannot read {args.config}: {exc.strerror}",
                             code="CONFIG_PARSE") from exc
    config = files.parse_config(text, args.config)
    if args.seed is not None:
        config.seed = args.seed
    config.workers = args.workers or os.cpu_count() or 1
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if config.experiment == "selection":
        report = sim.run_selection_experiment(config)
        rows = report.rows
        sim.write_csv(out / "selection.csv", rows,
                      ["n", "replicate", "true_detected", "false_positives", "p_values"])
        summary = report.summary()
    else:
        runner = (sim.run_consistency_experiment if config.experiment == "consistency"
                  else sim.run_coverage_experiment)
        report = runner(config)
        value = "error" if config.experiment == "consistency" else "coverage"
        rows = [{**r, value: r["coverage"]} for r in report.rows]
        sim.write_csv(out / f"{config.experiment}.csv", rows,
                      ["n", "alpha", "k", "replicate", value])
        summary = report.summary()
    sim.write_csv(out / "summary.csv", summary)
    # workers never changes results, so it is left out of the provenance echo
    resolved = files.format_config(config).replace(f"workers = {config.workers}\n", "")
    files.atomic_write(out / "resolved_config.txt", resolved)
    sys.stdout.write(resolved)
    print(f"wrote {len(rows)} rows to {out}")


COMMANDS = {
    "fit": cmd_fit,
    "region": cmd_region,
    "contains": cmd_contains,
    "coverage": cmd_coverage,
    "test-homoscedastic": cmd_test_homoscedastic,
    "select": cmd_select,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except FrechetUQError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
