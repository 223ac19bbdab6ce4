"""Command-line experiment runner.

Subcommands::

    estimate   one interval from a labeled and an unlabeled CSV (JSON on stdout)
    sweep      mean widths, width ratios and coverage over labeled sample sizes (CSV)
    min-n      smallest n whose mean width matches classical on the full pool (JSON)
    pairs      separation fractions over model pairs from per-model label files (CSV)
    coverage   synthetic coverage study, optionally with a frequentist recheck
    synth      write synthetic labeled/unlabeled CSVs

Exit codes: 0 success, 1 runtime failure, 2 invalid input. The default seed
comes from the ``BAYESPPI_SEED`` environment variable when set.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
import warnings
from dataclasses import replace

from .dataio import LABEL_KINDS, LINEARIZATIONS, DataValidationError, dumps, load_csv, \
    report_to_dict, write_csv
from .engine import ENGINES, EngineConfig
from .estimators import METHODS
from .experiments import load_model_labels, min_n, pair_separation, sweep
from .methods import EstimatorSpec, classical_for, run
from .partition import PartitionSpec
from . import synthcov

SEED_ENV = "BAYESPPI_SEED"

ALIASES = {
    "diff": "difference_bayes",
    "difference": "difference_bayes",
    "strat": "stratified",
    "chain": "chain_rule",
    "abstain": "chain_rule_abstain",
    "sxs": "sxs_chain_rule",
    "paired": "sxs_classical_paired",
    "cp": "classical_proportion_cp",
}


class UsageError(DataValidationError):
    """Invalid flag combination."""


# ------------------------------------------------------------------ parsing

def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV, "0")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={raw!r} is not an integer") from None


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _int_pair(text: str) -> tuple[int, int]:
    values = _int_list(text)
    if len(values) != 2 or values[0] > values[1]:
        raise argparse.ArgumentTypeError(f"expected LOW,HIGH with LOW <= HIGH, got {text!r}")
    return values[0], values[1]


def _partitions(text: str):
    if text == "auto":
        return "auto"
    try:
        K = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or 'auto', got {text!r}")
    if K < 1:
        raise argparse.ArgumentTypeError("partition count must be >= 1")
    return K


def _ptune(text: str):
    if text == "auto":
        return "auto"
    try:
        lam = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number in [0, 1] or 'auto', got {text!r}")
    if not 0.0 <= lam <= 1.0:
        raise argparse.ArgumentTypeError("lambda must lie in [0, 1]")
    return lam


def _engine_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("interval engine")
    g.add_argument("--level", type=float, default=0.95, help="interval level (default 0.95)")
    g.add_argument("--samples", "-T", type=int, default=10_000,
                   help="Monte Carlo draws or bootstrap replicates (default 10000)")
    g.add_argument("--engine", choices=ENGINES, default="mci",
                   help="posterior integration or nonparametric bootstrap (default mci)")
    g.add_argument("--seed", type=int, default=None,
                   help=f"master seed (default ${SEED_ENV} or 0)")


def _method_args(p: argparse.ArgumentParser, multiple: bool = False) -> None:
    g = p.add_argument_group("estimator")
    names = ", ".join(list(METHODS) + sorted(ALIASES))
    if multiple:
        g.add_argument("--methods", default="difference_bayes,stratified",
                       help=f"comma-separated methods; choices: {names}")
    else:
        g.add_argument("--method", default="chain_rule", help=f"one of: {names}")
    g.add_argument("--partitions", type=_partitions, default=5, metavar="K|auto",
                   help="partition count for stratified methods (default 5)")
    g.add_argument("--tree", action="store_true",
                   help="partition with a regression tree instead of equal-frequency bins")
    g.add_argument("--ptune", type=_ptune, nargs="?", const="auto", default=None,
                   metavar="LAMBDA",
                   help="power tuning; bare flag estimates lambda, or give a value in [0, 1]")
    g.add_argument("--linearize", choices=sorted(LINEARIZATIONS), default="default",
                   help="token-to-number map for abstaining autoraters (default: n=0 y=1 u=0.5)")
    g.add_argument("--threshold", type=float, default=0.5,
                   help="score cut for turning real scores into a binary autorater")


def _kind_arg(p: argparse.ArgumentParser, default: str = "real") -> None:
    p.add_argument("--kind", choices=LABEL_KINDS, default=default,
                   help=f"label kind of the input files (default {default})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bayesppi",
        description="Credible intervals combining a few human labels with many autorater labels.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="exit codes: 0 ok, 1 runtime error, 2 invalid input",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="one interval as JSON")
    p.add_argument("labeled", help="CSV with columns f, y (optional id, fallback)")
    p.add_argument("unlabeled", help="CSV with column f (optional id, fallback)")
    _kind_arg(p)
    _method_args(p)
    _engine_args(p)
    p.add_argument("--output", "-o", help="write JSON here instead of stdout")

    p = sub.add_parser("sweep", help="width and coverage over labeled sample sizes")
    p.add_argument("pool", help="labeled pool CSV with columns f, y")
    p.add_argument("--unlabeled", help="extra autorater-only rows")
    _kind_arg(p)
    p.add_argument("--n-values", type=_int_list, default=[100, 200, 300, 400, 500],
                   help="comma-separated labeled sample sizes")
    p.add_argument("--trials", type=int, default=100, help="trials per n (default 100)")
    _method_args(p, multiple=True)
    _engine_args(p)
    p.add_argument("--output", "-o", help="write CSV here instead of stdout")

    p = sub.add_parser("min-n", help="smallest n matching classical width on the full pool")
    p.add_argument("pool", help="labeled pool CSV with columns f, y")
    p.add_argument("--unlabeled", help="extra autorater-only rows")
    _kind_arg(p)
    _method_args(p)
    _engine_args(p)
    p.add_argument("--trials", type=int, default=10,
                   help="subsamples averaged per n (default 10)")
    p.add_argument("--grid-steps", type=int, default=10, help="coarse grid points (default 10)")
    p.add_argument("--extrapolate", action="store_true",
                   help="also report n_plus, the extrapolated classical label count")
    p.add_argument("--output", "-o", help="write JSON here instead of stdout")

    p = sub.add_parser("pairs", help="pair-separation fractions from per-model label files")
    p.add_argument("models", nargs="+",
                   help="per-model CSVs with columns id, human, autorater (0/1)")
    p.add_argument("--n-values", type=_int_list, default=[50, 100, 200, 400])
    p.add_argument("--trials", type=int, default=50, help="subsamples per pair and n")
    _engine_args(p)
    p.add_argument("--output", "-o", help="write CSV here instead of stdout")

    p = sub.add_parser("coverage", help="synthetic coverage study")
    p.add_argument("--world", choices=("pools", "sxs-pools", "fig1", "regime"), default="pools",
                   help="demo binary pools, demo side-by-side pools, the single binary "
                        "preset, or the two-regime bias world")
    p.add_argument("--pool", action="append", default=[], metavar="CSV",
                   help="fit worlds from this labeled pool instead of the demo pools "
                        "(repeatable; uses --kind)")
    _kind_arg(p, default="binary")
    p.add_argument("--noise", type=float, default=0.5, help="regime world noise (default 0.5)")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--n-range", type=_int_pair, default=None, metavar="LOW,HIGH",
                   help="labeled size range (default 100,500; 500,1000 for sxs-pools)")
    p.add_argument("--N-range", type=_int_pair, default=None, metavar="LOW,HIGH",
                   help="unlabeled size range (default 3000,4000; 2000,4000 for sxs-pools)")
    p.add_argument("--n-ref", type=int, default=300,
                   help="labeled items used to fit each pool's world posterior")
    p.add_argument("--recheck", action="store_true",
                   help="rerun at parameter values that produced misses")
    p.add_argument("--recheck-mode", choices=("fixed", "resample"), default="fixed")
    p.add_argument("--per-theta-trials", type=int, default=1000)
    p.add_argument("--k-thetas", type=int, default=20)
    _method_args(p)
    _engine_args(p)
    p.add_argument("--json", help="write the coverage report as JSON")
    p.add_argument("--csv", help="write one row per trial as CSV")

    p = sub.add_parser("synth", help="write synthetic labeled and unlabeled CSVs")
    p.add_argument("labeled_out")
    p.add_argument("unlabeled_out")
    p.add_argument("--world", choices=("binary", "fig1", "regime", "sxs"), default="binary")
    p.add_argument("--p-h", type=float, default=0.65,
                   help="human positive rate (binary) or win rate (sxs)")
    p.add_argument("--p-l", type=float, default=0.25, help="loss rate for sxs worlds")
    p.add_argument("--agreement", type=float, default=0.9)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--N", type=int, default=3000)
    p.add_argument("--seed", type=int, default=None,
                   help=f"data seed (default ${SEED_ENV} or 0)")
    return parser


# ------------------------------------------------------------ spec building

def _engine_cfg(args) -> EngineConfig:
    try:
        return EngineConfig(T=args.samples, engine=args.engine, B=args.samples,
                            level=args.level, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _spec(name: str, args, cfg: EngineConfig) -> EstimatorSpec:
    method = ALIASES.get(name.strip(), name.strip())
    if method not in METHODS:
        raise UsageError(f"unknown method {name!r}")
    if args.ptune is not None and method == "difference_bayes":
        method = "difference_ptune"
    if args.ptune is not None and method == "stratified":
        method = "stratified_ptune"
    partitions = None
    if method.startswith("stratified"):
        partitions = PartitionSpec("regression_tree" if args.tree else "equal_frequency",
                                   args.partitions)
    ptune = args.ptune if method in ("difference_ptune", "difference_classical") else None
    return EstimatorSpec(method, partitions, LINEARIZATIONS[args.linearize], cfg, ptune,
                         args.threshold)


def _emit_text(text: str, path) -> None:
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ----------------------------------------------------------------- commands

def cmd_estimate(args) -> int:
    cfg = _engine_cfg(args)
    ds = load_csv(args.labeled, args.unlabeled, args.kind)
    spec = _spec(args.method, args, cfg)
    report = run(spec, ds)
    out = report_to_dict(report, cfg)
    out["n"], out["N"] = ds.n, ds.N
    _emit_text(dumps(out) + "\n", args.output)
    return 0


def cmd_sweep(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    cfg = _engine_cfg(args)
    pool = load_csv(args.pool, args.unlabeled, args.kind)
    specs = [_spec(m, args, cfg) for m in args.methods.split(",") if m.strip()]
    report = sweep(pool, specs, args.n_values, args.trials, args.seed, cfg)
    if args.output:
        report.to_csv(args.output)
    else:
        report.to_csv(sys.stdout)
    return 0


def cmd_min_n(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    cfg = _engine_cfg(args)
    pool = load_csv(args.pool, args.unlabeled, args.kind)
    spec = _spec(args.method, args, cfg)
    result = min_n(pool, spec, args.trials, args.seed, args.grid_steps, cfg)
    out = result.to_dict()
    out.update(method=spec.label, pool_n=pool.n, pool_N=pool.N,
               baseline_method=classical_for(pool, cfg).label, ratio=result.n_min / pool.n)
    if not args.extrapolate:
        out.pop("n_plus")
        out.pop("n_plus_extrapolated")
    _emit_text(dumps(out) + "\n", args.output)
    return 0


def cmd_pairs(args) -> int:
    if len(args.models) < 2:
        raise UsageError("pairs needs at least two model label files")
    cfg = _engine_cfg(args)
    models = {}
    for path in args.models:
        name = os.path.splitext(os.path.basename(path))[0]
        if name in models:
            raise UsageError(f"two model files share the name {name!r}")
        models[name] = load_model_labels(path)
    result = pair_separation(models, args.n_values, args.trials, args.seed, cfg)
    fh = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n", "pairs", "trials", "sxs_classical_paired", "sxs_chain_rule"])
        for r in result["rows"]:
            writer.writerow([r["n"], r["pairs"], r["trials"], repr(r["sxs_classical_paired"]),
                             repr(r["sxs_chain_rule"])])
    finally:
        if args.output:
            fh.close()
    return 0


def _coverage_world(args):
    if args.pool:
        pools = [load_csv(p, None, args.kind) for p in args.pool]
        return synthcov.fit_worlds_from_pool(pools, args.n_ref, args.seed), (100, 500), \
            (3000, 4000)
    if args.world == "pools":
        pools = synthcov.demo_binary_pools(args.seed)
        return synthcov.fit_worlds_from_pool(pools, args.n_ref, args.seed), (100, 500), \
            (3000, 4000)
    if args.world == "sxs-pools":
        pools = synthcov.demo_sxs_pools(args.seed)
        return synthcov.fit_worlds_from_pool(pools, args.n_ref, args.seed), (500, 1000), \
            (2000, 4000)
    if args.world == "fig1":
        return synthcov.FIG1_WORLD, (100, 100), (5000, 5000)
    return synthcov.two_regime_world(args.noise), (100, 500), (3000, 4000)


def cmd_coverage(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    cfg = _engine_cfg(args)
    world, n_range, N_range = _coverage_world(args)
    spec = _spec(args.method, args, cfg)
    report = synthcov.coverage_run(world, spec, args.trials, args.n_range or n_range,
                                   args.N_range or N_range, args.seed)
    out = {"method": spec.label, "world": "pool" if args.pool else args.world,
           "coverage": report.summary()}
    if args.recheck:
        if not report.failures:
            raise RuntimeError("no coverage misses to recheck")
        recheck = synthcov.frequentist_recheck(report, spec, args.per_theta_trials,
                                               args.k_thetas, args.seed, args.recheck_mode)
        out["recheck"] = recheck.summary()
    if args.json:
        report.to_json(args.json)
    if args.csv:
        report.to_csv(args.csv)
    sys.stdout.write(dumps(out) + "\n")
    return 0


def cmd_synth(args) -> int:
    if args.world == "binary":
        world = synthcov.BinaryWorld.symmetric(args.p_h, args.agreement)
    elif args.world == "fig1":
        world = synthcov.FIG1_WORLD
    elif args.world == "sxs":
        world = synthcov.sxs_world((args.p_h, args.p_l, 1.0 - args.p_h - args.p_l),
                                   args.agreement)
    else:
        world = synthcov.two_regime_world(args.noise)
    ds = synthcov.generate(world, args.n, args.N, args.seed)
    ids_l = tuple(f"L{i:06d}" for i in range(ds.n))
    ids_u = tuple(f"U{i:06d}" for i in range(ds.N))
    write_csv(replace(ds, labeled_ids=ids_l, unlabeled_ids=ids_u), args.labeled_out,
              args.unlabeled_out)
    return 0


COMMANDS = {
    "estimate": cmd_estimate,
    "sweep": cmd_sweep,
    "min-n": cmd_min_n,
    "pairs": cmd_pairs,
    "coverage": cmd_coverage,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.seed is None:
            args.seed = _default_seed()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return COMMANDS[args.command](args)
    except (DataValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report and exit non-zero
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
