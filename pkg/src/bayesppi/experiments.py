"""Width sweeps, minimal-n search and pair-separation studies.

All randomness is derived from a master seed and the (n, trial) indices,
so each routine is deterministic given its arguments.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dataio import Dataset, DataValidationError, split_pool, synthesize_sxs
from .engine import EngineConfig
from .estimators import sxs_classical_paired, sxs_estimate
from .methods import EstimatorSpec, classical_for, run
from .synthcov import CategoricalWorld, gen_categorical


def _rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


def _est_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(2**63))


def pool_target(pool: Dataset) -> float:
    """Pool-wide human estimand used as a stand-in for the true value."""
    if pool.label_kind == "sxs3":
        y = pool.labeled_y
        return float(np.mean(y == "w") - np.mean(y == "l"))
    return float(np.mean(np.asarray(pool.labeled_y, dtype=float)))


# -------------------------------------------------------------------- sweep

@dataclass
class SweepReport:
    rows: list = field(default_factory=list)

    FIELDS = ("method", "n", "trials", "mean_width", "mean_width_ratio", "coverage",
              "failed_to_run")

    def to_csv(self, path_or_file) -> None:
        own = isinstance(path_or_file, (str, Path))
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.FIELDS)
            for r in self.rows:
                writer.writerow([r["method"], r["n"], r["trials"], repr(r["mean_width"]),
                                 repr(r["mean_width_ratio"]), repr(r["coverage"]),
                                 r["failed_to_run"]])
        finally:
            if own:
                fh.close()


def sweep(pool: Dataset, methods: Sequence[EstimatorSpec], n_values: Sequence[int],
          trials_per_n: int = 100, seed: int = 0,
          cfg: EngineConfig = EngineConfig()) -> SweepReport:
    """Mean widths, width ratios to classical, and coverage against the pool mean.

    Each trial draws ``n`` labeled rows without replacement; the remaining
    rows contribute only their autorater labels.
    """
    if trials_per_n < 1:
        raise ValueError("trials_per_n must be >= 1")
    for n in n_values:
        if not 1 <= n <= pool.n:
            raise DataValidationError(f"n={n} exceeds the {pool.n} labeled pool rows")
    baseline = classical_for(pool, cfg)
    target = pool_target(pool)
    labels = [baseline.label] + [m.label for m in methods if m.label != baseline.label]
    specs = {baseline.label: baseline}
    specs.update({m.label: m for m in methods})
    report = SweepReport()
    for n in n_values:
        acc = {lab: {"w": [], "r": [], "hit": 0, "err": 0} for lab in labels}
        for t in range(trials_per_n):
            rng = _rng(seed, n, t)
            ds = split_pool(pool, n, rng)
            s = _est_seed(rng)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                base = run(baseline.with_seed(s), ds)
                for lab in labels:
                    try:
                        rep = base if lab == baseline.label else run(specs[lab].with_seed(s), ds)
                    except (ValueError, ArithmeticError):
                        acc[lab]["err"] += 1
                        continue
                    acc[lab]["w"].append(rep.width)
                    acc[lab]["r"].append(rep.width / base.width if base.width > 0 else
                                         float("nan"))
                    acc[lab]["hit"] += int(rep.interval.contains(target))
        for lab in labels:
            a = acc[lab]
            ran = len(a["w"])
            report.rows.append({
                "method": lab, "n": n, "trials": ran,
                "mean_width": float(np.mean(a["w"])) if ran else float("nan"),
                "mean_width_ratio": 1.0 if lab == baseline.label else
                (float(np.mean(a["r"])) if ran else float("nan")),
                "coverage": a["hit"] / ran if ran else float("nan"),
                "failed_to_run": a["err"],
            })
    return report


# -------------------------------------------------------------------- min n

@dataclass
class MinNResult:
    n_min: int
    found: bool
    baseline_width: float
    evaluated: dict
    n_plus: float
    n_plus_extrapolated: bool = True

    def to_dict(self) -> dict:
        return {"n_min": self.n_min, "found": self.found,
                "baseline_width": self.baseline_width,
                "evaluated": {str(k): v for k, v in sorted(self.evaluated.items())},
                "n_plus": self.n_plus, "n_plus_extrapolated": self.n_plus_extrapolated}


def min_n(pool: Dataset, spec: EstimatorSpec, trials: int = 10, seed: int = 0,
          grid_steps: int = 10, cfg: EngineConfig = EngineConfig()) -> MinNResult:
    """Smallest labeled sample size whose trial-averaged width matches the
    classical width on the whole labeled pool.

    A coarse grid over n is refined by bisection. ``n_plus`` extrapolates,
    under 1/sqrt(n) scaling, how many labels the classical method would need
    to match the method's width at the largest evaluated n. When the method
    never reaches the baseline, ``n_min`` is the pool size and ``found`` is
    False.
    """
    baseline_spec = classical_for(pool, cfg)
    full = Dataset(pool.labeled_f, pool.labeled_y, pool.unlabeled_f, pool.label_kind)
    baseline = run(baseline_spec.with_seed(seed), full).width
    cache: dict[int, float] = {}

    def mean_width(n: int) -> float:
        if n not in cache:
            widths = []
            for t in range(trials):
                rng = _rng(seed, t)
                ds = split_pool(pool, n, rng) if n < pool.n else full
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    widths.append(run(spec.with_seed(_est_seed(rng)), ds).width)
            cache[n] = float(np.mean(widths))
        return cache[n]

    lo_n = 2
    # with no extra unlabeled rows, keep at least two rows unlabeled
    top = pool.n if pool.N else pool.n - 2
    step = max(1, top // grid_steps)
    grid = sorted(set(list(range(step, top, step)) + [top]))
    passing = [n for n in grid if mean_width(n) <= baseline]
    top_width = mean_width(top)
    n_plus = pool.n * (baseline / top_width) ** 2 if top_width > 0 else math.inf
    if not passing:
        return MinNResult(pool.n, False, baseline, dict(cache), n_plus)
    hi = passing[0]
    below = [n for n in grid if n < hi]
    lo = below[-1] if below else lo_n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if mid >= lo_n and mean_width(mid) <= baseline:
            hi = mid
        else:
            lo = mid
    return MinNResult(hi, True, baseline, dict(cache), n_plus)


# -------------------------------------------------------------------- pairs

def separated(report) -> bool:
    """Lower bound of p_w - p_l above zero."""
    return report.interval.lo > 0.0


def separation_synthetic(world: CategoricalWorld, n_values: Sequence[int], trials: int,
                         N: int = 3000, seed: int = 0,
                         cfg: EngineConfig = EngineConfig()) -> list:
    """Fraction of fresh synthetic datasets whose interval separates the pair,
    for the classical paired test and the SxS chain rule."""
    rows = []
    for n in n_values:
        hits = {"sxs_classical_paired": 0, "sxs_chain_rule": 0}
        for t in range(trials):
            rng = _rng(seed, n, t)
            ds = gen_categorical(world, n, N, int(rng.integers(2**63)))
            c = cfg.replace(seed=_est_seed(rng))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                hits["sxs_classical_paired"] += separated(sxs_classical_paired(ds.labeled_y, c))
                hits["sxs_chain_rule"] += separated(
                    sxs_estimate(ds.labeled_f, ds.labeled_y, ds.unlabeled_f, c))
        rows.append({"n": n, "trials": trials,
                     **{k: v / trials for k, v in hits.items()}})
    return rows


def load_model_labels(path) -> dict:
    """Per-model CSV with columns id, human, autorater (binary)."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for col in ("id", "human", "autorater"):
            if col not in (reader.fieldnames or []):
                raise DataValidationError(f"missing column {col!r}", path, 1)
        for row_no, row in enumerate(reader, start=2):
            try:
                h, a = int(row["human"]), int(row["autorater"])
            except ValueError:
                raise DataValidationError("human/autorater must be 0 or 1", path, row_no) from None
            if h not in (0, 1) or a not in (0, 1):
                raise DataValidationError("human/autorater must be 0 or 1", path, row_no)
            if row["id"] in out:
                raise DataValidationError(f"duplicate id {row['id']!r}", path, row_no)
            out[row["id"]] = (h, a)
    return out


def sxs_pool(model_a: Mapping[str, tuple], model_b: Mapping[str, tuple]):
    """Side-by-side labels from two models' (human, autorater) ratings.

    Returns the shared ids with the aligned autorater and human w/l/t arrays.
    """
    human = synthesize_sxs({k: v[0] for k, v in model_a.items()},
                           {k: v[0] for k, v in model_b.items()})
    auto = synthesize_sxs({k: v[1] for k, v in model_a.items()},
                          {k: v[1] for k, v in model_b.items()})
    ids = sorted(human)
    return ids, np.array([auto[i] for i in ids], dtype=object), \
        np.array([human[i] for i in ids], dtype=object)


def pair_separation(models: Mapping[str, Mapping[str, tuple]], n_values: Sequence[int],
                    trials: int, seed: int = 0, cfg: EngineConfig = EngineConfig()) -> dict:
    """Separation fractions over all truly-separated model pairs.

    A pair counts as truly separated when the classical paired interval on
    the full pool excludes zero; it is oriented so the better model is
    first. Per n and trial, n items keep their human labels and the rest
    keep only autorater labels.
    """
    names = sorted(models)
    pairs = []
    for i, m1 in enumerate(names):
        for m2 in names[i + 1:]:
            ids, auto, human = sxs_pool(models[m1], models[m2])
            full = sxs_classical_paired(human, cfg.replace(seed=seed))
            if full.interval.lo > 0:
                pairs.append((m1, m2, auto, human))
            elif full.interval.hi < 0:
                flip = {"w": "l", "l": "w", "t": "t"}
                pairs.append((m2, m1, np.array([flip[v] for v in auto], dtype=object),
                              np.array([flip[v] for v in human], dtype=object)))
    rows = []
    for n in n_values:
        hits = {"sxs_classical_paired": 0, "sxs_chain_rule": 0}
        count = 0
        for p, (_, _, auto, human) in enumerate(pairs):
            if n >= len(human):
                raise DataValidationError(f"n={n} leaves no unlabeled items ({len(human)} ids)")
            for t in range(trials):
                rng = _rng(seed, n, p, t)
                perm = rng.permutation(len(human))
                lab, unl = perm[:n], perm[n:]
                c = cfg.replace(seed=_est_seed(rng))
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    hits["sxs_classical_paired"] += separated(sxs_classical_paired(human[lab], c))
                    hits["sxs_chain_rule"] += separated(
                        sxs_estimate(auto[lab], human[lab], auto[unl], c))
                count += 1
        rows.append({"n": n, "pairs": len(pairs), "trials": count,
                     **{k: (v / count if count else float("nan")) for k, v in hits.items()}})
    return {"pairs": [(a, b) for a, b, _, _ in pairs], "rows": rows}
