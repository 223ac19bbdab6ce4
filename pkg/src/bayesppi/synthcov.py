"""Synthetic populations and coverage harnesses.

Worlds are small immutable parameter sets with a known target value:
``BinaryWorld`` (binary human label and autorater), ``CategoricalWorld``
(three-way autorater, either abstaining with binary human labels or
side-by-side with w/l/t human labels) and ``RegimeBiasWorld`` (real
scores whose bias shifts between regimes of the score).
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence, Union

import numpy as np

from .dataio import ABSTAIN_TOKENS, SXS_TOKENS, Dataset, dumps
from .estimators import EstimandReport
from .posterior import fit_kproportion, fit_proportion, KProportionPosterior, ProportionPosterior


# ------------------------------------------------------------------ worlds

@dataclass(frozen=True)
class BinaryWorld:
    p_H: float
    p_A_given_H1: float
    p_A_given_H0: float

    def __post_init__(self):
        for name in ("p_H", "p_A_given_H1", "p_A_given_H0"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    @classmethod
    def from_chain(cls, p_A: float, p_H_given_A1: float, p_H_given_A0: float) -> "BinaryWorld":
        p_H = p_A * p_H_given_A1 + (1 - p_A) * p_H_given_A0
        a1 = p_A * p_H_given_A1 / p_H if p_H > 0 else 0.0
        a0 = p_A * (1 - p_H_given_A1) / (1 - p_H) if p_H < 1 else 0.0
        return cls(p_H, a1, a0)

    @classmethod
    def symmetric(cls, p_H: float, agreement: float) -> "BinaryWorld":
        """Autorater correct with probability ``agreement`` for either human label."""
        return cls(p_H, agreement, 1.0 - agreement)

    @property
    def p_A(self) -> float:
        return self.p_H * self.p_A_given_H1 + (1 - self.p_H) * self.p_A_given_H0

    @property
    def agreement(self) -> float:
        return self.p_H * self.p_A_given_H1 + (1 - self.p_H) * (1 - self.p_A_given_H0)

    @property
    def target(self) -> float:
        return self.p_H

    def describe(self) -> dict:
        return asdict(self)


FIG1_WORLD = BinaryWorld(0.733, 0.90, 0.151)


@dataclass(frozen=True)
class CategoricalWorld:
    """Three-way autorater parametrised by P(A) and P(H | A).

    ``kind == "abstain3"``: A in (n, y, u), rows of ``p_h_given_a`` hold
    P(H=1 | A=a). ``kind == "sxs3"``: A and H in (w, l, t) and each row of
    ``p_h_given_a`` is a distribution over H.
    """

    kind: str
    p_a: tuple
    p_h_given_a: tuple

    def __post_init__(self):
        if self.kind not in ("abstain3", "sxs3"):
            raise ValueError(f"unknown categorical world kind {self.kind!r}")
        object.__setattr__(self, "p_a", tuple(float(v) for v in self.p_a))
        if self.kind == "sxs3":
            rows = tuple(tuple(float(v) for v in row) for row in self.p_h_given_a)
        else:
            rows = tuple(float(v) for v in self.p_h_given_a)
        object.__setattr__(self, "p_h_given_a", rows)

    @property
    def p_h(self) -> np.ndarray:
        pa = np.asarray(self.p_a)
        if self.kind == "sxs3":
            return pa @ np.asarray(self.p_h_given_a)
        return np.array([1 - pa @ np.asarray(self.p_h_given_a), pa @ np.asarray(self.p_h_given_a)])

    @property
    def target(self) -> float:
        ph = self.p_h
        return float(ph[0] - ph[1]) if self.kind == "sxs3" else float(ph[1])

    def describe(self) -> dict:
        return {"kind": self.kind, "p_a": list(self.p_a),
                "p_h_given_a": [list(r) for r in self.p_h_given_a]
                if self.kind == "sxs3" else list(self.p_h_given_a)}


def sxs_world(p_h: Sequence[float], agreement: float) -> CategoricalWorld:
    """SxS world from human outcome rates and an autorater that matches the
    human label with probability ``agreement``, erring uniformly otherwise."""
    p_h = np.asarray(p_h, dtype=float)
    confusion = np.full((3, 3), (1 - agreement) / 2)  # rows: H, cols: A
    np.fill_diagonal(confusion, agreement)
    joint = p_h[:, None] * confusion
    p_a = joint.sum(axis=0)
    p_h_given_a = (joint / p_a).T
    return CategoricalWorld("sxs3", tuple(p_a), tuple(map(tuple, p_h_given_a)))


@dataclass(frozen=True)
class Regime:
    weight: float
    f_low: float
    f_high: float
    bias: float
    noise: float = 0.0


@dataclass(frozen=True)
class RegimeBiasWorld:
    """Scores uniform within each regime; ``y = f + bias + noise * N(0, 1)``."""

    regimes: tuple

    def __post_init__(self):
        regimes = tuple(r if isinstance(r, Regime) else Regime(*r) for r in self.regimes)
        object.__setattr__(self, "regimes", regimes)
        total = sum(r.weight for r in regimes)
        if not np.isclose(total, 1.0):
            raise ValueError(f"regime weights sum to {total}, not 1")

    @property
    def target(self) -> float:
        return float(sum(r.weight * ((r.f_low + r.f_high) / 2 + r.bias) for r in self.regimes))

    def describe(self) -> dict:
        return {"regimes": [asdict(r) for r in self.regimes]}


def two_regime_world(noise: float = 0.5, shift: float = 1.0) -> RegimeBiasWorld:
    """Star-rating style world: scores uniform on [0, 5]; humans rate ``shift``
    higher than the autorater above 2.5 and ``shift`` lower at or below it."""
    return RegimeBiasWorld((Regime(0.5, 0.0, 2.5, -shift, noise),
                            Regime(0.5, 2.5, 5.0, +shift, noise)))


# --------------------------------------------------------------- generators

def gen_binary(world: BinaryWorld, n: int, N: int, seed) -> Dataset:
    rng = np.random.default_rng(seed)
    total = n + N
    h = (rng.random(total) < world.p_H).astype(int)
    p_a = np.where(h == 1, world.p_A_given_H1, world.p_A_given_H0)
    a = (rng.random(total) < p_a).astype(int)
    return Dataset(a[:n], h[:n], a[n:], "binary")


def gen_categorical(world: CategoricalWorld, n: int, N: int, seed) -> Dataset:
    rng = np.random.default_rng(seed)
    total = n + N
    a = rng.choice(3, size=total, p=np.asarray(world.p_a) / np.sum(world.p_a))
    u = rng.random(total)
    if world.kind == "sxs3":
        cdf = np.cumsum(np.asarray(world.p_h_given_a), axis=1)[a]
        h = np.minimum((u[:, None] >= cdf).sum(axis=1), 2)
        h_lab = np.asarray(SXS_TOKENS, dtype=object)[h[:n]]
        a_tok = np.asarray(SXS_TOKENS, dtype=object)[a]
    else:
        h_lab = (u[:n] < np.asarray(world.p_h_given_a)[a[:n]]).astype(int)
        a_tok = np.asarray(ABSTAIN_TOKENS, dtype=object)[a]
    return Dataset(a_tok[:n], h_lab, a_tok[n:], world.kind)


def gen_regime(world: RegimeBiasWorld, n: int, N: int, seed) -> Dataset:
    rng = np.random.default_rng(seed)
    total = n + N
    weights = np.array([r.weight for r in world.regimes])
    which = rng.choice(len(world.regimes), size=total, p=weights / weights.sum())
    lo = np.array([r.f_low for r in world.regimes])[which]
    hi = np.array([r.f_high for r in world.regimes])[which]
    bias = np.array([r.bias for r in world.regimes])[which]
    noise = np.array([r.noise for r in world.regimes])[which]
    f = lo + (hi - lo) * rng.random(total)
    y = f + bias + noise * rng.standard_normal(total)
    return Dataset(f[:n], y[:n], f[n:], "real")


World = Union[BinaryWorld, CategoricalWorld, RegimeBiasWorld]


def generate(world: World, n: int, N: int, seed) -> Dataset:
    if isinstance(world, BinaryWorld):
        return gen_binary(world, n, N, seed)
    if isinstance(world, CategoricalWorld):
        return gen_categorical(world, n, N, seed)
    if isinstance(world, RegimeBiasWorld):
        return gen_regime(world, n, N, seed)
    raise TypeError(f"not a world: {world!r}")


# ---------------------------------------------------------- pooled worlds

@dataclass(frozen=True)
class PoolPosterior:
    kind: str
    a: Union[ProportionPosterior, KProportionPosterior]
    h_given_a: tuple

    def sample_world(self, rng: np.random.Generator) -> World:
        if self.kind == "binary":
            p_a = float(self.a.sample(rng, 1)[0])
            p1 = float(self.h_given_a[1].sample(rng, 1)[0])
            p0 = float(self.h_given_a[0].sample(rng, 1)[0])
            return BinaryWorld.from_chain(p_a, p1, p0)
        p_a = tuple(self.a.sample(rng, 1)[0])
        rows = tuple(post.sample(rng, 1)[0] for post in self.h_given_a)
        if self.kind == "abstain3":
            return CategoricalWorld("abstain3", p_a, tuple(float(r) for r in rows))
        return CategoricalWorld("sxs3", p_a, tuple(tuple(r) for r in rows))


@dataclass(frozen=True)
class WorldSampler:
    """Draws worlds by picking a pool uniformly, then sampling its posteriors."""

    pools: tuple

    def __call__(self, rng: np.random.Generator) -> World:
        pool = self.pools[int(rng.integers(len(self.pools)))]
        return pool.sample_world(rng)


def _fit_pool(pool: Dataset, n_ref: int, rng: np.random.Generator) -> PoolPosterior:
    if pool.n < n_ref:
        raise ValueError(f"pool has {pool.n} labeled items, need n_ref={n_ref}")
    idx = rng.choice(pool.n, size=n_ref, replace=False)
    a, h = pool.labeled_f[idx], pool.labeled_y[idx]
    if pool.label_kind == "binary":
        a = a.astype(int)
        a_post = fit_proportion(int(a.sum()), a.size)
        conds = tuple(fit_proportion(int(h[a == v].sum()), int((a == v).sum()))
                      if np.any(a == v) else ProportionPosterior.prior() for v in (0, 1))
        return PoolPosterior("binary", a_post, conds)
    if pool.label_kind == "abstain3":
        a_idx = np.array([ABSTAIN_TOKENS.index(t) for t in a])
        a_post = KProportionPosterior(tuple(np.bincount(a_idx, minlength=3)))
        conds = tuple(fit_proportion(int(h[a_idx == j].sum()), int((a_idx == j).sum()))
                      if np.any(a_idx == j) else ProportionPosterior.prior() for j in range(3))
        return PoolPosterior("abstain3", a_post, conds)
    if pool.label_kind == "sxs3":
        a_idx = np.array([SXS_TOKENS.index(t) for t in a])
        h_idx = np.array([SXS_TOKENS.index(t) for t in h])
        a_post = KProportionPosterior(tuple(np.bincount(a_idx, minlength=3)))
        conds = tuple(KProportionPosterior(tuple(np.bincount(h_idx[a_idx == j], minlength=3)))
                      for j in range(3))
        return PoolPosterior("sxs3", a_post, conds)
    raise ValueError(f"cannot fit worlds from a {pool.label_kind} pool")


def fit_worlds_from_pool(pools: Union[Dataset, Sequence[Dataset]], n_ref: int = 300,
                         seed: int = 0) -> WorldSampler:
    """Posteriors over each pool's chain-rule parameters, fit on ``n_ref``
    randomly chosen labeled items."""
    if isinstance(pools, Dataset):
        pools = [pools]
    rng = np.random.default_rng(seed)
    return WorldSampler(tuple(_fit_pool(p, n_ref, rng) for p in pools))


def demo_binary_pools(seed: int = 0, count: int = 10, n: int = 300, N: int = 3300) -> list:
    """Ten binary pools spanning the accuracies and autorater agreements seen
    in open-book QA evaluation; a stand-in for user-supplied pools."""
    rng = np.random.default_rng(seed)
    pools = []
    for i in range(count):
        p_H = rng.uniform(0.45, 0.85)
        world = BinaryWorld(p_H, rng.uniform(0.82, 0.95), rng.uniform(0.08, 0.3))
        pools.append(gen_binary(world, n, N, rng.integers(2**63)))
    return pools


def demo_sxs_pools(seed: int = 0, count: int = 10, n: int = 1000, N: int = 3000) -> list:
    rng = np.random.default_rng(seed)
    pools = []
    for i in range(count):
        w = rng.uniform(0.15, 0.45)
        l = rng.uniform(0.1, w)
        world = sxs_world((w, l, 1 - w - l), rng.uniform(0.75, 0.9))
        pools.append(gen_categorical(world, n, N, rng.integers(2**63)))
    return pools


# ---------------------------------------------------------------- coverage

@dataclass
class CoverageReport:
    trials: int = 0
    hits: int = 0
    errors: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    groups: list = field(default_factory=list)

    @property
    def coverage(self) -> float:
        return self.hits / self.trials if self.trials else float("nan")

    @property
    def failure_rate(self) -> float:
        return 1.0 - self.coverage

    def summary(self) -> dict:
        out = {"trials": self.trials, "hits": self.hits, "coverage": self.coverage,
               "failed_to_run": len(self.errors), "misses": len(self.failures)}
        if self.groups:
            out["groups"] = [{k: g[k] for k in ("trials", "failures", "failure_rate")}
                             for g in self.groups]
        return out

    def to_json(self, path) -> None:
        data = dict(self.summary(), rows=self.rows, errors=self.errors)
        Path(path).write_text(dumps(data) + "\n")

    def to_csv(self, path) -> None:
        if not self.rows:
            Path(path).write_text("")
            return
        theta_keys = sorted({k for r in self.rows for k in r["theta"]})
        fields = ["trial", "group"] + [f"theta_{k}" for k in theta_keys] + \
                 ["target", "n", "N", "lo", "hi", "hit"]
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(fields)
            for r in self.rows:
                theta = [v if isinstance(v, str) else json.dumps(v)
                         for v in (r["theta"].get(k) for k in theta_keys)]
                writer.writerow([r["trial"], r.get("group", "")] + theta +
                                [repr(r["target"]), r["n"], r["N"], repr(r["lo"]),
                                 repr(r["hi"]), int(r["hit"])])


Estimator = Callable[[Dataset, int], EstimandReport]


def _as_estimator(estimator) -> Estimator:
    """Accept an EstimatorSpec or a ``callable(dataset, seed) -> report``."""
    if hasattr(estimator, "with_seed"):
        from .methods import run
        return lambda ds, seed: run(estimator.with_seed(seed), ds)
    return estimator


def _one_trial(report: CoverageReport, estimator: Estimator, world: World, n: int, N: int,
               data_seed: int, est_seed: int, trial: int, group=None) -> None:
    ds = generate(world, n, N, data_seed)
    try:
        result = estimator(ds, est_seed)
    except (ValueError, ArithmeticError) as exc:
        report.errors.append({"trial": trial, "error": str(exc)})
        return
    hit = result.interval.contains(world.target)
    report.trials += 1
    report.hits += int(hit)
    row = {"trial": trial, "theta": world.describe(), "target": world.target, "n": n, "N": N,
           "lo": result.interval.lo, "hi": result.interval.hi, "hit": hit,
           "data_seed": data_seed}
    if group is not None:
        row["group"] = group
    report.rows.append(row)
    if not hit:
        report.failures.append({"world": world, "n": n, "N": N, "data_seed": data_seed,
                                "trial": trial})


def _trial_seeds(seed: int, trial: int):
    ss = np.random.SeedSequence([int(seed), int(trial)])
    rng = np.random.default_rng(ss)
    return rng, int(rng.integers(2**63)), int(rng.integers(2**63))


def coverage_run(world_sampler, estimator, trials: int,
                 n_range: tuple = (100, 500), N_range: tuple = (3000, 4000),
                 seed: int = 0) -> CoverageReport:
    """Fraction of synthetic trials whose interval contains the true target.

    ``world_sampler`` is a fixed world or ``callable(rng) -> world``; n and N
    are drawn uniformly from the inclusive integer ranges. Trials whose
    estimator raises are recorded in ``errors`` and left out of the
    coverage denominator.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    report = CoverageReport()
    est = _as_estimator(estimator)
    for t in range(trials):
        rng, data_seed, est_seed = _trial_seeds(seed, t)
        world = world_sampler(rng) if callable(world_sampler) else world_sampler
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        N = int(rng.integers(N_range[0], N_range[1] + 1))
        _one_trial(report, est, world, n, N, data_seed, est_seed, t)
    return report


def frequentist_recheck(prior: CoverageReport, estimator, per_theta_trials: int = 1000,
                        k_thetas: int = 20, seed: int = 0, mode: str = "fixed") -> CoverageReport:
    """Re-generate data at parameter values that produced coverage misses.

    ``mode="fixed"``: pick ``k_thetas`` misses and run ``per_theta_trials``
    fresh datasets at each, keeping that miss's n and N. ``mode="resample"``:
    run ``per_theta_trials`` trials in total, each at a randomly chosen miss.
    """
    if not prior.failures:
        raise ValueError("prior report has no coverage failures")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 2]))
    est = _as_estimator(estimator)
    report = CoverageReport()
    if mode == "fixed":
        k = min(k_thetas, len(prior.failures))
        chosen = rng.choice(len(prior.failures), size=k, replace=False)
        trial = 0
        for g, idx in enumerate(chosen):
            fail = prior.failures[int(idx)]
            before = (report.trials, report.hits)
            for _ in range(per_theta_trials):
                _, data_seed, est_seed = _trial_seeds(seed, 10_000_000 + trial)
                _one_trial(report, est, fail["world"], fail["n"], fail["N"],
                           data_seed, est_seed, trial, group=g)
                trial += 1
            ran = report.trials - before[0]
            missed = ran - (report.hits - before[1])
            report.groups.append({"theta": fail["world"].describe(), "n": fail["n"],
                                  "N": fail["N"], "trials": ran, "failures": missed,
                                  "failure_rate": missed / ran if ran else float("nan")})
    elif mode == "resample":
        for trial in range(per_theta_trials):
            idx = int(rng.integers(len(prior.failures)))
            fail = prior.failures[idx]
            _, data_seed, est_seed = _trial_seeds(seed, 10_000_000 + trial)
            _one_trial(report, est, fail["world"], fail["n"], fail["N"],
                       data_seed, est_seed, trial, group=idx)
    else:
        raise ValueError(f"unknown recheck mode {mode!r}")
    return report
