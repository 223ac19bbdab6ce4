"""Monte Carlo integration and bootstrap interval engines.

Both engines produce a vector of values of a statistic and cut an
equal-tailed interval from it with the same index rule.

Statistics are evaluated in batch: ``g`` receives a dict mapping parameter
name to an array of draws (shape ``(T,)``, or ``(T, K)`` for K-proportions)
and returns an array of ``T`` values. Any expression built from numpy
operations on the named draws works unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .posterior import Posterior

ENGINES = ("mci", "bootstrap")
MIN_SAMPLES = 100


@dataclass(frozen=True)
class EngineConfig:
    T: int = 10_000
    engine: str = "mci"
    B: int = 10_000
    level: float = 0.95
    seed: int = 0

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine {self.engine!r}")
        if self.T < MIN_SAMPLES or self.B < MIN_SAMPLES:
            raise ValueError(f"T and B must be >= {MIN_SAMPLES}")
        if not 0.0 < self.level < 1.0:
            raise ValueError(f"level must be in (0, 1), got {self.level}")

    @property
    def alpha_tail(self) -> float:
        return (1.0 - self.level) / 2.0

    def replace(self, **changes) -> "EngineConfig":
        fields = dict(T=self.T, engine=self.engine, B=self.B,
                      level=self.level, seed=self.seed)
        fields.update(changes)
        return EngineConfig(**fields)


@dataclass(frozen=True)
class IntervalResult:
    lo: float
    hi: float
    level: float
    point_estimate: float
    n_samples: int
    engine: str

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi


def tail_indices(T: int, level: float) -> tuple[int, int]:
    """1-based (lower, upper) order-statistic indices, clamped to [1, T]."""
    a = (1.0 - level) / 2.0
    # rounding guards against e.g. (1 - 0.9) / 2 * 1000 == 49.999...
    lo = math.floor(round(a * T, 9))
    hi = math.ceil(round((1.0 - a) * T, 9))
    return min(max(lo, 1), T), min(max(hi, 1), T)


def equal_tailed(sorted_values, level: float) -> tuple[float, float]:
    v = np.asarray(sorted_values, dtype=float)
    if v.size < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} values, got {v.size}")
    if np.any(v[1:] < v[:-1]):
        raise ValueError("values are not sorted ascending")
    lo, hi = tail_indices(v.size, level)
    return float(v[lo - 1]), float(v[hi - 1])


def _summarise(values: np.ndarray, level: float, engine: str) -> IntervalResult:
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise FloatingPointError(
            f"statistic returned non-finite value {values[bad[0]]!r} at sample index {bad[0]}")
    point = float(values.mean())
    lo, hi = equal_tailed(np.sort(values), level)
    # the mean of a constant vector can drift by an ulp
    point = min(max(point, lo), hi) if math.isclose(lo, hi) else point
    if not lo <= point <= hi:
        raise ArithmeticError(
            f"point estimate {point} outside interval [{lo}, {hi}]; level {level} too low "
            "for this statistic's skew")
    return IntervalResult(lo, hi, level, point, int(values.size), engine)


def draw_joint(posteriors: Mapping[str, Posterior], T: int, seed: int) -> dict[str, np.ndarray]:
    """T draws from each posterior, one independent substream per parameter.

    Substreams are keyed by registration order, so the draws for a given
    parameter depend only on (seed, its position).
    """
    children = np.random.SeedSequence(seed).spawn(len(posteriors))
    return {name: post.sample(np.random.default_rng(child), T)
            for (name, post), child in zip(posteriors.items(), children)}


def integrate(posteriors: Mapping[str, Posterior],
              g: Callable[[dict], np.ndarray],
              cfg: EngineConfig = EngineConfig()) -> IntervalResult:
    """Equal-tailed interval for ``g`` under independent parameter posteriors."""
    draws = draw_joint(posteriors, cfg.T, cfg.seed)
    values = np.broadcast_to(np.asarray(g(draws), dtype=float), (cfg.T,))
    return _summarise(values, cfg.level, "mci")


def bootstrap(parts: Mapping[str, np.ndarray],
              statistic: Callable[[dict], float],
              cfg: EngineConfig = EngineConfig(),
              batch_size: int | None = None) -> IntervalResult:
    """Equal-tailed percentile interval over ``cfg.B`` bootstrap replicates.

    Every part is resampled with replacement at its own size. By default
    ``statistic`` is called once per replicate with a dict of 1-d arrays
    (rows of 2-d parts are resampled together). With ``batch_size`` set,
    it is called with arrays carrying a leading replicate axis of up to
    that many replicates and must return one value per replicate.
    """
    arrays = {name: np.asarray(p) for name, p in parts.items()}
    for name, arr in arrays.items():
        if arr.shape[0] == 0:
            raise ValueError(f"empty part {name!r}")
    children = np.random.SeedSequence(cfg.seed).spawn(len(arrays))
    rngs = [np.random.default_rng(c) for c in children]
    values = np.empty(cfg.B)
    if batch_size is None:
        for b in range(cfg.B):
            resampled = {name: arr[rng.integers(0, arr.shape[0], arr.shape[0])]
                         for (name, arr), rng in zip(arrays.items(), rngs)}
            values[b] = statistic(resampled)
    else:
        for start in range(0, cfg.B, batch_size):
            m = min(batch_size, cfg.B - start)
            resampled = {name: arr[rng.integers(0, arr.shape[0], (m, arr.shape[0]))]
                         for (name, arr), rng in zip(arrays.items(), rngs)}
            values[start:start + m] = statistic(resampled)
    return _summarise(values, cfg.level, "bootstrap")
