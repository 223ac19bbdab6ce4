"""Partition functions over autorater scores.

A partition scheme is a sorted list of thresholds cutting the real line
into intervals ``(-inf, t1], (t1, t2], ..., (tk, inf)`` plus a map from
interval index to partition id. Post-processing only edits the map, so
every scheme stays total on the reals.
"""
from __future__ import annotations

import heapq
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .engine import EngineConfig
from .estimators import MIN_PARTITION, EstimandReport, stratified_estimate

DEFAULT_K_GRID = (2, 3, 5, 10, 20, 40)
KINDS = ("equal_frequency", "regression_tree")


@dataclass(frozen=True)
class PartitionSpec:
    kind: str = "equal_frequency"
    K: object = 5  # int or "auto"
    K_grid: tuple = DEFAULT_K_GRID

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown partition kind {self.kind!r}")
        if self.K == "auto":
            if not self.K_grid:
                raise ValueError("K='auto' needs a non-empty K_grid")
        elif int(self.K) < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")


@dataclass(frozen=True)
class PartitionScheme:
    kind: str
    thresholds: tuple
    interval_ids: tuple
    misc_id: Optional[int] = None
    requested_K: Optional[int] = None

    @property
    def K_effective(self) -> int:
        return len(set(self.interval_ids))

    def assign(self, scores) -> np.ndarray:
        idx = np.searchsorted(np.asarray(self.thresholds, dtype=float),
                              np.asarray(scores, dtype=float), side="left")
        return np.asarray(self.interval_ids, dtype=int)[idx]

    def intervals(self) -> list[tuple[float, float, int]]:
        """(lower-exclusive, upper-inclusive, partition id) for each interval."""
        edges = (-np.inf,) + tuple(self.thresholds) + (np.inf,)
        return [(edges[i], edges[i + 1], pid) for i, pid in enumerate(self.interval_ids)]


def _from_thresholds(kind: str, thresholds, requested_K=None) -> PartitionScheme:
    thresholds = tuple(float(t) for t in thresholds)
    return PartitionScheme(kind, thresholds, tuple(range(len(thresholds) + 1)),
                           requested_K=requested_K)


def equal_frequency(unlabeled_f, K: int) -> PartitionScheme:
    """Bins cut at the j*N/K-th order statistics of the unlabeled scores.

    A boundary value falls in the lower bin, so tied masses stay together
    and bins on heavily tied data can be unequal. Duplicate cuts, and cuts
    at the maximum that would leave an empty top bin, are dropped.
    """
    f = np.sort(np.asarray(unlabeled_f, dtype=float).ravel())
    N = f.size
    K = int(K)
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if K > N:
        raise ValueError(f"K={K} exceeds the {N} unlabeled items")
    cuts = []
    for j in range(1, K):
        rank = -(-j * N // K)  # ceil(j N / K), 1-based
        t = f[rank - 1]
        if t < f[-1] and (not cuts or t > cuts[-1]):
            cuts.append(t)
    return _from_thresholds("equal_frequency", cuts, requested_K=K)


# ------------------------------------------------------------ regression tree

def _best_split(f_sorted: np.ndarray, y_sorted: np.ndarray):
    """Best squared-error split of a sorted segment: (gain, threshold, cut)."""
    n = f_sorted.size
    if n < 2:
        return None
    distinct = np.flatnonzero(f_sorted[1:] != f_sorted[:-1])
    if distinct.size == 0:
        return None
    csum = np.cumsum(y_sorted)
    csq = np.cumsum(y_sorted ** 2)
    total, total_sq = csum[-1], csq[-1]
    sse_parent = total_sq - total ** 2 / n
    n_left = distinct + 1
    n_right = n - n_left
    s_left = csum[distinct]
    sse_left = csq[distinct] - s_left ** 2 / n_left
    sse_right = (total_sq - csq[distinct]) - (total - s_left) ** 2 / n_right
    gains = sse_parent - sse_left - sse_right
    k = int(np.argmax(gains))
    cut = int(distinct[k])
    threshold = (f_sorted[cut] + f_sorted[cut + 1]) / 2.0
    return float(gains[k]), float(threshold), cut + 1


def fit_regression_tree(f, y, max_leaves: int) -> PartitionScheme:
    """Single-feature CART grown best-first up to ``max_leaves`` leaves.

    Candidate splits sit at midpoints between consecutive distinct scores;
    the open leaf with the largest impurity reduction is split next, and
    growth stops when no split reduces impurity.
    """
    f = np.asarray(f, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    K = int(max_leaves)
    if f.size != y.size:
        raise ValueError("f and y differ in length")
    if K < 1:
        raise ValueError(f"max_leaves must be >= 1, got {K}")
    if f.size < 2 * K:
        raise ValueError(f"need n >= 2*K = {2 * K} labeled items, got {f.size}")
    order = np.argsort(f, kind="stable")
    fs, ys = f[order], y[order]
    if fs[0] == fs[-1]:
        warnings.warn("all autorater scores identical; tree has a single leaf", stacklevel=2)
        return _from_thresholds("regression_tree", [], requested_K=K)

    heap = []
    counter = 0

    def push(lo, hi):
        nonlocal counter
        split = _best_split(fs[lo:hi], ys[lo:hi])
        if split is not None and split[0] > 1e-12 * max(1.0, float(np.sum(ys[lo:hi] ** 2))):
            heapq.heappush(heap, (-split[0], counter, lo, hi, split[1], lo + split[2]))
            counter += 1

    push(0, fs.size)
    cuts = []
    leaves = 1
    while heap and leaves < K:
        _, _, lo, hi, threshold, mid = heapq.heappop(heap)
        cuts.append(threshold)
        leaves += 1
        push(lo, mid)
        push(mid, hi)
    return _from_thresholds("regression_tree", sorted(cuts), requested_K=K)


# ------------------------------------------------------------ post-processing

def postprocess(scheme: PartitionScheme, labeled_f, unlabeled_f,
                min_members: int = MIN_PARTITION) -> PartitionScheme:
    """Fold thin partitions into a single miscellaneous partition.

    Partitions with fewer than ``min_members`` items in either sample move
    to the misc partition; while misc is itself thin, the smallest remaining
    partition is merged into it. Ids are renumbered with misc last.
    """
    K = scheme.K_effective
    if K <= 1:
        return scheme
    n_counts = np.bincount(scheme.assign(labeled_f), minlength=K)
    N_counts = np.bincount(scheme.assign(unlabeled_f), minlength=K)

    def thin(pids):
        return (sum(n_counts[p] for p in pids) < min_members
                or sum(N_counts[p] for p in pids) < min_members)

    misc = {p for p in range(K) if thin([p])}
    if not misc:
        return scheme
    keep = [p for p in range(K) if p not in misc]
    while thin(misc) and keep:
        smallest = min(keep, key=lambda p: (n_counts[p], N_counts[p], p))
        keep.remove(smallest)
        misc.add(smallest)
    if not keep:
        ids = tuple(0 for _ in scheme.interval_ids)
        return replace(scheme, interval_ids=ids, misc_id=None)
    renumber = {p: i for i, p in enumerate(keep)}
    misc_id = len(keep)
    ids = tuple(renumber.get(p, misc_id) for p in scheme.interval_ids)
    return replace(scheme, interval_ids=ids, misc_id=misc_id)


def build_scheme(kind: str, K: int, labeled_f, labeled_y, unlabeled_f) -> PartitionScheme:
    if kind == "equal_frequency":
        scheme = equal_frequency(unlabeled_f, min(int(K), np.size(unlabeled_f)))
    elif kind == "regression_tree":
        scheme = fit_regression_tree(labeled_f, labeled_y,
                                     max(1, min(int(K), np.size(labeled_f) // 2)))
    else:
        raise ValueError(f"unknown partition kind {kind!r}")
    return postprocess(scheme, labeled_f, unlabeled_f)


def tune_K(f, y, f_unlabeled, kind: str = "equal_frequency",
           K_grid: Sequence[int] = DEFAULT_K_GRID,
           cfg: EngineConfig = EngineConfig(),
           per_partition_ptune: bool = False) -> tuple[PartitionScheme, EstimandReport]:
    """Run the stratified estimator for each K; keep the narrowest interval.

    Every K is evaluated with the same seed. Ties go to the smaller K.
    """
    if not K_grid:
        raise ValueError("empty K grid")
    best = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for K in sorted(K_grid):
            scheme = build_scheme(kind, K, f, y, f_unlabeled)
            report = stratified_estimate(f, y, f_unlabeled, scheme, cfg, per_partition_ptune)
            if best is None or report.width < best[1].width:
                best = (scheme, report)
    scheme, report = best
    report.diagnostics["K_requested"] = scheme.requested_K
    report.diagnostics["K_grid"] = list(sorted(K_grid))
    return scheme, report
