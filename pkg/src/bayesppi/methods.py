"""Named estimator configurations and a dispatcher over datasets."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

import numpy as np

from . import estimators as est
from .dataio import DEFAULT_LINEARIZATION, Dataset, DataValidationError, discretize, linearize
from .engine import EngineConfig
from .partition import PartitionSpec, build_scheme, tune_K


@dataclass(frozen=True)
class EstimatorSpec:
    method: str
    partitions: Optional[PartitionSpec] = None
    linearization: Optional[Mapping[str, float]] = None
    engine_cfg: EngineConfig = field(default_factory=EngineConfig)
    ptune: Union[None, float, str] = None
    threshold: float = 0.5

    def __post_init__(self):
        if self.method not in est.METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {est.METHODS}")
        if self.method.startswith("stratified") and self.partitions is None:
            object.__setattr__(self, "partitions", PartitionSpec())
        if self.method == "difference_ptune" and self.ptune is None:
            object.__setattr__(self, "ptune", "auto")

    def with_seed(self, seed: int) -> "EstimatorSpec":
        return EstimatorSpec(self.method, self.partitions, self.linearization,
                             self.engine_cfg.replace(seed=int(seed)), self.ptune, self.threshold)

    @property
    def label(self) -> str:
        if self.partitions is not None and self.method.startswith("stratified"):
            p = self.partitions
            kind = "tree" if p.kind == "regression_tree" else "eqfreq"
            K = "*" if p.K == "auto" else p.K
            return f"{self.method}[{kind},K={K}]"
        return self.method


def _real_view(ds: Dataset, spec: EstimatorSpec) -> Dataset:
    if ds.label_kind == "real":
        return ds
    if ds.label_kind == "binary":
        return Dataset(ds.labeled_f.astype(float), ds.labeled_y.astype(float),
                       ds.unlabeled_f.astype(float), "real")
    if ds.label_kind == "abstain3":
        return linearize(ds, spec.linearization or DEFAULT_LINEARIZATION)
    raise DataValidationError(f"{spec.method} needs real-valued scores; got {ds.label_kind}")


def run(spec: EstimatorSpec, ds: Dataset) -> est.EstimandReport:
    """Evaluate ``spec`` on ``ds``, converting label kinds where meaningful."""
    cfg = spec.engine_cfg
    m = spec.method
    if m in ("sxs_chain_rule", "sxs_classical_paired"):
        if ds.label_kind != "sxs3":
            raise DataValidationError(f"{m} needs an sxs3 dataset, got {ds.label_kind}")
        if m == "sxs_classical_paired":
            return est.sxs_classical_paired(ds.labeled_y, cfg)
        return est.sxs_estimate(ds.labeled_f, ds.labeled_y, ds.unlabeled_f, cfg)
    if m == "chain_rule_abstain":
        if ds.label_kind != "abstain3":
            raise DataValidationError(f"{m} needs an abstain3 dataset, got {ds.label_kind}")
        return est.chain_rule_abstain(ds.labeled_f, ds.labeled_y, ds.unlabeled_f, cfg)
    if m == "chain_rule":
        b = discretize(ds, spec.threshold) if ds.label_kind == "real" else ds
        if b.label_kind != "binary":
            raise DataValidationError(f"chain_rule needs binary autorater labels, got "
                                      f"{ds.label_kind}")
        return est.chain_rule_estimate(b.labeled_f, b.labeled_y, b.unlabeled_f, cfg)
    if m in ("classical_proportion_cp", "classical_proportion_wald"):
        y = np.asarray(ds.labeled_y, dtype=float)
        if not np.all((y == 0) | (y == 1)):
            raise DataValidationError(f"{m} needs 0/1 human labels")
        variant = "clopper_pearson" if m.endswith("cp") else "wald"
        return est.classical_proportion(int(y.sum()), y.size, cfg, variant)

    r = _real_view(ds, spec)
    if m == "classical_mean":
        return est.classical_mean(r.labeled_y, cfg)
    if m == "difference_classical":
        return est.difference_estimate(r.labeled_f, r.labeled_y, r.unlabeled_f, cfg,
                                       mode="classical", ptune=spec.ptune)
    if m in ("difference_bayes", "difference_ptune"):
        return est.difference_estimate(r.labeled_f, r.labeled_y, r.unlabeled_f, cfg,
                                       mode="bayes", ptune=spec.ptune)
    if m in ("stratified", "stratified_ptune"):
        p = spec.partitions
        per_ptune = m == "stratified_ptune"
        if p.K == "auto":
            _, report = tune_K(r.labeled_f, r.labeled_y, r.unlabeled_f, p.kind, p.K_grid, cfg,
                               per_partition_ptune=per_ptune)
            return report
        scheme = build_scheme(p.kind, int(p.K), r.labeled_f, r.labeled_y, r.unlabeled_f)
        report = est.stratified_estimate(r.labeled_f, r.labeled_y, r.unlabeled_f, scheme, cfg,
                                         per_partition_ptune=per_ptune)
        report.diagnostics["K_requested"] = int(p.K)
        return report
    raise ValueError(f"unhandled method {m!r}")


def classical_for(ds: Dataset, cfg: EngineConfig) -> EstimatorSpec:
    """The classical baseline matching a dataset's label kind."""
    if ds.label_kind == "sxs3":
        return EstimatorSpec("sxs_classical_paired", engine_cfg=cfg)
    y = np.asarray(ds.labeled_y, dtype=float)
    if np.all((y == 0) | (y == 1)):
        return EstimatorSpec("classical_proportion_cp", engine_cfg=cfg)
    return EstimatorSpec("classical_mean", engine_cfg=cfg)
