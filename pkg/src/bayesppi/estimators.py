"""Classical baselines and prediction-powered proxy estimators.

Every estimator returns an :class:`EstimandReport`. Bayesian estimators
fit independent posteriors on disjoint pieces of the data and push them
through :func:`bayesppi.engine.integrate`; with ``cfg.engine ==
"bootstrap"`` the same proxy is computed as a plug-in statistic over
bootstrap replicates instead.

Conventions: ``f``/``y`` are the autorater score and human label on the
labeled sample, ``f_unlabeled`` the autorater scores on the unlabeled
sample. Chain-rule estimators take discrete autorater labels ``a`` and
human labels ``h``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Any, Optional, Union

import numpy as np
from scipy import stats

from .engine import EngineConfig, IntervalResult, bootstrap, integrate
from .posterior import (
    KProportionPosterior,
    MeanPosterior,
    ProportionPosterior,
    fit_kproportion,
    fit_mean,
    fit_proportion,
)

METHODS = (
    "classical_mean",
    "classical_proportion_cp",
    "classical_proportion_wald",
    "difference_classical",
    "difference_bayes",
    "difference_ptune",
    "stratified",
    "stratified_ptune",
    "chain_rule",
    "chain_rule_abstain",
    "sxs_chain_rule",
    "sxs_classical_paired",
)

ABSTAIN_TOKENS = ("n", "y", "u")
SXS_TOKENS = ("w", "l", "t")
BOOTSTRAP_BATCH = 500


class EstimatorWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PowerTuneParams:
    lam: float
    source: str = "fixed"

    def __post_init__(self):
        if self.source not in ("fixed", "estimated"):
            raise ValueError(f"unknown lambda source {self.source!r}")
        object.__setattr__(self, "lam", float(np.clip(self.lam, 0.0, 1.0)))


@dataclass(frozen=True)
class EstimandReport:
    interval: IntervalResult
    method: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def lo(self) -> float:
        return self.interval.lo

    @property
    def hi(self) -> float:
        return self.interval.hi

    @property
    def width(self) -> float:
        return self.interval.width

    @property
    def point_estimate(self) -> float:
        return self.interval.point_estimate


def _warn(diagnostics: dict, message: str) -> None:
    diagnostics.setdefault("warnings", []).append(message)
    warnings.warn(message, EstimatorWarning, stacklevel=3)


def _as_float(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError(f"empty {name}")
    return arr


def _closed_form(center: float, se: float, level: float, n: int,
                 student: bool = False) -> IntervalResult:
    q = 0.5 + level / 2.0
    z = stats.t.ppf(q, n - 1) if student else stats.norm.ppf(q)
    return IntervalResult(center - z * se, center + z * se, level, center, n, "closed_form")


# ---------------------------------------------------------------- classical

def classical_mean(y, cfg: EngineConfig = EngineConfig()) -> EstimandReport:
    """Gaussian (n >= 30) or Student-T interval around the sample mean."""
    y = _as_float(y, "labeled sample")
    if y.size < 2:
        raise ValueError("classical_mean needs n >= 2")
    post = fit_mean(y)
    interval = _closed_form(post.mu_hat, post.stderr, cfg.level, post.n,
                            student=post.family == "student_t")
    return EstimandReport(interval, "classical_mean",
                          {"n": post.n, "family": post.family, "sigma2_hat": post.sigma2_hat})


def clopper_pearson(k: int, n: int, level: float) -> tuple[float, float]:
    a = 1.0 - level
    lo = 0.0 if k == 0 else float(stats.beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


def classical_proportion(k: int, n: int, cfg: EngineConfig = EngineConfig(),
                         variant: str = "clopper_pearson") -> EstimandReport:
    k, n = int(k), int(n)
    if n < 1 or not 0 <= k <= n:
        raise ValueError(f"invalid proportion k={k}, n={n}")
    p_hat = k / n
    level = cfg.level
    if variant == "clopper_pearson":
        lo, hi = clopper_pearson(k, n, level)
        method = "classical_proportion_cp"
    elif variant == "wald":
        z = stats.norm.ppf(0.5 + level / 2)
        se = np.sqrt(p_hat * (1 - p_hat) / n)
        lo, hi = p_hat - z * se, p_hat + z * se
        method = "classical_proportion_wald"
    elif variant == "jeffreys_beta":
        post = fit_proportion(k, n)
        lo, hi = stats.beta.ppf([(1 - level) / 2, (1 + level) / 2], post.alpha, post.beta)
        method = "classical_proportion_jeffreys"
    else:
        raise ValueError(f"unknown variant {variant!r}")
    interval = IntervalResult(float(lo), float(hi), level, p_hat, n, "closed_form")
    return EstimandReport(interval, method, {"k": k, "n": n})


# ------------------------------------------------------------- power tuning

def estimate_lambda(f, y, f_unlabeled, finite_sample: bool = False) -> PowerTuneParams:
    """Power-tuning coefficient, clamped to [0, 1].

    ``Cov(f, y) / Var(f)`` with the covariance taken on the labeled sample
    and the variance pooled over labeled and unlabeled scores. With
    ``finite_sample=True`` the denominator carries the extra ``(1 + n/N)``
    factor that minimises the variance of the tuned estimator at finite N.
    """
    f = _as_float(f, "labeled scores")
    y = _as_float(y, "labeled targets")
    fu = _as_float(f_unlabeled, "unlabeled scores")
    if f.size < 2:
        raise ValueError("estimate_lambda needs n >= 2")
    var_pooled = float(np.var(np.concatenate([f, fu])))
    if var_pooled == 0.0:
        warnings.warn("autorater scores are constant; lambda set to 0", EstimatorWarning,
                      stacklevel=2)
        return PowerTuneParams(0.0, "estimated")
    cov = float(np.mean((f - f.mean()) * (y - y.mean())))
    denom = var_pooled * (1.0 + f.size / fu.size) if finite_sample else var_pooled
    return PowerTuneParams(cov / denom, "estimated")


def _resolve_ptune(ptune, f, y, fu) -> Optional[PowerTuneParams]:
    if ptune is None or isinstance(ptune, PowerTuneParams):
        return ptune
    if isinstance(ptune, str):
        if ptune != "auto":
            raise ValueError(f"ptune must be a number, 'auto' or PowerTuneParams, got {ptune!r}")
        return estimate_lambda(f, y, fu)
    return PowerTuneParams(float(ptune), "fixed")


# --------------------------------------------------------------- difference

def difference_estimate(f, y, f_unlabeled, cfg: EngineConfig = EngineConfig(),
                        mode: str = "bayes",
                        ptune: Union[None, float, str, PowerTuneParams] = None) -> EstimandReport:
    """Autorater mean on the unlabeled sample plus the labeled rectifier.

    ``ptune`` scales the autorater by lambda in both terms: a float fixes
    lambda, ``"auto"`` estimates it.
    """
    f = _as_float(f, "labeled scores")
    y = _as_float(y, "labeled targets")
    fu = _as_float(f_unlabeled, "unlabeled scores")
    if f.size != y.size:
        raise ValueError("f and y differ in length")
    if f.size < 2 or fu.size < 2:
        raise ValueError("difference estimate needs n >= 2 and N >= 2")
    tuned = _resolve_ptune(ptune, f, y, fu)
    lam = 1.0 if tuned is None else tuned.lam
    rect = y - lam * f
    scaled_u = lam * fu
    autorater = fit_mean(scaled_u)
    rectifier = fit_mean(rect)
    diagnostics: dict[str, Any] = {
        "n": int(f.size), "N": int(fu.size),
        "autorater_mean": autorater.mu_hat, "rectifier_mean": rectifier.mu_hat,
    }
    if tuned is not None:
        diagnostics["lambda"] = tuned.lam
        diagnostics["lambda_source"] = tuned.source
    method = "difference_ptune" if tuned is not None else f"difference_{mode}"

    if mode == "classical":
        se = np.sqrt(autorater.sigma2_hat / autorater.n + rectifier.sigma2_hat / rectifier.n)
        interval = _closed_form(autorater.mu_hat + rectifier.mu_hat, float(se), cfg.level,
                                f.size + fu.size)
        return EstimandReport(interval, method, diagnostics)
    if mode != "bayes":
        raise ValueError(f"unknown mode {mode!r}")

    if cfg.engine == "bootstrap":
        def stat(parts):
            return parts["unlabeled"].mean(axis=-1) + parts["rectifier"].mean(axis=-1)
        interval = bootstrap({"unlabeled": scaled_u, "rectifier": rect}, stat, cfg,
                             batch_size=BOOTSTRAP_BATCH)
    else:
        interval = integrate({"autorater_mean": autorater, "rectifier": rectifier},
                             lambda d: d["autorater_mean"] + d["rectifier"], cfg)
    return EstimandReport(interval, method, diagnostics)


# --------------------------------------------------------------- stratified

class PartitionUnderfilled(ValueError):
    pass


MIN_PARTITION = 3


def stratified_estimate(f, y, f_unlabeled, partition, cfg: EngineConfig = EngineConfig(),
                        per_partition_ptune: bool = False) -> EstimandReport:
    """Weighted sum of per-partition difference estimates.

    ``partition`` is anything with an ``assign(scores) -> ids`` method and a
    ``K_effective`` attribute (see :mod:`bayesppi.partition`). Weights are
    the unlabeled partition proportions under a Dirichlet posterior.
    """
    f = _as_float(f, "labeled scores")
    y = _as_float(y, "labeled targets")
    fu = _as_float(f_unlabeled, "unlabeled scores")
    if f.size != y.size:
        raise ValueError("f and y differ in length")
    K = int(partition.K_effective)
    ids_l = np.asarray(partition.assign(f))
    ids_u = np.asarray(partition.assign(fu))
    n_counts = np.bincount(ids_l, minlength=K)
    N_counts = np.bincount(ids_u, minlength=K)
    for i in range(K):
        if n_counts[i] < MIN_PARTITION or N_counts[i] < MIN_PARTITION:
            raise PartitionUnderfilled(
                f"partition underfilled: partition {i} has {n_counts[i]} labeled and "
                f"{N_counts[i]} unlabeled members (need >= {MIN_PARTITION} each)")

    lams = np.ones(K)
    if per_partition_ptune:
        for i in range(K):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", EstimatorWarning)
                lams[i] = estimate_lambda(f[ids_l == i], y[ids_l == i], fu[ids_u == i]).lam

    diagnostics: dict[str, Any] = {
        "n": int(f.size), "N": int(fu.size), "K": K,
        "labeled_counts": n_counts.tolist(), "unlabeled_counts": N_counts.tolist(),
    }
    if per_partition_ptune:
        diagnostics["lambdas"] = lams.tolist()
    method = "stratified_ptune" if per_partition_ptune else "stratified"

    if cfg.engine == "bootstrap":
        interval = _stratified_bootstrap(f, y, fu, ids_l, ids_u, lams, K, cfg)
        return EstimandReport(interval, method, diagnostics)

    posteriors: dict = {}
    for i in range(K):
        posteriors[f"autorater_mean_{i}"] = fit_mean(lams[i] * fu[ids_u == i])
        posteriors[f"rectifier_{i}"] = fit_mean(y[ids_l == i] - lams[i] * f[ids_l == i])
    if K > 1:
        posteriors["weights"] = fit_kproportion(N_counts)

    def g(d):
        terms = np.stack([d[f"autorater_mean_{i}"] + d[f"rectifier_{i}"] for i in range(K)],
                         axis=1)
        if K == 1:
            return terms[:, 0]
        return np.sum(terms * d["weights"], axis=1)

    diagnostics["rectifier_means"] = [posteriors[f"rectifier_{i}"].mu_hat for i in range(K)]
    interval = integrate(posteriors, g, cfg)
    return EstimandReport(interval, method, diagnostics)


def _stratified_bootstrap(f, y, fu, ids_l, ids_u, lams, K, cfg):
    labeled = np.column_stack([ids_l, y - lams[ids_l] * f])
    unlabeled = np.column_stack([ids_u, lams[ids_u] * fu])

    def stat(parts):
        lab, unl = parts["labeled"], parts["unlabeled"]
        total = 0.0
        for i in range(K):
            in_l = lab[..., 0] == i
            in_u = unl[..., 0] == i
            n_i = in_l.sum(axis=-1)
            N_i = in_u.sum(axis=-1)
            with np.errstate(invalid="ignore", divide="ignore"):
                rect = (lab[..., 1] * in_l).sum(axis=-1) / n_i
                auto = (unl[..., 1] * in_u).sum(axis=-1) / N_i
            # a replicate can empty a small partition; its rectifier is then 0
            rect = np.where(n_i > 0, rect, 0.0)
            auto = np.where(N_i > 0, auto, 0.0)
            total = total + (auto + rect) * N_i / unl.shape[-2]
        return total

    return bootstrap({"labeled": labeled, "unlabeled": unlabeled}, stat, cfg,
                     batch_size=BOOTSTRAP_BATCH)


# --------------------------------------------------------------- chain rule

def _binary(x, name: str) -> np.ndarray:
    arr = np.asarray(x).ravel()
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise ValueError(f"{name} must be binary 0/1")
    return arr.astype(int)


def _tokens(x, alphabet, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=object).ravel()
    bad = [v for v in arr if v not in alphabet]
    if bad:
        raise ValueError(f"{name} contains {bad[0]!r}, expected one of {alphabet}")
    index = {tok: i for i, tok in enumerate(alphabet)}
    return np.array([index[v] for v in arr], dtype=int)


def _conditional_proportion(h_subset, label: str, diagnostics: dict) -> ProportionPosterior:
    if h_subset.size == 0:
        _warn(diagnostics, f"no labeled items with autorater={label}; using prior only")
        return ProportionPosterior.prior()
    return fit_proportion(int(h_subset.sum()), int(h_subset.size))


def _categorical_chain(a_idx, h, a_unl_idx, K_a: int, labels, cfg, method, extra=None):
    """Chain rule over a K_a-way autorater with binary human labels."""
    if a_unl_idx.size == 0:
        raise ValueError("no unlabeled items")
    if a_idx.size < 2 or a_unl_idx.size < 2:
        raise ValueError("chain rule needs n >= 2 and N >= 2")
    diagnostics: dict[str, Any] = {"n": int(a_idx.size), "N": int(a_unl_idx.size)}
    if extra:
        diagnostics.update(extra)
    unl_counts = np.bincount(a_unl_idx, minlength=K_a)
    diagnostics["unlabeled_counts"] = dict(zip(labels, unl_counts.tolist()))
    diagnostics["labeled_counts"] = {
        lab: [int(((a_idx == j) & (h == 0)).sum()), int(((a_idx == j) & (h == 1)).sum())]
        for j, lab in enumerate(labels)}

    if cfg.engine == "bootstrap":
        for j, lab in enumerate(labels):
            if not np.any(a_idx == j):
                _warn(diagnostics, f"no labeled items with autorater={lab}; using prior only")
        interval = _chain_bootstrap(a_idx, h, a_unl_idx, K_a, cfg)
        return EstimandReport(interval, method, diagnostics)

    posteriors: dict = {}
    for j, lab in enumerate(labels):
        posteriors[f"h_given_{lab}"] = _conditional_proportion(h[a_idx == j], lab, diagnostics)
    if K_a == 2:
        posteriors["a"] = fit_proportion(int(unl_counts[1]), int(unl_counts.sum()))

        def g(d):
            return d["h_given_1"] * d["a"] + d["h_given_0"] * (1.0 - d["a"])
    else:
        posteriors["a"] = fit_kproportion(unl_counts)

        def g(d):
            return sum(d[f"h_given_{lab}"] * d["a"][:, j] for j, lab in enumerate(labels))

    interval = integrate(posteriors, g, cfg)
    return EstimandReport(interval, method, diagnostics)


def _chain_bootstrap(a_idx, h, a_unl_idx, K_a, cfg):
    labeled = np.column_stack([a_idx, h])

    def stat(parts):
        lab, unl = parts["labeled"], parts["unlabeled"]
        N = unl.shape[-1]
        total = 0.0
        for j in range(K_a):
            in_cell = lab[..., 0] == j
            count = in_cell.sum(axis=-1)
            hits = (lab[..., 1] * in_cell).sum(axis=-1)
            # Jeffreys posterior mean keeps empty cells defined
            p_h = (hits + 0.5) / (count + 1.0)
            p_h = np.where(count > 0, hits / np.maximum(count, 1), p_h)
            total = total + p_h * (unl == j).sum(axis=-1) / N
        return total

    return bootstrap({"labeled": labeled, "unlabeled": a_unl_idx}, stat, cfg,
                     batch_size=BOOTSTRAP_BATCH)


def chain_rule_estimate(a, h, a_unlabeled, cfg: EngineConfig = EngineConfig()) -> EstimandReport:
    """P(H) = P(H|A) P(A) + P(H|not A) (1 - P(A)) for a binary autorater."""
    a = _binary(a, "labeled autorater labels")
    h = _binary(h, "human labels")
    au = _binary(a_unlabeled, "unlabeled autorater labels")
    if a.size != h.size:
        raise ValueError("a and h differ in length")
    return _categorical_chain(a, h, au, 2, ("0", "1"), cfg, "chain_rule")


def chain_rule_abstain(a, h, a_unlabeled, cfg: EngineConfig = EngineConfig()) -> EstimandReport:
    """Chain rule over an autorater that answers ``y``, ``n`` or ``u``."""
    a_idx = _tokens(a, ABSTAIN_TOKENS, "labeled autorater labels")
    au_idx = _tokens(a_unlabeled, ABSTAIN_TOKENS, "unlabeled autorater labels")
    h = _binary(h, "human labels")
    if a_idx.size != h.size:
        raise ValueError("a and h differ in length")
    return _categorical_chain(a_idx, h, au_idx, 3, ABSTAIN_TOKENS, cfg, "chain_rule_abstain")


# ------------------------------------------------------------- side by side

def _win_loss_prior(label: str, diagnostics: dict) -> KProportionPosterior:
    _warn(diagnostics, f"no labeled items with autorater={label}; using prior only")
    return KProportionPosterior.prior(3)


def sxs_estimate(a, h, a_unlabeled, cfg: EngineConfig = EngineConfig()) -> EstimandReport:
    """Chain-rule estimate of P(H=w) - P(H=l) for side-by-side labels."""
    a_idx = _tokens(a, SXS_TOKENS, "labeled autorater labels")
    h_idx = _tokens(h, SXS_TOKENS, "human labels")
    au_idx = _tokens(a_unlabeled, SXS_TOKENS, "unlabeled autorater labels")
    if a_idx.size != h_idx.size:
        raise ValueError("a and h differ in length")
    if a_idx.size < 2 or au_idx.size < 2:
        raise ValueError("sxs estimate needs n >= 2 and N >= 2")
    diagnostics: dict[str, Any] = {"n": int(a_idx.size), "N": int(au_idx.size)}
    unl_counts = np.bincount(au_idx, minlength=3)
    diagnostics["unlabeled_counts"] = dict(zip(SXS_TOKENS, unl_counts.tolist()))
    cells = {lab: np.bincount(h_idx[a_idx == j], minlength=3)
             for j, lab in enumerate(SXS_TOKENS)}
    diagnostics["labeled_counts"] = {lab: c.tolist() for lab, c in cells.items()}

    if cfg.engine == "bootstrap":
        for lab, c in cells.items():
            if c.sum() == 0:
                _warn(diagnostics, f"no labeled items with autorater={lab}; using prior only")
        interval = _sxs_bootstrap(a_idx, h_idx, au_idx, cfg)
        return EstimandReport(interval, "sxs_chain_rule", diagnostics)

    posteriors: dict = {}
    for lab, c in cells.items():
        posteriors[f"h_given_{lab}"] = (fit_kproportion(c) if c.sum() > 0
                                        else _win_loss_prior(lab, diagnostics))
    posteriors["a"] = fit_kproportion(unl_counts)

    def g(d):
        return sum((d[f"h_given_{lab}"][:, 0] - d[f"h_given_{lab}"][:, 1]) * d["a"][:, j]
                   for j, lab in enumerate(SXS_TOKENS))

    interval = integrate(posteriors, g, cfg)
    return EstimandReport(interval, "sxs_chain_rule", diagnostics)


def _sxs_bootstrap(a_idx, h_idx, au_idx, cfg):
    labeled = np.column_stack([a_idx, h_idx])

    def stat(parts):
        lab, unl = parts["labeled"], parts["unlabeled"]
        N = unl.shape[-1]
        total = 0.0
        for j in range(3):
            in_cell = lab[..., 0] == j
            count = np.maximum(in_cell.sum(axis=-1), 1)
            wins = (in_cell & (lab[..., 1] == 0)).sum(axis=-1)
            losses = (in_cell & (lab[..., 1] == 1)).sum(axis=-1)
            total = total + (wins - losses) / count * (unl == j).sum(axis=-1) / N
        return total

    return bootstrap({"labeled": labeled, "unlabeled": au_idx}, stat, cfg,
                     batch_size=BOOTSTRAP_BATCH)


def sxs_classical_paired(h, cfg: EngineConfig = EngineConfig()) -> EstimandReport:
    """P(H=w) - P(H=l) from the human labels alone (Dirichlet posterior)."""
    h_idx = _tokens(h, SXS_TOKENS, "human labels")
    if h_idx.size < 2:
        raise ValueError("sxs_classical_paired needs n >= 2")
    counts = np.bincount(h_idx, minlength=3)
    diagnostics = {"n": int(h_idx.size), "counts": dict(zip(SXS_TOKENS, counts.tolist()))}
    if cfg.engine == "bootstrap":
        def stat(parts):
            x = parts["h"]
            return ((x == 0).sum(axis=-1) - (x == 1).sum(axis=-1)) / x.shape[-1]
        interval = bootstrap({"h": h_idx}, stat, cfg, batch_size=BOOTSTRAP_BATCH)
    else:
        interval = integrate({"h": fit_kproportion(counts)},
                             lambda d: d["h"][:, 0] - d["h"][:, 1], cfg)
    return EstimandReport(interval, "sxs_classical_paired", diagnostics)


def sxs_delta_interval(counts, level: float = 0.95) -> tuple[float, float]:
    """Normal approximation for p_w - p_l; cross-check for the paired test."""
    w, l, t = (int(c) for c in counts)
    n = w + l + t
    pw, pl = w / n, l / n
    var = (pw + pl - (pw - pl) ** 2) / n
    z = stats.norm.ppf(0.5 + level / 2)
    return pw - pl - z * np.sqrt(var), pw - pl + z * np.sqrt(var)
