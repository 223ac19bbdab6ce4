"""Posteriors over means, proportions and K-proportions.

Each posterior is an immutable value object with a vectorised ``sample``
method. Priors are fixed: a flat prior for means (Gaussian, or Student-T
below 30 observations), Jeffreys Beta(1/2, 1/2) for proportions, and a
symmetric Dirichlet(1/K, ..., 1/K) for K-way proportions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

STUDENT_T_CUTOFF = 30


@dataclass(frozen=True)
class MeanPosterior:
    mu_hat: float
    sigma2_hat: float
    n: int

    @property
    def family(self) -> str:
        return "student_t" if self.n < STUDENT_T_CUTOFF else "gaussian"

    @property
    def stderr(self) -> float:
        return float(np.sqrt(self.sigma2_hat / self.n))

    @property
    def df(self) -> int:
        return self.n - 1

    @property
    def mean(self) -> float:
        return self.mu_hat

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        se = self.stderr
        if se == 0.0:
            return np.full(size, self.mu_hat)
        if self.family == "student_t":
            # n == 1 has zero variance by construction, so df >= 1 here
            return self.mu_hat + se * rng.standard_t(self.df, size)
        return self.mu_hat + se * rng.standard_normal(size)


@dataclass(frozen=True)
class ProportionPosterior:
    """Beta posterior under the Jeffreys prior.

    ``trials == 0`` is the prior-only posterior Beta(1/2, 1/2); it is only
    built by :meth:`prior`, never by :func:`fit_proportion`.
    """

    successes: int
    trials: int

    @classmethod
    def prior(cls) -> "ProportionPosterior":
        return cls(0, 0)

    @property
    def alpha(self) -> float:
        return self.successes + 0.5

    @property
    def beta(self) -> float:
        return self.trials - self.successes + 0.5

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.beta(self.alpha, self.beta, size)


@dataclass(frozen=True)
class KProportionPosterior:
    counts: tuple
    alphas: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        K = len(counts)
        alphas = np.asarray(counts, dtype=float) + 1.0 / K
        alphas.setflags(write=False)
        object.__setattr__(self, "alphas", alphas)

    @classmethod
    def prior(cls, K: int) -> "KProportionPosterior":
        return cls((0,) * K)

    @property
    def K(self) -> int:
        return len(self.counts)

    @property
    def mean(self) -> np.ndarray:
        return self.alphas / self.alphas.sum()

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        draws = rng.dirichlet(self.alphas, size)
        # renormalise so rows sum to 1 to machine precision
        return draws / draws.sum(axis=1, keepdims=True)


Posterior = Union[MeanPosterior, ProportionPosterior, KProportionPosterior]


def fit_mean(values: Sequence[float]) -> MeanPosterior:
    """Posterior over a population mean.

    The variance uses the 1/n divisor; Student-T draws use n - 1 degrees of
    freedom.
    """
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empty sample")
    mu = float(x.mean())
    sigma2 = float(np.mean((x - mu) ** 2))
    return MeanPosterior(mu, sigma2, int(x.size))


def fit_proportion(successes: int, trials: int) -> ProportionPosterior:
    successes, trials = int(successes), int(trials)
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if not 0 <= successes <= trials:
        raise ValueError(f"successes must be in [0, {trials}], got {successes}")
    return ProportionPosterior(successes, trials)


def fit_kproportion(counts: Sequence[int]) -> KProportionPosterior:
    counts = [int(c) for c in counts]
    if len(counts) < 2:
        raise ValueError(f"need K >= 2 categories, got {len(counts)}")
    if any(c < 0 for c in counts):
        raise ValueError("counts must be non-negative")
    if sum(counts) == 0:
        raise ValueError("all counts are zero")
    return KProportionPosterior(tuple(counts))


def draw(posterior: Posterior, rng: np.random.Generator):
    """A single draw: a float, or a simplex vector for K-proportions."""
    value = posterior.sample(rng, 1)[0]
    if isinstance(posterior, KProportionPosterior):
        return value
    return float(value)
