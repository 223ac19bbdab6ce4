"""Independent reference computations used as test oracles.

Each function here is written from the defining formula, deliberately
without sharing code with the package, and is slow but obviously correct.
"""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from scipy import stats


def tail_indices(T: int, level: str) -> tuple[int, int]:
    """Equal-tailed 1-based indices with exact rational arithmetic.

    ``level`` is given as a decimal string so no float rounding enters.
    """
    a = (1 - Fraction(level)) / 2
    lo = math.floor(a * T)
    hi = math.ceil((1 - a) * T)
    return min(max(lo, 1), T), min(max(hi, 1), T)


def clopper_pearson(k: int, n: int, level: float) -> tuple[float, float]:
    a = 1 - level
    lo = 0.0 if k == 0 else stats.beta.ppf(a / 2, k, n - k + 1)
    hi = 1.0 if k == n else stats.beta.ppf(1 - a / 2, k + 1, n - k)
    return float(lo), float(hi)


def cp_zero_upper(n: int, level: float) -> float:
    """Closed form of the Clopper-Pearson upper bound when k = 0."""
    return 1.0 - ((1 - level) / 2) ** (1.0 / n)


def wald(p: float, n: int, level: float = 0.95) -> tuple[float, float]:
    z = stats.norm.ppf(0.5 + level / 2)
    se = math.sqrt(p * (1 - p) / n)
    return p - z * se, p + z * se


def sxs_delta_width(w: int, l: int, t: int, level: float = 0.95) -> float:
    n = w + l + t
    pw, pl = w / n, l / n
    var = (pw + pl - (pw - pl) ** 2) / n
    return 2 * stats.norm.ppf(0.5 + level / 2) * math.sqrt(var)


def sse(y) -> float:
    y = list(y)
    if not y:
        return 0.0
    m = sum(y) / len(y)
    return sum((v - m) ** 2 for v in y)


def best_split_bruteforce(f, y):
    """Exhaustive search over every midpoint between distinct sorted scores.

    Returns (gain, threshold) maximizing the squared-error reduction, or
    None when all scores coincide. Ties go to the leftmost midpoint.
    """
    pairs = sorted(zip(map(float, f), map(float, y)))
    values = sorted(set(v for v, _ in pairs))
    if len(values) < 2:
        return None
    parent = sse(v for _, v in pairs)
    best = None
    for left, right in zip(values[:-1], values[1:]):
        t = (left + right) / 2
        gain = parent - sse(v for s, v in pairs if s <= t) - sse(v for s, v in pairs if s > t)
        if best is None or gain > best[0] + 1e-12:
            best = (gain, t)
    return best


def dirichlet_mean(counts) -> list[float]:
    K = len(counts)
    alphas = [Fraction(1, K) + c for c in counts]
    total = sum(alphas)
    return [float(a / total) for a in alphas]


def regime_variances(world) -> tuple[float, list[float]]:
    """Analytic variance of y - f overall and within each regime."""
    w = np.array([r.weight for r in world.regimes])
    b = np.array([r.bias for r in world.regimes])
    s2 = np.array([r.noise ** 2 for r in world.regimes])
    mean_b = float(w @ b)
    total = float(w @ (s2 + (b - mean_b) ** 2))
    return total, list(s2)


def binary_marginals(p_H: float, a1: float, a0: float) -> tuple[float, float]:
    return p_H, p_H * a1 + (1 - p_H) * a0


def chain_rule_delta_var(p_H: float, a1: float, a0: float, n: int, N: int) -> float:
    """Delta-method variance of the plug-in chain-rule estimate.

    theta = q1 * pA + q0 * (1 - pA); pA from N items, q1 and q0 from the
    labeled items with A=1 and A=0 respectively.
    """
    pA = p_H * a1 + (1 - p_H) * a0
    q1 = p_H * a1 / pA
    q0 = p_H * (1 - a1) / (1 - pA)
    var_pA = pA * (1 - pA) / N
    var_q1 = q1 * (1 - q1) / (n * pA)
    var_q0 = q0 * (1 - q0) / (n * (1 - pA))
    return (q1 - q0) ** 2 * var_pA + pA ** 2 * var_q1 + (1 - pA) ** 2 * var_q0
