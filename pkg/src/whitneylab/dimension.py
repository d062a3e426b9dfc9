"""Moran equation and the normalized self-similar weights rho_w^s."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import DegenerateError, DomainError
from .geometry import LOG_DOMAIN_LENGTH

MORAN_TOL = 1e-14


@dataclass(frozen=True)
class MoranSolution:
    dimension: float
    residual: float
    iterations: int


def _check_ratios(ratios: Sequence[float]) -> list[float]:
    rs = [float(r) for r in ratios]
    if not rs:
        raise DegenerateError("no ratios given")
    bad = [r for r in rs if not 0.0 < r < 1.0]
    if bad:
        raise DomainError(f"ratios must lie in (0, 1): {bad}")
    if len(rs) == 1:
        raise DegenerateError("a single map has similarity dimension 0")
    return rs


def moran_value(ratios: Sequence[float], s: float) -> float:
    """sum_i ratio_i**s, powers taken as exp(s log r)."""
    if s < 0:
        raise DomainError(f"s must be non-negative, got {s}")
    return math.fsum(math.exp(s * math.log(r)) for r in ratios)


def solve_moran(ratios: Sequence[float]) -> MoranSolution:
    """Bisection for the root of s -> sum r_i^s - 1 (strictly decreasing in s)."""
    rs = _check_ratios(ratios)
    lo = 0.0
    hi = math.log(len(rs)) / math.log(1.0 / max(rs)) + 1.0
    best, best_res = lo, abs(moran_value(rs, lo) - 1.0)
    it = 0
    while True:
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        it += 1
        res = moran_value(rs, mid) - 1.0
        if abs(res) < best_res:
            best, best_res = mid, abs(res)
        if res == 0.0:
            break
        if res > 0:
            lo = mid
        else:
            hi = mid
    return MoranSolution(best, best_res, it)


def similarity_dimension(ratios: Sequence[float]) -> float:
    return solve_moran(ratios).dimension


@dataclass(frozen=True)
class MeasureWeights:
    """Cylinder masses w(word) = prod p_i with p_i = rho_i^s, normalized to sum 1.

    Normalizing the generator masses (rather than trusting rho_i^s as computed)
    keeps equal-ratio systems exactly dyadic, e.g. p_i = 1/4 for four maps.
    These are similarity-measure weights; they equal H^s-proportions only under
    a separation condition.
    """

    dimension: float
    probabilities: tuple

    @classmethod
    def from_ratios(cls, ratios: Sequence[float]) -> "MeasureWeights":
        s = similarity_dimension(ratios)
        raw = [math.exp(s * math.log(r)) for r in ratios]
        total = math.fsum(raw)
        return cls(s, tuple(p / total for p in raw))

    def __call__(self, w) -> float:
        return cylinder_weight(self, w)


def cylinder_weight(weights: MeasureWeights, w) -> float:
    ps = weights.probabilities
    for letter in w:
        if not 1 <= letter <= len(ps):
            raise IndexError(f"letter {letter} outside 1..{len(ps)}")
    if len(w) > LOG_DOMAIN_LENGTH:
        return math.exp(math.fsum(math.log(ps[i - 1]) for i in w))
    out = 1.0
    for letter in w:
        out *= ps[letter - 1]
    return out
