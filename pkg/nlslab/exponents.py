"""Exact Strichartz exponent bookkeeping.

Exponents are ``fractions.Fraction`` values; ``INF`` (``math.inf``) stands
for an infinite exponent and only ever enters through ``reciprocal``.
A pair is ordered (q, r) = (space exponent, time exponent), so the norm is
L^r_t L^q_x.
"""

import math
from fractions import Fraction
from typing import Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict

from nlslab.errors import DegenerateDenominator, DimensionTooSmall, POutOfRange

Exponent = Union[Fraction, float]
INF = math.inf


def as_exponent(x: Union[Exponent, int, str]) -> Exponent:
    if isinstance(x, float) and math.isinf(x):
        return INF
    return Fraction(x)


def reciprocal(x: Exponent) -> Exponent:
    if x == INF:
        return Fraction(0)
    if x == 0:
        return INF
    return 1 / Fraction(x)


def s_p(d: int, p: Union[Fraction, int, str, float]) -> Fraction:
    """Critical regularity d/2 - 2/(p-1)"""
    p = Fraction(p)
    if not p > 1:
        raise POutOfRange(f"s_p needs p > 1, got {p}")
    return Fraction(d, 2) - 2 / (p - 1)


def conjugate(q: Exponent) -> Exponent:
    """Holder conjugate q/(q-1), with 1' = inf and inf' = 1"""
    q = as_exponent(q)
    if not q >= 1:
        raise POutOfRange(f"Holder conjugate needs q >= 1, got {q}")
    if q == 1:
        return INF
    if q == INF:
        return Fraction(1)
    return q / (q - 1)


class Pair(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    q: Exponent
    r: Exponent

    @classmethod
    def of(cls, q, r) -> "Pair":
        return cls(q=as_exponent(q), r=as_exponent(r))

    def in_range(self) -> bool:
        return self.q >= 2 and self.r >= 2

    def __str__(self) -> str:
        return f"({_fmt(self.q)}, {_fmt(self.r)})"


def _fmt(x: Exponent) -> str:
    return "inf" if x == INF else str(x)


def is_Hs_admissible(d: int, s: Union[Fraction, int], pair: Pair) -> bool:
    """1/r = (d/2)(1/2 - 1/q - s/d) with q, r in [2, inf]"""
    if not pair.in_range():
        return False
    s = Fraction(s)
    return reciprocal(pair.r) == Fraction(d, 2) * (Fraction(1, 2) - reciprocal(pair.q) - s / d)


def is_L2_admissible(d: int, pair: Pair) -> bool:
    return is_Hs_admissible(d, 0, pair)


def _pair_exponents(d: int, p: Fraction) -> Tuple[Fraction, Fraction]:
    """(space, time) exponents of V_p: (2d(d+2)(p-1) / (d(d+2)(p-1) - 8), (d+2)(p-1)/2)"""
    k = d * (d + 2) * (p - 1)
    return 2 * k / (k - 8), (d + 2) * (p - 1) / 2


def default_p1(d: int) -> Fraction:
    """Midpoint of (1 + 4/d, 1 + 4/(d-2)), the exponent used when none is given"""
    if d < 3:
        raise DimensionTooSmall(f"Exponents need d >= 3, got d={d}")
    return (2 + Fraction(4, d) + Fraction(4, d - 2)) / 2


def named_pairs(d: int, p: Optional[Union[Fraction, int, str]] = None) -> List[Tuple[str, Pair]]:
    """The five standard L^2-admissible pairs; V_p uses default_p1(d) when p is not given"""
    if d < 3:
        raise DimensionTooSmall(f"Named pairs need d >= 3, got d={d}")
    two_star = Fraction(2 * d, d - 2)
    q, r = _pair_exponents(d, Fraction(p) if p is not None else default_p1(d))
    return [
        ("energy", Pair.of(2, INF)),
        ("diagonal", Pair.of(Fraction(2 * (d + 2), d), Fraction(2 * (d + 2), d))),
        ("V", Pair.of(Fraction(2 * d * (d + 2), d * d + 4), Fraction(2 * (d + 2), d - 2))),
        ("V_p", Pair.of(q, r)),
        ("endpoint", Pair.of(two_star, 2)),
    ]


def space_exponents(d: int, p: Union[Fraction, int, str]) -> Dict[str, Pair]:
    """Exponent pairs of the V_p, W_p, V and W norms"""
    p = Fraction(p)
    p_crit = 1 + Fraction(4, d - 2)
    v_p = _pair_exponents(d, p)
    v = _pair_exponents(d, p_crit)
    w_p = (d + 2) * (p - 1) / 2
    w = (d + 2) * (p_crit - 1) / 2
    return {
        "V_p": Pair.of(*v_p),
        "W_p": Pair.of(w_p, w_p),
        "V": Pair.of(*v),
        "W": Pair.of(w, w),
    }


class ExoticExponents(BaseModel):
    """Exponents of the exotic Strichartz norms for d >= 5"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kind: Literal["exotic"] = "exotic"
    d: int
    p1: Fraction
    s_p1: Fraction
    derivative_order: Fraction
    alpha: Fraction
    s_alpha: Fraction
    rho: Fraction
    gamma: Fraction
    rho_star: Fraction
    gamma_star: Fraction
    alpha_bounds: Tuple[Fraction, Fraction]
    gamma_above_diagonal: bool  # holds only for p1 in the lower part of its range
    certificates: Dict[str, bool]

    @property
    def passed(self) -> bool:
        return all(self.certificates.values())


class LowDimensionNorms(BaseModel):
    """For d <= 4 the exotic norms are the ordinary ones:
    ES = ||grad u||_V and ES* = ||grad u|| in L^(2(d+2)/(d+4)) in space and time."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kind: Literal["low_dimension"] = "low_dimension"
    d: int
    es: Pair
    es_star: Pair


def exotic(
    d: int,
    p1: Union[Fraction, int, str, float],
    allow_low_dimension: bool = False,
) -> Union[ExoticExponents, LowDimensionNorms]:
    """Compute alpha, s_alpha, (rho, gamma), (rho*, gamma*) exactly and certify them.

    Raises:
        DimensionTooSmall: d <= 4 (unless allow_low_dimension) or d < 3
        DegenerateDenominator: d(d+2)(p1-1) = 16
        POutOfRange: p1 outside (1 + 4/d, 1 + 4/(d-2))
    """
    if d < 3:
        raise DimensionTooSmall(f"Exponents need d >= 3, got d={d}")
    if d <= 4:
        if not allow_low_dimension:
            raise DimensionTooSmall(f"Exotic exponents are defined for d >= 5, got d={d}")
        dual = Fraction(2 * (d + 2), d + 4)
        return LowDimensionNorms(d=d, es=space_exponents(d, 1 + Fraction(4, d - 2))["V"], es_star=Pair.of(dual, dual))

    p1 = Fraction(p1)
    denominator = d * (d + 2) * (p1 - 1) - 16
    if denominator == 0:
        raise DegenerateDenominator(f"d(d+2)(p1-1) = 16 at d={d}, p1={p1}")
    lower_p, upper_p = 1 + Fraction(4, d), 1 + Fraction(4, d - 2)
    if not lower_p < p1 < upper_p:
        raise POutOfRange(f"p1={p1} outside ({lower_p}, {upper_p}) for d={d}")

    two_star = Fraction(2 * d, d - 2)
    s1 = s_p(d, p1)
    alpha = 1 + 4 * d * (p1 - 1) / denominator
    s_alpha = 1 - Fraction(4, d) * s1
    rho = (alpha + 1 + two_star) / 2
    gamma = 1 / (Fraction(d, 2) * (Fraction(1, 2) - 1 / rho - s_alpha / d))
    rho_star = 1 / (1 - 1 / rho)
    gamma_star = 1 / (1 - Fraction(d, 2) * (Fraction(1, 2) - 1 / rho + s_alpha / d))
    bounds = (1 + Fraction(4 * d, d * d - 2 * d + 8), upper_p)

    certificates = {
        "alpha_in_interval": bounds[0] < alpha < bounds[1],
        "s_alpha_is_regularity_of_alpha": s_p(d, alpha) == s_alpha,
        "rho_gamma_Hs_admissible": gamma > 0 and is_Hs_admissible(d, s_alpha, Pair.of(rho, gamma)),
        "rho_star_is_conjugate": rho_star == conjugate(rho),
    }
    return ExoticExponents(
        d=d,
        p1=p1,
        s_p1=s1,
        derivative_order=Fraction(4, d) * s1,
        alpha=alpha,
        s_alpha=s_alpha,
        rho=rho,
        gamma=gamma,
        rho_star=rho_star,
        gamma_star=gamma_star,
        alpha_bounds=bounds,
        gamma_above_diagonal=gamma > (d + 2) * (p1 - 1) / 2,
        certificates=certificates,
    )
