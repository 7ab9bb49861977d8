from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from nlslab.errors import (
    DimensionTooSmall,
    EmptyPerturbation,
    ExponentOutOfRange,
    NonincreasingExponents,
    NonpositiveCoefficient,
)

Scalar = Union[complex, float, np.ndarray]


class NonlinearitySpec(BaseModel):
    """The perturbation f(z) = sum_k mu_k |z|^(p_k - 1) z on R^d.

    An empty term list is the pure critical equation; it is only accepted when
    ``diagnostic`` is set and is rejected by every solver.
    """

    model_config = ConfigDict(frozen=True)

    d: int
    terms: List[Tuple[float, float]] = Field(default_factory=list)  # (mu, p)
    diagnostic: bool = False

    @classmethod
    def from_terms(
        cls,
        d: int,
        terms: List[Tuple[float, float]],
        diagnostic: bool = False,
    ) -> "NonlinearitySpec":
        """Build a spec and validate it, raising on the first violation"""
        spec = cls(
            d=d,
            terms=[(float(mu), float(p)) for mu, p in terms],
            diagnostic=diagnostic,
        )
        validate(spec)
        return spec

    @property
    def mass_critical(self) -> float:
        """2_* = 2 + 4/d"""
        return 2.0 + 4.0 / self.d

    @property
    def energy_critical(self) -> float:
        """2^* = 2 + 4/(d-2)"""
        return 2.0 + 4.0 / (self.d - 2)

    @property
    def mus(self) -> np.ndarray:
        return np.array([mu for mu, _ in self.terms], dtype=float)

    @property
    def exponents(self) -> np.ndarray:
        return np.array([p for _, p in self.terms], dtype=float)

    @property
    def p1(self) -> Optional[float]:
        return min(p for _, p in self.terms) if self.terms else None

    @property
    def p2(self) -> Optional[float]:
        return max(p for _, p in self.terms) if self.terms else None

    @property
    def eps0(self) -> Optional[float]:
        """Largest admissible epsilon_0, (p_1 + 1) - 2_*"""
        if not self.terms:
            return None
        return self.p1 + 1.0 - self.mass_critical  # type: ignore[operator]

    def require_terms(self) -> None:
        if not self.terms:
            raise EmptyPerturbation(
                "Solvers need a nonempty perturbation; diagnostic-mode specs are "
                "only accepted for bubble and sigma validation"
            )


class ValidationReport(BaseModel):
    """Outcome of validate() with the analytic facts that hold for the nonlinearity"""

    valid: bool
    d: int
    diagnostic: bool
    eps0: Optional[float] = None
    p1: Optional[float] = None
    p2: Optional[float] = None
    growth_branch: str = ""
    facts: List[str] = Field(default_factory=list)


def _growth_branch(d: int, p: float) -> str:
    if d <= 4:
        return "d<=4: |f_z| + |f_zbar| <~ |u|^(p-1)"
    if p >= 2:
        return "d>=5, p>=2: Lipschitz derivative bound"
    return "d>=5, p<2: Holder derivative bound of order p-1"


def validate(spec: NonlinearitySpec) -> ValidationReport:
    """Check the monomial-class assumptions, raising on the first violation.

    Raises:
        DimensionTooSmall: d < 3
        NonpositiveCoefficient: some mu_k <= 0
        NonincreasingExponents: exponents not strictly increasing
        ExponentOutOfRange: some p_k outside (2_* - 1, 2^* - 1)
        EmptyPerturbation: no terms outside diagnostic mode
    """
    if spec.d < 3:
        raise DimensionTooSmall(f"Dimension must be at least 3, got d={spec.d}")

    if not spec.terms:
        if not spec.diagnostic:
            raise EmptyPerturbation(
                "Empty perturbation is only allowed in diagnostic mode"
            )
        return ValidationReport(
            valid=True,
            d=spec.d,
            diagnostic=True,
            facts=["pure energy-critical equation (no perturbation)"],
        )

    lower = spec.mass_critical - 1.0
    upper = spec.energy_critical - 1.0
    previous = None
    for k, (mu, p) in enumerate(spec.terms):
        if not mu > 0:
            raise NonpositiveCoefficient(
                f"Coefficient mu_{k + 1}={mu} must be positive"
            )
        if previous is not None and not p > previous:
            raise NonincreasingExponents(
                f"Exponents must be strictly increasing: p_{k + 1}={p} after {previous}"
            )
        if not lower < p < upper:
            raise ExponentOutOfRange(
                f"Exponent p_{k + 1}={p} outside the open interval ({lower:.6g}, {upper:.6g}) for d={spec.d}"
            )
        previous = p

    eps0 = spec.eps0
    facts = [
        "f(0) = f_z(0) = f_zbar(0) = 0 since every p_k > 1",
        "dF/dzbar = f and zbar f(z) is real for monomials",
        "F >= 0 since every mu_k > 0",
        "DF = sum_k (p_k + 1) F_k",
        f"(D - 2_* - eps0) F >= 0 with eps0 = {eps0:.6g}",
        "(D - 2)(D - 2_* - eps0) F >= 0",
        "growth exponents p1, p2 lie strictly between 2_* - 1 and 2^* - 1",
    ]
    return ValidationReport(
        valid=True,
        d=spec.d,
        diagnostic=False,
        eps0=eps0,
        p1=spec.p1,
        p2=spec.p2,
        growth_branch=_growth_branch(spec.d, spec.p1),  # type: ignore[arg-type]
        facts=facts,
    )


def _weighted_powers(spec: NonlinearitySpec, z: Scalar, weights: np.ndarray) -> Scalar:
    """sum_k weights_k |z|^(p_k + 1), scalar in, scalar out"""
    modulus = np.abs(np.asarray(z))
    total = np.zeros(modulus.shape, dtype=float)
    for weight, p in zip(weights, spec.exponents):
        total = total + weight * modulus ** (p + 1.0)
    return total if total.ndim else float(total)


def eval_f(spec: NonlinearitySpec, z: Scalar) -> Scalar:
    """f(z) = sum_k mu_k |z|^(p_k - 1) z"""
    z = np.asarray(z, dtype=complex)
    modulus = np.abs(z)
    total = np.zeros_like(z)
    for mu, p in spec.terms:
        total = total + mu * modulus ** (p - 1.0) * z
    return total if total.ndim else complex(total)


def eval_F(spec: NonlinearitySpec, z: Scalar) -> Scalar:
    """F(z) = sum_k 2 mu_k / (p_k + 1) |z|^(p_k + 1), so that dF/dzbar = f"""
    return _weighted_powers(spec, z, 2.0 * spec.mus / (spec.exponents + 1.0))


def eval_DF(spec: NonlinearitySpec, z: Scalar) -> Scalar:
    """DF(z) = sum_k 2 mu_k |z|^(p_k + 1)"""
    return _weighted_powers(spec, z, 2.0 * spec.mus)


def eval_D2F(spec: NonlinearitySpec, z: Scalar) -> Scalar:
    """D^2 F(z) = sum_k 2 mu_k (p_k + 1) |z|^(p_k + 1)"""
    return _weighted_powers(spec, z, 2.0 * spec.mus * (spec.exponents + 1.0))


def eval_DF_minus_cF(spec: NonlinearitySpec, z: Scalar, c: float) -> Scalar:
    """(DF - cF)(z) = sum_k 2 mu_k (p_k + 1 - c) / (p_k + 1) |z|^(p_k + 1)"""
    p = spec.exponents
    return _weighted_powers(spec, z, 2.0 * spec.mus * (p + 1.0 - c) / (p + 1.0))


def consistency_chain(spec: NonlinearitySpec, z: Scalar) -> bool:
    """D^2 F >= (2_* + eps0) DF >= (2_* + eps0)^2 F >= 0 at every sample"""
    if not spec.terms:
        return True
    c = spec.mass_critical + spec.eps0  # type: ignore[operator]
    F = np.asarray(eval_F(spec, z))
    DF = np.asarray(eval_DF(spec, z))
    D2F = np.asarray(eval_D2F(spec, z))
    slack = 1e-12 * np.maximum(D2F, 1.0)
    return bool(
        np.all(D2F >= c * DF - slack)
        and np.all(c * DF >= c * c * F - slack)
        and np.all(F >= 0.0)
    )


def wirtinger_residual(spec: NonlinearitySpec, z: complex, h: float = 1e-6) -> float:
    """Relative error between a central-difference dF/dzbar and f(z)"""
    dF_dx = (eval_F(spec, z + h) - eval_F(spec, z - h)) / (2 * h)  # type: ignore[operator]
    dF_dy = (eval_F(spec, z + 1j * h) - eval_F(spec, z - 1j * h)) / (2 * h)  # type: ignore[operator]
    dF_dzbar = 0.5 * (dF_dx + 1j * dF_dy)
    exact = eval_f(spec, z)
    return float(abs(dF_dzbar - exact) / max(abs(exact), 1e-300))


def potential_density(spec: NonlinearitySpec, s: np.ndarray, critical: bool = True) -> np.ndarray:
    """Phi(s) = F(sqrt s)/2 + s^(2^*/2)/2^*, the local part of -H in s = |psi|^2"""
    s = np.asarray(s, dtype=float)
    total = np.zeros_like(s)
    for mu, p in spec.terms:
        total = total + mu / (p + 1.0) * s ** ((p + 1.0) / 2.0)
    if critical:
        q = spec.energy_critical
        total = total + s ** (q / 2.0) / q
    return total


def potential_density_prime(spec: NonlinearitySpec, s: np.ndarray, critical: bool = True) -> np.ndarray:
    """Phi'(s); 2 Phi'(|psi|^2) psi equals f(psi) + |psi|^(2^*-2) psi"""
    s = np.asarray(s, dtype=float)
    total = np.zeros_like(s)
    for mu, p in spec.terms:
        total = total + 0.5 * mu * s ** ((p - 1.0) / 2.0)
    if critical:
        q = spec.energy_critical
        total = total + 0.5 * s ** ((q - 2.0) / 2.0)
    return total


def _power_quotient(a: float, s_new: np.ndarray, s_old: np.ndarray) -> np.ndarray:
    """(s_new^a - s_old^a) / (s_new - s_old) for a > 1, without cancellation.

    With lo = min, t = |ds| / lo the quotient is lo^(a-1) expm1(a log1p t) / t,
    which tends to a lo^(a-1) as t -> 0. Far-apart pairs use the plain quotient.
    """
    lo = np.minimum(s_new, s_old)
    hi = np.maximum(s_new, s_old)
    near = (lo > 0) & (hi - lo <= 0.5 * lo)
    safe_lo = np.where(near, lo, 1.0)
    t = np.where(near, (hi - lo) / safe_lo, 1.0)
    tiny = t < 1e-300
    safe_t = np.where(tiny, 1.0, t)
    ratio = np.where(tiny, a, np.expm1(a * np.log1p(safe_t)) / safe_t)
    gap = np.where(near | (hi == lo), 1.0, hi - lo)
    plain = (hi**a - lo**a) / gap
    return np.where(near, safe_lo ** (a - 1.0) * ratio, plain)


def potential_density_quotient(
    spec: NonlinearitySpec, s_new: np.ndarray, s_old: np.ndarray, critical: bool = True
) -> np.ndarray:
    """[Phi(s_new) - Phi(s_old)] / (s_new - s_old), equal to Phi'(s) where s_new = s_old"""
    s_new = np.asarray(s_new, dtype=float)
    s_old = np.asarray(s_old, dtype=float)
    total = np.zeros(np.broadcast(s_new, s_old).shape)
    for mu, p in spec.terms:
        total = total + mu / (p + 1.0) * _power_quotient((p + 1.0) / 2.0, s_new, s_old)
    if critical:
        q = spec.energy_critical
        total = total + _power_quotient(q / 2.0, s_new, s_old) / q
    return total
