import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import integrate, optimize
from termcolor import cprint  # type: ignore

from nlslab.errors import (
    BracketFailure,
    DimensionTooSmall,
    NoBracket,
    NonconvergedODE,
    ZeroField,
)
from nlslab.field import RadialField, RadialGrid, laplacian, sample
from nlslab.functionals import (
    FunctionalReport,
    bubble_W,
    d2S_dlambda2,
    hdot1_scale,
    kinetic_comparison_constant,
    report,
    scaled_report,
    sigma_estimate,
)
from nlslab.nonlinearity import NonlinearitySpec, validate
from nlslab.utils import gather_in_threads

LAMBDA_MIN = 1e-9
LAMBDA_MAX = 1e9


def _reduced_K(base: FunctionalReport, lam: float) -> float:
    """K(T_lambda u) / lambda^2, strictly decreasing in lambda"""
    return scaled_report(base, lam).K / lam**2


def lambda_star_of(base: FunctionalReport) -> float:
    """The unique lambda with K(T_lambda u) = 0, from a base report.

    Raises:
        ZeroField: u vanishes
        BracketFailure: no sign change of K(T_lambda u) in [1e-9, 1e9]
    """
    if base.kinetic <= 0 and base.pot_crit <= 0 and not any(base.per_term):
        raise ZeroField("lambda(u) is undefined for the zero field")

    value = _reduced_K(base, 1.0)
    if value == 0:
        return 1.0

    lo = hi = 1.0
    if value > 0:
        while _reduced_K(base, hi) > 0:
            hi *= 2.0
            if hi > LAMBDA_MAX:
                raise BracketFailure("K(T_lambda u) stays positive up to lambda = 1e9")
        lo = hi / 2.0
    else:
        while _reduced_K(base, lo) < 0:
            lo /= 2.0
            if lo < LAMBDA_MIN:
                raise BracketFailure("K(T_lambda u) stays negative down to lambda = 1e-9")
        hi = lo * 2.0

    lam = optimize.brentq(
        lambda x: _reduced_K(base, x), lo, hi, xtol=1e-12 * lo, rtol=1e-12, maxiter=500
    )
    at_root = scaled_report(base, lam)
    if abs(at_root.K) > 1e-9 * max(at_root.kinetic, at_root.pot_crit):
        raise BracketFailure(f"Root refinement stalled at lambda={lam}, K={at_root.K}")
    return float(lam)


def lambda_star(spec: NonlinearitySpec, omega: float, u: RadialField) -> float:
    return lambda_star_of(report(spec, omega, u))


class LambdaScan(BaseModel):
    """Functional values along the L^2-scaling orbit of one field"""

    lambdas: List[float]
    K_vals: List[float]
    S_vals: List[float]
    I_vals: List[float]
    H_vals: List[float]
    d2S_vals: List[float]
    kinetic_vals: List[float]
    lambda_star: float
    sign_changes: int
    certificates: Dict[str, bool] = Field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.certificates.values())


def scan_report(
    base: FunctionalReport,
    lambda_range: Optional[Tuple[float, float]] = None,
    n_points: int = 200,
) -> LambdaScan:
    """Scan T_lambda u on a log-spaced lambda grid and certify the shape of
    K, I_omega and S_omega along it."""
    lam_star = lambda_star_of(base)
    if lambda_range is None:
        lambda_range = (lam_star / 20.0, lam_star * 20.0)
    lambdas = np.geomspace(lambda_range[0], lambda_range[1], n_points)
    reports = [scaled_report(base, lam) for lam in lambdas]

    K = np.array([r.K for r in reports])
    S = np.array([r.S_omega for r in reports])
    I = np.array([r.I_omega for r in reports])
    H = np.array([r.H for r in reports])
    kinetic = np.array([r.kinetic for r in reports])
    d2S = np.array([d2S_dlambda2(base, lam) for lam in lambdas])

    signs = np.sign(K)
    sign_changes = int(np.count_nonzero(np.diff(signs[signs != 0])))
    scale = max(np.abs(S).max(), np.abs(I).max(), 1e-300)

    increasing_I = bool(np.all(np.diff(I) > -1e-12 * scale) and I[-1] - I[0] > 0)
    single_change = sign_changes == 1 and bool(
        np.all(K[lambdas < lam_star * (1 - 1e-9)] > 0)
        and np.all(K[lambdas > lam_star * (1 + 1e-9)] < 0)
    )
    curvature_tol = 1e-10 * (np.abs(d2S) + np.abs(K) / lambdas**2 + kinetic / lambdas**2)
    curvature_bound = bool(np.all(d2S <= K / lambdas**2 + curvature_tol))

    # Concavity on [lambda(u), inf): slopes must not increase
    beyond = lambdas >= lam_star
    concave = True
    if np.count_nonzero(beyond) >= 3:
        lam_b, S_b = lambdas[beyond], S[beyond]
        steps = np.diff(lam_b)
        slopes = np.diff(S_b) / steps
        bends = np.diff(slopes) * 0.5 * (steps[1:] + steps[:-1])
        concave = bool(np.all(bends <= 1e-10 * scale))

    nonnegative_K = K >= 0
    c0 = kinetic_comparison_constant(base.spec)
    positive_H = bool(np.all(H[nonnegative_K & (kinetic > 0)] > 0))
    kinetic_bound = bool(
        np.all(
            H[nonnegative_K]
            >= 0.5 * (1.0 - c0) * kinetic[nonnegative_K] - 1e-12 * scale
        )
    )

    return LambdaScan(
        lambdas=list(lambdas),
        K_vals=list(K),
        S_vals=list(S),
        I_vals=list(I),
        H_vals=list(H),
        d2S_vals=list(d2S),
        kinetic_vals=list(kinetic),
        lambda_star=lam_star,
        sign_changes=sign_changes,
        certificates={
            "increasing_I": increasing_I,
            "single_sign_change": single_change,
            "curvature_bound": curvature_bound,
            "concave_beyond_root": concave,
            "positive_H_on_K_nonnegative": positive_H,
            "kinetic_bound_on_K_nonnegative": kinetic_bound,
        },
    )


def scan(
    spec: NonlinearitySpec,
    omega: float,
    u: RadialField,
    lambda_range: Optional[Tuple[float, float]] = None,
    n_points: int = 200,
) -> LambdaScan:
    return scan_report(report(spec, omega, u), lambda_range, n_points)


class ShootingConfig(BaseModel):
    """Amplitude-bisection settings for the radial ground-state ODE"""

    sweep_points: int = 80
    sweep_factor: float = 1e4  # sweep a0 from a_* up to a_* * sweep_factor
    max_iterations: int = 60
    rtol: float = 1e-11
    atol: float = 1e-13
    separation_tol: float = 1e-6
    tail_floor: float = 1e-10
    decay_tol: float = 1e-4
    K_tolerance: float = 1e-4
    r_max: Optional[float] = None

    def shooting_radius(self, omega: float) -> float:
        return self.r_max or max(50.0 / math.sqrt(omega), 20.0)


class GroundStateResult(BaseModel):
    """A shooting solution Q of -Delta Q + omega Q = f(Q) + Q^(2^*-1)"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    Q: RadialField
    a0: float
    omega: float
    K_residual: float
    pde_residual: float
    m_omega: float
    sigma_pow: float
    sigma_threshold: float
    gap: float
    iterations: int
    r_match: float
    report: FunctionalReport


def _source(spec: NonlinearitySpec, u: np.ndarray) -> np.ndarray:
    """f(u) + |u|^(2^*-2) u for real u"""
    total = np.abs(u) ** (spec.energy_critical - 2.0) * u
    for mu, p in spec.terms:
        total = total + mu * np.abs(u) ** (p - 1.0) * u
    return total


class _Shooter:
    """Integrates u'' + (d-1)/r u' = omega u - f(u) - u^(2^*-1) from r = 0"""

    def __init__(self, spec: NonlinearitySpec, omega: float, cfg: ShootingConfig):
        self.spec = spec
        self.omega = omega
        self.cfg = cfg
        self.d = spec.d
        self.r_end = cfg.shooting_radius(omega)
        self.degenerate = 0

    def curvature_at_origin(self, a0: float) -> float:
        """u''(0) = (omega a0 - f(a0) - a0^(2^*-1)) / d"""
        return float((self.omega * a0 - _source(self.spec, np.array(a0))) / self.d)

    def start(self, a0: float) -> Tuple[float, List[float]]:
        c = self.curvature_at_origin(a0)
        r0 = 1e-4 / max(1.0, math.sqrt(abs(c) / a0))
        return r0, [a0 + 0.5 * c * r0**2, c * r0]

    def integrate(self, a0: float, dense: bool = False):
        d, omega, spec = self.d, self.omega, self.spec

        def rhs(r, y):
            u, v = y
            return [v, -(d - 1) / r * v + omega * u - _source(spec, np.array(u))]

        def crossing(r, y):
            return y[0]

        crossing.terminal = True  # type: ignore[attr-defined]
        crossing.direction = -1  # type: ignore[attr-defined]

        def turning(r, y):
            return y[1]

        turning.terminal = True  # type: ignore[attr-defined]
        turning.direction = 1  # type: ignore[attr-defined]

        cap = 1e3 * a0

        def runaway(r, y):
            return abs(y[0]) - cap

        runaway.terminal = True  # type: ignore[attr-defined]

        r0, y0 = self.start(a0)
        return integrate.solve_ivp(
            rhs,
            (r0, self.r_end),
            y0,
            method="DOP853",
            rtol=self.cfg.rtol,
            atol=self.cfg.atol * a0,
            events=[crossing, turning, runaway],
            dense_output=dense,
        )

    def classify(self, a0: float) -> str:
        """'overshoot' if u crosses 0, 'undershoot' if u' > 0 while u > 0"""
        if self.curvature_at_origin(a0) >= 0:
            return "undershoot"
        sol = self.integrate(a0)
        if sol.status == -1:
            raise NonconvergedODE(f"Integration failed for a0={a0}: {sol.message}")
        if len(sol.t_events[0]):
            return "overshoot"
        if len(sol.t_events[1]) or len(sol.t_events[2]):
            return "undershoot"
        self.degenerate += 1
        return "undershoot"

    def threshold_amplitude(self) -> float:
        """a_* with omega a_* = f(a_*) + a_*^(2^*-1); ground states start above it"""
        return optimize.brentq(
            lambda a: self.omega - float(_source(self.spec, np.array(a))) / a,
            1e-12,
            1e12,
            xtol=1e-300,
            rtol=1e-14,
        )


def shoot_ground_state(
    spec: NonlinearitySpec,
    omega: float,
    shoot_cfg: Optional[ShootingConfig] = None,
    grid: Optional[RadialGrid] = None,
) -> GroundStateResult:
    """Find the positive radial ground state by amplitude bisection.

    Args:
        spec: A nonempty, valid perturbation with d >= 4
        omega: Frequency, omega > 0
        shoot_cfg: Shooting settings
        grid: Output grid for Q (default graded, n=8192, r_max=200, r_core=5)

    Raises:
        DimensionTooSmall: d < 4
        NoBracket: the amplitude sweep finds no undershoot/overshoot pair
        NonconvergedODE: integration failure, or the matched solution has not
            decayed enough, or K(Q) is far from zero
    """
    validate(spec)
    spec.require_terms()
    if spec.d < 4:
        raise DimensionTooSmall(f"Ground states need d >= 4, got d={spec.d}")
    if not omega > 0:
        raise ValueError(f"omega must be positive, got {omega}")
    cfg = shoot_cfg or ShootingConfig()
    grid = grid or RadialGrid.graded(spec.d, 8192, 200.0, r_core=5.0)

    shooter = _Shooter(spec, omega, cfg)
    a_star = shooter.threshold_amplitude()

    # Sweep upward from a_* for the first overshoot
    amplitudes = a_star * np.geomspace(1.0 + 1e-6, cfg.sweep_factor, cfg.sweep_points)
    lo = hi = None
    previous = a_star
    for a0 in amplitudes:
        if shooter.classify(float(a0)) == "overshoot":
            lo, hi = previous, float(a0)
            break
        previous = float(a0)
    if lo is None or hi is None:
        raise NoBracket(
            f"No overshoot found for a0 in [{a_star:.6g}, {a_star * cfg.sweep_factor:.6g}]"
        )

    iterations = 0
    for iterations in range(1, cfg.max_iterations + 1):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if shooter.classify(mid) == "overshoot":
            hi = mid
        else:
            lo = mid
    if shooter.degenerate:
        cprint(
            f"Warning: {shooter.degenerate} shooting trajectories reached r={shooter.r_end:.3g} "
            "without classification and were treated as undershoot",
            "yellow",
        )

    Q, r_match = _matched_profile(shooter, lo, hi, grid)
    base = report(spec, omega, Q)
    K_residual = abs(base.K) / base.kinetic
    if K_residual > cfg.K_tolerance:
        raise NonconvergedODE(
            f"Shooting solution is off the Nehari manifold: |K(Q)|/||grad Q||^2 = {K_residual:.3g}"
        )

    sigma = sigma_estimate(grid)
    mask = grid.r < r_match
    q_vals = Q.values.real

    residual = laplacian(Q).real - omega * q_vals + _source(spec, q_vals)
    pde_scale = np.max(omega * np.abs(q_vals) + np.abs(_source(spec, q_vals)))
    return GroundStateResult(
        Q=Q,
        a0=lo,
        omega=omega,
        K_residual=K_residual,
        pde_residual=float(np.max(np.abs(residual[mask])) / pde_scale),
        m_omega=base.S_omega,
        sigma_pow=sigma.sigma_pow,
        sigma_threshold=sigma.threshold,
        gap=sigma.threshold - base.S_omega,
        iterations=iterations,
        r_match=r_match,
        report=base,
    )


def _matched_profile(
    shooter: _Shooter, lo: float, hi: float, grid: RadialGrid
) -> Tuple[RadialField, float]:
    """Follow the undershoot trajectory until it separates from the overshoot
    one (or decays below the floor), then attach A e^(-sqrt(omega) r) r^(-(d-1)/2)."""
    cfg = shooter.cfg
    sol_lo = shooter.integrate(lo, dense=True)
    sol_hi = shooter.integrate(hi, dense=True)
    r0 = float(sol_lo.t[0])
    r_end = min(float(sol_lo.t[-1]), float(sol_hi.t[-1]))
    radii = np.linspace(r0, r_end, 20001)
    u_lo = sol_lo.sol(radii)[0]
    u_hi = sol_hi.sol(radii)[0]

    separated = np.abs(u_hi - u_lo) > cfg.separation_tol * np.abs(u_lo)
    decayed = u_lo <= cfg.tail_floor * lo
    stops = np.flatnonzero(separated | decayed)
    stop = int(stops[0]) if stops.size else radii.size - 1
    stop = max(stop, 1)
    r_match = float(radii[stop])
    u_match = float(u_lo[stop])
    if not 0 < u_match <= cfg.decay_tol * lo:
        raise NonconvergedODE(
            f"Matched ground state has not decayed: Q({r_match:.4g}) / Q(0) = {u_match / lo:.3g}"
        )

    d, sqrt_omega = shooter.d, math.sqrt(shooter.omega)
    c = shooter.curvature_at_origin(lo)
    r = grid.r
    values = np.empty_like(r)
    inner = r <= r_match
    core = inner & (r >= r0)
    values[core] = sol_lo.sol(r[core])[0]
    values[inner & (r < r0)] = lo + 0.5 * c * r[inner & (r < r0)] ** 2
    outer = ~inner
    values[outer] = (
        u_match
        * np.exp(-sqrt_omega * (r[outer] - r_match))
        * (r_match / r[outer]) ** ((d - 1) / 2.0)
    )
    return RadialField(grid=grid, values=values), r_match


async def sweep_ground_states(
    spec: NonlinearitySpec,
    omegas: Sequence[float],
    shoot_cfg: Optional[ShootingConfig] = None,
    grid: Optional[RadialGrid] = None,
    max_workers: Optional[int] = None,
) -> List[GroundStateResult]:
    """shoot_ground_state for several omegas, concurrently"""
    return await gather_in_threads(
        lambda omega: shoot_ground_state(spec, omega, shoot_cfg, grid),
        list(omegas),
        max_workers,
    )


class NehariBounds(BaseModel):
    """S_omega(T_lambda(u) u) over a trial family: upper bounds for m_omega"""

    values: List[float]
    lambdas: List[float]
    minimum: float
    argmin: int
    m_omega: Optional[float] = None
    sigma_threshold: Optional[float] = None
    above_m_omega: Optional[bool] = None
    below_threshold: Optional[bool] = None
    relative_excess: Optional[float] = None  # (minimum - m_omega) / m_omega
    nehari_identity_error: float


def m_omega_upper_bounds_of_reports(
    trials: Sequence[FunctionalReport],
    m_omega: Optional[float] = None,
    sigma_threshold: Optional[float] = None,
    tol: float = 1e-6,
) -> NehariBounds:
    """Project each trial onto K = 0 along T_lambda and evaluate S_omega there.

    Every value bounds m_omega from above; I_omega equals S_omega on the
    manifold, which is reported as nehari_identity_error.
    """
    if not trials:
        raise ValueError("Trial family is empty")
    values, lambdas, identity_error = [], [], 0.0
    for base in trials:
        lam = lambda_star_of(base)
        projected = scaled_report(base, lam)
        values.append(projected.S_omega)
        lambdas.append(lam)
        identity_error = max(
            identity_error,
            abs(projected.I_omega - projected.S_omega) / projected.scale,
        )
    argmin = int(np.argmin(values))
    minimum = float(values[argmin])
    return NehariBounds(
        values=values,
        lambdas=lambdas,
        minimum=minimum,
        argmin=argmin,
        m_omega=m_omega,
        sigma_threshold=sigma_threshold,
        above_m_omega=None
        if m_omega is None
        else bool(minimum >= m_omega - tol * abs(m_omega)),
        relative_excess=None if not m_omega else (minimum - m_omega) / abs(m_omega),
        below_threshold=None if sigma_threshold is None else minimum < sigma_threshold,
        nehari_identity_error=identity_error,
    )


async def m_omega_upper_bounds(
    spec: NonlinearitySpec,
    omega: float,
    trial_family: Sequence[RadialField],
    m_omega: Optional[float] = None,
    sigma_threshold: Optional[float] = None,
    max_workers: Optional[int] = None,
) -> NehariBounds:
    """S_omega at the Nehari projection of every trial field; each one bounds m_omega from above.

    Reports are evaluated in threads, then handed to m_omega_upper_bounds_of_reports.
    """
    trials = await gather_in_threads(
        lambda u: report(spec, omega, u), list(trial_family), max_workers
    )
    return m_omega_upper_bounds_of_reports(trials, m_omega, sigma_threshold)


def gaussian_mixture(grid: RadialGrid, rng: np.random.Generator, max_bumps: int = 3) -> RadialField:
    """sum_j a_j exp(-r^2 / (2 s_j^2)) with positive random a_j, s_j"""
    count = int(rng.integers(1, max_bumps + 1))
    amplitudes = rng.uniform(0.2, 2.0, size=count)
    widths = rng.uniform(0.5, 3.0, size=count)
    return sample(
        grid,
        lambda r: sum(a * np.exp(-(r**2) / (2.0 * s**2)) for a, s in zip(amplitudes, widths)),
    )


def gaussian_family(grid: RadialGrid, seed: int, count: int) -> List[RadialField]:
    rng = np.random.default_rng(seed)
    return [gaussian_mixture(grid, rng) for _ in range(count)]


def rescaled_family(base: FunctionalReport, mus: Sequence[float]) -> List[FunctionalReport]:
    """Reports of T_mu u for each mu, in closed form"""
    return [scaled_report(base, mu) for mu in mus]


def bubble_family(
    grid: RadialGrid, eps_values: Sequence[float], cutoff_radius: float = 1.0
) -> List[RadialField]:
    """Concentrated bubbles T'_(1/eps) W with a smooth cutoff at cutoff_radius"""
    R = cutoff_radius

    def cutoff(r: np.ndarray) -> np.ndarray:
        taper = np.cos(0.5 * np.pi * np.clip((r - R) / R, 0.0, 1.0)) ** 2
        return np.where(r <= R, 1.0, taper)

    W = bubble_W(grid)
    fields = []
    for eps in eps_values:
        concentrated = hdot1_scale(W, 1.0 / eps)
        fields.append(concentrated.with_values(concentrated.values * cutoff(grid.r)))
    return fields
