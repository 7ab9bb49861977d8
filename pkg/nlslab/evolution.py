import math
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import linalg
from termcolor import cprint  # type: ignore

from nlslab.errors import FixedPointDiverged, InsufficientStates, InvarianceViolated
from nlslab.exponents import space_exponents
from nlslab.field import (
    RadialField,
    RadialGrid,
    apply_flux_laplacian,
    dirichlet_form,
    laplacian,
    lp_norm_pow,
    mass_radius,
    sample,
)
from nlslab.functionals import FunctionalReport, kinetic_comparison_constant, report
from nlslab.nonlinearity import (
    NonlinearitySpec,
    potential_density,
    potential_density_prime,
    potential_density_quotient,
    validate,
)


class Classification(BaseModel):
    """Membership of u in A_{omega,+} and in A_0, with signed margins"""

    in_A_omega_plus: bool
    in_A0: bool
    margins: Dict[str, float]
    S_omega: float
    K: float


def classify_report(rep: FunctionalReport, m_omega: float, sigma_pow: float) -> Classification:
    d = rep.spec.d
    margins = {
        "m_omega - S_omega": m_omega - rep.S_omega,
        "K": rep.K,
        "threshold - H0": sigma_pow / d - rep.H0,
        "sigma_pow - kinetic": sigma_pow - rep.kinetic,
    }
    return Classification(
        in_A_omega_plus=margins["m_omega - S_omega"] > 0 and margins["K"] > 0,
        in_A0=margins["threshold - H0"] > 0 and margins["sigma_pow - kinetic"] > 0,
        margins=margins,
        S_omega=rep.S_omega,
        K=rep.K,
    )


def classify(
    spec: NonlinearitySpec,
    omega: float,
    u: RadialField,
    m_omega: float,
    sigma_pow: float,
) -> Classification:
    """A_{omega,+} = {S_omega < m_omega, K > 0}; A_0 = {H_0 < sigma^(d/2)/d, ||grad u||^2 < sigma^(d/2)}"""
    return classify_report(report(spec, omega, u), m_omega, sigma_pow)


class EvolutionConfig(BaseModel):
    fixed_point_tol: float = 1e-12  # relative change in the weighted L^2 norm
    stall_tol: float = 1e-9
    max_fixed_point_iterations: int = 60
    cfl_bound: float = 50.0
    drift_tol: float = 1e-8
    wavefront_factor: float = 3.0
    store_states: bool = True


class EvolutionTrace(BaseModel):
    """Sampled diagnostics of one trajectory; immutable once returned"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    omega: float
    dt: float
    times: List[float]
    mass_drift: List[float]
    H_drift: List[float]
    S_drift: List[float]
    K_t: List[float]
    S_t: List[float]
    potF_t: List[float]
    crit_t: List[float]
    w_p1_accum: List[float]
    w_accum: List[float]
    grad_max: List[float]
    residual_t: List[float]
    phase_origin: List[float]
    momentum: List[List[float]]
    h1_sq: List[float]
    valid_until: float
    exploratory: bool
    fixed_point_iterations: int
    states: List[RadialField] = Field(default_factory=list)

    @property
    def max_mass_drift(self) -> float:
        return max(self.mass_drift)

    @property
    def max_H_drift(self) -> float:
        return max(self.H_drift)


def _nonlinear_term(spec: NonlinearitySpec, values: np.ndarray, critical: bool) -> np.ndarray:
    """f(psi) + |psi|^(2^*-2) psi = 2 Phi'(|psi|^2) psi"""
    return 2.0 * potential_density_prime(spec, np.abs(values) ** 2, critical) * values


def discrete_hamiltonian(spec: NonlinearitySpec, u: RadialField, critical: bool = True) -> float:
    """1/2 dirichlet_form(u) - sum w Phi(|u|^2), the energy the scheme conserves"""
    potential = np.sum(u.grid.w * potential_density(spec, np.abs(u.values) ** 2, critical))
    return 0.5 * dirichlet_form(u) - float(potential)


class _CrankNicolson:
    """Interior-node solver; the r_max node is pinned to zero"""

    def __init__(self, spec: NonlinearitySpec, grid: RadialGrid, dt: float, critical: bool, cfg: EvolutionConfig):
        self.spec = spec
        self.grid = grid
        self.dt = dt
        self.critical = critical
        self.cfg = cfg
        m = grid.n - 1
        self.m = m
        self.w = grid.w[:m]
        faces = grid.faces
        self.diag_A = -faces[:m].copy()
        self.diag_A[1:] -= faces[: m - 1]
        self.off_half = 0.5 * faces[: m - 1]

    def step(self, psi: np.ndarray) -> Tuple[np.ndarray, int]:
        """Advance the interior values by dt; returns (new values, iterations)"""
        m, w, dt = self.m, self.w, self.dt
        full = np.zeros(self.grid.n, dtype=complex)
        full[:m] = psi
        half_A_psi = 0.5 * apply_flux_laplacian(self.grid, full)[:m]
        s_old = np.abs(psi) ** 2

        bands = np.zeros((3, m), dtype=complex)
        bands[0, 1:] = self.off_half
        bands[2, :-1] = self.off_half
        guess = psi
        previous_change = math.inf
        change = math.inf
        for iteration in range(1, self.cfg.max_fixed_point_iterations + 1):
            N = potential_density_quotient(self.spec, np.abs(guess) ** 2, s_old, self.critical)
            bands[1] = 1j * w / dt + 0.5 * self.diag_A + w * N
            rhs = 1j * w / dt * psi - half_A_psi - w * N * psi
            updated = linalg.solve_banded((1, 1), bands, rhs, check_finite=False)
            if not np.all(np.isfinite(updated)):
                raise FixedPointDiverged(f"Non-finite iterate after {iteration} fixed-point iterations")
            change = _relative_change(w, updated, guess)
            guess = updated
            if change <= self.cfg.fixed_point_tol:
                return guess, iteration
            # Roundoff floor: the change stopped shrinking while already tiny
            if change <= self.cfg.stall_tol and change > 0.5 * previous_change:
                return guess, iteration
            previous_change = change
        raise FixedPointDiverged(
            f"Fixed-point iteration did not reach {self.cfg.fixed_point_tol:g} in "
            f"{self.cfg.max_fixed_point_iterations} iterations (last relative change "
            f"{change:.3g}; likely blow-up)"
        )


def _relative_change(w: np.ndarray, new: np.ndarray, old: np.ndarray) -> float:
    """Weighted L^2 norm of new - old relative to that of new"""
    scale = math.sqrt(float(np.sum(w * np.abs(new) ** 2)))
    if scale == 0:
        return 0.0
    return math.sqrt(float(np.sum(w * np.abs(new - old) ** 2))) / scale


def _residual_norm(
    spec: NonlinearitySpec,
    prev: np.ndarray,
    cur: RadialField,
    nxt: np.ndarray,
    dt: float,
    critical: bool,
) -> float:
    e = 1j * (nxt - prev) / (2.0 * dt) + laplacian(cur) + _nonlinear_term(spec, cur.values, critical)
    e[-1] = 0.0
    return float(math.sqrt(np.sum(cur.grid.w * np.abs(e) ** 2)))


def residual(
    spec: NonlinearitySpec,
    states: List[RadialField],
    dt: float,
    critical: bool = True,
) -> List[float]:
    """||i d_t u + Delta u + f(u) + |u|^(2^*-2) u||_{L^2} at each interior state.

    ``states`` must be consecutive and dt apart; the result has one entry per
    state except the first and last.
    """
    if len(states) < 3:
        raise InsufficientStates(f"Residual needs at least three states, got {len(states)}")
    return [
        _residual_norm(spec, states[k - 1].values, states[k], states[k + 1].values, dt, critical)
        for k in range(1, len(states) - 1)
    ]


def free_gaussian(grid: RadialGrid, t: float) -> RadialField:
    """Free Schrodinger evolution of exp(-r^2/2): (1+2it)^(-d/2) exp(-r^2 / (2(1+2it)))"""
    z = 1.0 + 2j * t
    return sample(grid, lambda r: z ** (-grid.d / 2.0) * np.exp(-(r**2) / (2.0 * z)))


def validity_window(u: RadialField, factor: float = 3.0) -> float:
    """Time for a wavefront leaving the mass radius at speed 2k to reach r_max/2"""
    mass = lp_norm_pow(u, 2.0)
    if mass == 0:
        return math.inf
    k = factor * math.sqrt(dirichlet_form(u) / mass)
    distance = 0.5 * u.grid.r_max - mass_radius(u)
    if distance <= 0:
        return 0.0
    return math.inf if k == 0 else distance / (2.0 * k)


def evolve(
    spec: NonlinearitySpec,
    omega: float,
    psi0: RadialField,
    dt: float,
    t_end: float,
    sample_every: int = 1,
    critical: bool = True,
    evo_cfg: Optional[EvolutionConfig] = None,
) -> EvolutionTrace:
    """Crank-Nicolson evolution of i psi_t + Delta psi + f(psi) + |psi|^(2^*-2) psi = 0.

    The nonlinearity enters through the difference quotient of Phi, so the
    discrete mass and discrete Hamiltonian are conserved up to the fixed-point
    tolerance. ``critical=False`` drops the |psi|^(2^*-2) psi term.

    Raises:
        FixedPointDiverged: the implicit step did not converge
    """
    validate(spec)
    if critical:
        spec.require_terms()
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if sample_every < 1:
        raise ValueError(f"sample_every must be at least 1, got {sample_every}")
    cfg = evo_cfg or EvolutionConfig()
    grid = psi0.grid
    d = grid.d
    solver = _CrankNicolson(spec, grid, dt, critical, cfg)
    n_steps = int(round(t_end / dt))

    values = psi0.values.copy()
    values[-1] = 0.0
    state = psi0.with_values(values)

    exps = space_exponents(d, Fraction(spec.p1) if spec.terms else 1 + Fraction(4, d - 2))
    q_crit = float(exps["W"].q)
    q_p1 = float(exps["W_p"].q) if spec.terms else None

    mass0 = lp_norm_pow(state, 2.0)
    H_disc0 = discrete_hamiltonian(spec, state, critical)
    rep0 = report(spec, omega, state)
    S0 = rep0.S_omega
    exploratory = rep0.K < 0
    if exploratory:
        cprint("Initial state has K < 0: trace is exploratory", "yellow")
    valid_until = validity_window(state, cfg.wavefront_factor)
    if t_end > valid_until:
        cprint(
            f"Warning: t_end={t_end:g} passes the validity window t={valid_until:.4g}",
            "yellow",
        )

    columns: Dict[str, list] = {
        name: []
        for name in (
            "times", "mass_drift", "H_drift", "S_drift", "K_t", "S_t", "potF_t",
            "crit_t", "w_p1_accum", "w_accum", "grad_max", "residual_t",
            "phase_origin", "momentum", "h1_sq",
        )
    }
    states: List[RadialField] = []
    w_p1 = w_crit = 0.0
    grad_max = 0.0
    worst_iterations = 0
    cfl_warned = False
    pending: Optional[int] = None
    prev_values: Optional[np.ndarray] = None

    def norms(u: RadialField) -> Tuple[float, float]:
        return (lp_norm_pow(u, q_p1) if q_p1 else 0.0, lp_norm_pow(u, q_crit))

    last_norms = norms(state)

    def record(step: int, u: RadialField) -> None:
        rep = report(spec, omega, u)
        mass = lp_norm_pow(u, 2.0)
        H_disc = discrete_hamiltonian(spec, u, critical)
        columns["times"].append(step * dt)
        columns["mass_drift"].append(abs(mass - mass0) / max(mass0, 1e-300))
        columns["H_drift"].append(abs(H_disc - H_disc0) / max(abs(H_disc0), 1e-12))
        columns["S_drift"].append(abs(rep.S_omega - S0) / max(abs(S0), 1e-12))
        columns["K_t"].append(rep.K)
        columns["S_t"].append(rep.S_omega)
        columns["potF_t"].append(rep.potF)
        columns["crit_t"].append(rep.pot_crit)
        columns["w_p1_accum"].append(w_p1)
        columns["w_accum"].append(w_crit)
        columns["grad_max"].append(grad_max)
        columns["residual_t"].append(math.nan)
        columns["phase_origin"].append(float(np.angle(u.values[0])))
        columns["momentum"].append([0.0] * d)
        columns["h1_sq"].append(rep.mass + rep.kinetic)
        if cfg.store_states:
            states.append(u)
        if (columns["mass_drift"][-1] > cfg.drift_tol or columns["H_drift"][-1] > cfg.drift_tol) and step:
            cprint(
                f"Warning: drift above {cfg.drift_tol:g} at t={step * dt:.4g} "
                f"(mass {columns['mass_drift'][-1]:.3g}, H {columns['H_drift'][-1]:.3g})",
                "yellow",
            )

    grad_max = math.sqrt(dirichlet_form(state))
    record(0, state)
    pending, prev_values = 0, None

    for step in range(1, n_steps + 1):
        interior, iterations = solver.step(state.values[:-1])
        worst_iterations = max(worst_iterations, iterations)
        new_values = np.zeros(grid.n, dtype=complex)
        new_values[:-1] = interior
        new_state = state.with_values(new_values)

        if pending is not None and prev_values is not None:
            columns["residual_t"][pending] = _residual_norm(spec, prev_values, state, new_values, dt, critical)
        pending = None

        new_norms = norms(new_state)
        w_p1 += 0.5 * dt * (last_norms[0] + new_norms[0])
        w_crit += 0.5 * dt * (last_norms[1] + new_norms[1])
        last_norms = new_norms

        prev_values = state.values
        state = new_state
        if step % sample_every == 0 or step == n_steps:
            grad_max = max(grad_max, math.sqrt(dirichlet_form(state)))
            if grad_max * dt > cfg.cfl_bound and not cfl_warned:
                cprint(
                    f"Warning: ||grad psi|| * dt = {grad_max * dt:.3g} exceeds {cfg.cfl_bound:g}",
                    "yellow",
                )
                cfl_warned = True
            record(step, state)
            pending = len(columns["times"]) - 1

    phases = np.unwrap(np.asarray(columns["phase_origin"])) if columns["times"] else np.array([])
    columns["phase_origin"] = [float(x) for x in phases]

    return EvolutionTrace(
        omega=omega,
        dt=dt,
        valid_until=valid_until,
        exploratory=exploratory,
        fixed_point_iterations=worst_iterations,
        states=states,
        **columns,
    )


def modulus_drift(trace: EvolutionTrace, reference: RadialField) -> float:
    """max over samples of max | |psi(t)| - |reference| | / max |reference|"""
    ref = np.abs(reference.values)
    return max(float(np.max(np.abs(np.abs(u.values) - ref))) for u in trace.states) / float(ref.max())


def phase_rate(trace: EvolutionTrace) -> float:
    """Least-squares slope of the unwrapped phase of psi(t, 0)"""
    slope, _ = np.polyfit(trace.times, trace.phase_origin, 1)
    return float(slope)


class InvarianceReport(BaseModel):
    all_in_set: bool
    inf_K: float
    first_offender: Optional[int] = None
    h1_constant: float
    h1_bound: float
    sup_h1_sq: float
    bounded: bool


def invariance_audit(
    spec: NonlinearitySpec,
    omega: float,
    trace: EvolutionTrace,
    m_omega: float,
    raise_on_violation: bool = True,
) -> InvarianceReport:
    """Check that every sample stays in A_{omega,+} and that the H^1 norm
    stays below C (m_omega + m_omega / omega), C = 2 / (1 - C_0').

    Raises:
        ValueError: the initial sample is not in A_{omega,+}
        InvarianceViolated: a later sample leaves the set
    """
    if not (trace.K_t[0] > 0 and trace.S_t[0] < m_omega):
        raise ValueError("Initial state is not in A_{omega,+}")
    offender = None
    for index, (K, S) in enumerate(zip(trace.K_t, trace.S_t)):
        if not (K > 0 and S < m_omega):
            offender = index
            break
    if offender is not None and raise_on_violation:
        raise InvarianceViolated(
            f"Sample {offender} at t={trace.times[offender]:.4g} left A_omega,+ "
            f"(K={trace.K_t[offender]:.3g}, S={trace.S_t[offender]:.6g})",
            offender,
            trace.times[offender],
        )

    constant = 2.0 / (1.0 - kinetic_comparison_constant(spec))
    bound = constant * (m_omega + m_omega / omega)
    sup_h1 = max(trace.h1_sq)
    return InvarianceReport(
        all_in_set=offender is None,
        inf_K=min(trace.K_t),
        first_offender=offender,
        h1_constant=constant,
        h1_bound=bound,
        sup_h1_sq=sup_h1,
        bounded=sup_h1 <= bound,
    )


class ScatteringProxy(BaseModel):
    """Decay of the potential terms and saturation of the spacetime accumulators"""

    samples_in_window: int
    potF_decaying: bool
    crit_decaying: bool
    w_p1_growth: float
    w_growth: float


def scattering_proxy(trace: EvolutionTrace, tol: float = 1e-12) -> ScatteringProxy:
    """Within the validity window: are potF and the critical norm non-increasing
    over its second half, and how much did the accumulators grow over its last
    quarter (relative)."""
    times = np.asarray(trace.times)
    inside = np.flatnonzero(times <= trace.valid_until)
    count = int(inside.size)

    def decaying(series: List[float]) -> bool:
        values = np.asarray(series)[inside][count // 2 :]
        return bool(values.size < 2 or np.all(np.diff(values) <= tol * max(values.max(), 1e-300)))

    def growth(series: List[float]) -> float:
        if count < 4:
            return math.nan
        values = np.asarray(series)[inside]
        start = values[(3 * count) // 4]
        end = values[-1]
        return float((end - start) / end) if end > 0 else 0.0

    return ScatteringProxy(
        samples_in_window=count,
        potF_decaying=decaying(trace.potF_t),
        crit_decaying=decaying(trace.crit_t),
        w_p1_growth=growth(trace.w_p1_accum),
        w_growth=growth(trace.w_accum),
    )
