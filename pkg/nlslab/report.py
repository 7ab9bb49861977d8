"""CSV emission for every record the CLI produces.

Bodies are deterministic: floats use repr-precision formatting and nothing
time-dependent is written.
"""

import csv
import math
from fractions import Fraction
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple

from nlslab.errors import IOFailure
from nlslab.evolution import Classification, EvolutionTrace, InvarianceReport
from nlslab.exponents import INF, ExoticExponents, LowDimensionNorms, Pair, is_L2_admissible
from nlslab.functionals import FunctionalReport, SigmaEstimate
from nlslab.nonlinearity import ValidationReport
from nlslab.variational import GroundStateResult, LambdaScan, NehariBounds


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, float):
        if value == INF:
            return "inf"
        if math.isnan(value):
            return "nan"
        return f"{value:.17g}"
    return str(value)


def write_csv(filepath: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    try:
        with open(filepath, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_value(value) for value in row])
    except OSError as e:
        raise IOFailure(f"Could not write {filepath}: {e}") from e
    return filepath


Table = Tuple[List[str], List[list]]


def validation_table(report: ValidationReport) -> Table:
    header = ["d", "valid", "diagnostic", "eps0", "p1", "p2", "growth_branch"]
    return header, [[report.d, report.valid, report.diagnostic, report.eps0, report.p1, report.p2, report.growth_branch]]


FUNCTIONAL_COLUMNS = ["omega", "mass", "kinetic", "potF", "pot_crit", "H", "H0", "S_omega", "I_omega", "K"]


def functionals_table(report: FunctionalReport) -> Table:
    """One row; per_term_k is ||u||^(p_k+1) in L^(p_k+1) and P_i the momentum components"""
    header = [
        *FUNCTIONAL_COLUMNS,
        *(f"per_term_{k + 1}" for k in range(len(report.per_term))),
        *(f"P_{i + 1}" for i in range(len(report.P))),
    ]
    row = [*(getattr(report, name) for name in FUNCTIONAL_COLUMNS), *report.per_term, *report.P]
    return header, [row]


def scan_table(scan: LambdaScan) -> Table:
    rows = [list(row) for row in zip(scan.lambdas, scan.K_vals, scan.S_vals, scan.I_vals)]
    return ["lambda", "K", "S", "I"], rows


def certificate_table(certificates: dict) -> Table:
    return ["certificate", "passed"], [[name, passed] for name, passed in certificates.items()]


GROUND_STATE_COLUMNS = ["omega", "a0", "m_omega", "sigma_pow", "sigma_pow_d2_over_d", "gap", "K_residual"]


def ground_state_table(results: Sequence[GroundStateResult]) -> Table:
    rows = [[r.omega, r.a0, r.m_omega, r.sigma_pow, r.sigma_threshold, r.gap, r.K_residual] for r in results]
    return GROUND_STATE_COLUMNS, rows


def bounds_table(entries: Sequence[Tuple[float, str, NehariBounds]]) -> Table:
    header = [
        "omega", "family", "count", "minimum", "m_omega",
        "above_m_omega", "below_threshold", "relative_excess", "nehari_identity_error",
    ]
    rows = [
        [omega, family, len(b.values), b.minimum, b.m_omega, b.above_m_omega, b.below_threshold, b.relative_excess, b.nehari_identity_error]
        for omega, family, b in entries
    ]
    return header, rows


def sigma_table(estimate: SigmaEstimate) -> Table:
    header = ["d", "grad_norm_sq", "crit_norm_pow", "mismatch", "sigma", "closed_form", "pde_residual"]
    return header, [[
        estimate.d,
        estimate.grad_norm_sq,
        estimate.crit_norm_pow,
        estimate.mismatch,
        estimate.sigma,
        estimate.closed_form,
        estimate.pde_residual,
    ]]


TRACE_COLUMNS = [
    "t", "mass_drift", "H_drift", "K", "potF", "crit_norm",
    "w_p1_accum", "w_accum", "grad_max", "residual",
]


def trace_table(trace: EvolutionTrace) -> Table:
    rows = [
        list(row)
        for row in zip(
            trace.times,
            trace.mass_drift,
            trace.H_drift,
            trace.K_t,
            trace.potF_t,
            trace.crit_t,
            trace.w_p1_accum,
            trace.w_accum,
            trace.grad_max,
            trace.residual_t,
        )
    ]
    return TRACE_COLUMNS, rows


def classification_table(classification: Classification) -> Table:
    margins = classification.margins
    header = [
        "in_A_omega_plus", "in_A0", "m_omega_minus_S", "K",
        "threshold_minus_H0", "sigma_pow_minus_kinetic",
    ]
    return header, [[
        classification.in_A_omega_plus,
        classification.in_A0,
        margins["m_omega - S_omega"],
        margins["K"],
        margins["threshold - H0"],
        margins["sigma_pow - kinetic"],
    ]]


def invariance_table(audit: InvarianceReport) -> Table:
    header = ["all_in_set", "inf_K", "first_offender", "h1_constant", "h1_bound", "sup_h1_sq", "bounded"]
    return header, [[getattr(audit, name) for name in header]]


def exponents_table(exps: ExoticExponents) -> Table:
    header = [
        "d", "p1", "s_p1", "alpha", "s_alpha", "rho", "gamma", "rho_star", "gamma_star",
        *exps.certificates.keys(), "gamma_above_diagonal",
    ]
    row = [
        exps.d, exps.p1, exps.s_p1, exps.alpha, exps.s_alpha,
        exps.rho, exps.gamma, exps.rho_star, exps.gamma_star,
        *exps.certificates.values(), exps.gamma_above_diagonal,
    ]
    return header, [row]


def low_dimension_table(norms: LowDimensionNorms) -> Table:
    return ["d", "norm", "q", "r"], [
        [norms.d, "ES", norms.es.q, norms.es.r],
        [norms.d, "ES_star", norms.es_star.q, norms.es_star.r],
    ]


def pairs_table(d: int, pairs: Sequence[Tuple[str, Pair]]) -> Table:
    rows = [[name, pair.q, pair.r, is_L2_admissible(d, pair)] for name, pair in pairs]
    return ["name", "q", "r", "L2_admissible"], rows
