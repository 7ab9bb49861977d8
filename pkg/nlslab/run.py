import argparse
import asyncio
import sys
import time
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from termcolor import cprint  # type: ignore

from nlslab.config import RunConfig
from nlslab.errors import NonlinearityError, SolverError
from nlslab.evolution import (
    classify_report,
    evolve,
    invariance_audit,
    modulus_drift,
    phase_rate,
    scattering_proxy,
)
from nlslab.exponents import LowDimensionNorms, default_p1, exotic, named_pairs
from nlslab.field import RadialField, RadialGrid, gaussian, interpolate, save_csv
from nlslab.functionals import l2_scale, report, sigma_estimate
from nlslab.manifest import RunManifest, write_run_log
from nlslab.nonlinearity import validate
from nlslab.report import (
    Table,
    bounds_table,
    certificate_table,
    classification_table,
    exponents_table,
    functionals_table,
    ground_state_table,
    invariance_table,
    low_dimension_table,
    pairs_table,
    scan_table,
    sigma_table,
    trace_table,
    validation_table,
    write_csv,
)
from nlslab.variational import (
    GroundStateResult,
    bubble_family,
    gaussian_family,
    lambda_star_of,
    m_omega_upper_bounds,
    m_omega_upper_bounds_of_reports,
    rescaled_family,
    scan_report,
    shoot_ground_state,
    sweep_ground_states,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INVALID = 2
EXIT_SOLVER = 3

Outcome = Tuple[Dict[str, Table], Dict[str, str]]


def create_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--preset", type=str, help="Name of a shipped config (e.g. d5_p2)")
    common.add_argument("--config", type=str, help="Path to a JSON run config")
    common.add_argument("--out-dir", type=str, help="Directory for CSV, manifest and log")
    common.add_argument("--seed", type=int, help="Seed for random trial families")
    common.add_argument("--d", type=int, help="Spatial dimension")
    common.add_argument("--omega", type=float, help="Frequency omega")

    field_args = argparse.ArgumentParser(add_help=False)
    field_args.add_argument(
        "--psi0",
        choices=["gaussian", "q", "scaled-q"],
        default="gaussian",
        help="Field to analyse or evolve",
    )
    field_args.add_argument("--amplitude", type=float, default=1.0, help="Gaussian amplitude")
    field_args.add_argument("--scale", type=float, default=0.8, help="lambda for scaled-q")

    parser = argparse.ArgumentParser(description="Numerical lab for the energy-critical NLS with subcritical perturbations")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("validate-nl", parents=[common], help="Validate the perturbation")
    sub.add_parser("functionals", parents=[common, field_args], help="Report every functional of a field")
    sub.add_parser("scan-lambda", parents=[common, field_args], help="Scan the L^2-scaling orbit of a field")
    sub.add_parser("ground-state", parents=[common], help="Shoot for the ground state Q")
    sub.add_parser("bound-sweep", parents=[common], help="Ground states and m_omega upper bounds over omegas")
    sub.add_parser("sigma", parents=[common], help="Sharp Sobolev constant from the bubble")
    evolve_parser = sub.add_parser("evolve", parents=[common, field_args], help="Evolve a radial solution")
    evolve_parser.add_argument("--dt", type=float, help="Time step")
    evolve_parser.add_argument("--t-end", type=float, help="Final time")
    evolve_parser.add_argument("--sample-every", type=int, help="Steps between samples")
    evolve_parser.add_argument("--out", type=str, help="Trace CSV path")
    sub.add_parser("classify", parents=[common, field_args], help="A_omega,+ and A_0 membership of a field")
    exponents_parser = sub.add_parser("exponents", parents=[common], help="Exotic Strichartz exponents")
    exponents_parser.add_argument("--p1", type=str, help="Smallest exponent p1 (rational, e.g. 2 or 5/2)")
    pairs_parser = sub.add_parser("pairs", parents=[common], help="Named L^2-admissible pairs")
    pairs_parser.add_argument("--p1", type=str, help="Exponent for the V_p pair")
    return parser


def build_config(args: argparse.Namespace) -> RunConfig:
    """Preset, then config file, then flags"""
    if args.preset and args.config:
        raise ValueError("Use either --preset or --config, not both")
    if args.preset:
        config = RunConfig.from_preset(args.preset)
    elif args.config:
        if not Path(args.config).exists():
            raise FileNotFoundError(f"Config file not found: {args.config}")
        config = RunConfig.load(args.config)
    else:
        config = RunConfig()
    return config.with_overrides(
        dimension=args.d,
        omega=args.omega,
        seed=args.seed,
        out_dir=args.out_dir,
        **{
            "evolution.dt": getattr(args, "dt", None),
            "evolution.t_end": getattr(args, "t_end", None),
            "evolution.sample_every": getattr(args, "sample_every", None),
        },
    )


def _ground_state(config: RunConfig, omega: Optional[float] = None) -> GroundStateResult:
    omega = config.omega if omega is None else omega
    cprint(f"Shooting for Q at d={config.dimension}, omega={omega:g}...", "yellow")
    result = shoot_ground_state(config.spec(), omega, config.shooting, config.grid.build(config.dimension))
    cprint(
        f"a0={result.a0:.10g}, m_omega={result.m_omega:.10g}, threshold={result.sigma_threshold:.10g}, "
        f"|K(Q)|/||grad Q||^2={result.K_residual:.2e}",
        "green",
    )
    return result


def _initial_field(
    config: RunConfig, args: argparse.Namespace, grid: RadialGrid
) -> Tuple[RadialField, Optional[GroundStateResult]]:
    if args.psi0 == "gaussian":
        return gaussian(grid, args.amplitude), None
    ground = _ground_state(config)
    Q = ground.Q
    if not Q.grid.same_as(grid):
        Q = RadialField(grid=grid, values=interpolate(Q, grid.r))
    if args.psi0 == "scaled-q":
        Q = l2_scale(Q, args.scale)
    return Q, ground


def cmd_validate(config: RunConfig, args: argparse.Namespace, out_dir: Path) -> Outcome:
    result = validate(config.spec())
    for fact in result.facts:
        cprint(fact, "green")
    return {"validate-nl": validation_table(result)}, {"valid": str(result.valid)}


def cmd_functionals(config: RunConfig, args: argparse.Namespace, out_dir: Path) -> Outcome:
    u, _ = _initial_field(config, args, config.grid.build(config.dimension))
    rep = report(config.spec(), config.omega, u)
    return {"functionals": functionals_table(rep)}, {"S_omega": f"{rep.S_omega:.10g}", "K": f"{rep.K:.10g}"}


def cmd_scan(config: RunConfig, args: argparse.Namespace, out_dir: Path) -> Outcome:
    u, _ = _initial_field(config, args, config.grid.build(config.dimension))
    base = report(config.spec(), config.omega, u)
    lam = lambda_star_of(base)
    settings = config.scan
    scan = scan_report(base, (lam * settings.lambda_min_factor, lam * settings.lambda_max_factor), settings.n_points)
    for name, passed in scan.certificates.items():
        cprint(f"{name}: {'pass' if passed else 'FAIL'}", "green" if passed else "red")
    tables = {"scan-lambda": scan_table(scan), "scan-lambda_certificates": certificate_table(scan.certificates)}
    return tables, {"lambda_star": f"{scan.lambda_star:.12g}", "passed": str(scan.passed)}


def cmd_ground_state(config: RunConfig, args: argparse.Namespace, out_dir: Path) -> Outcome:
    result = _ground_state(config)
    save_csv(result.Q, out_dir / "ground-state_Q.csv")
    summary = {
        "m_omega": f"{result.m_omega:.12g}",
        "gap": f"{result.gap:.12g}",
        "pde_residual": f"{result.pde_residual:.3e}",
    }
    return {"ground-state": ground_state_table([result])}, summary


async def _bound_sweep(config: RunConfig) -> Tuple[List[GroundStateResult], list]:
    spec = config.spec()
    grid = config.grid.build(config.dimension)
    cprint(f"Shooting for {len(config.omegas)} frequencies concurrently...", "yellow")
    results = await sweep_ground_states(spec, config.omegas, config.shooting, grid)

    gaussians = gaussian_family(grid, config.seed, config.trials.count)
    bubbles = bubble_family(grid, config.trials.bubble_eps)
    entries = []
    for result in results:
        omega = result.omega
        cprint(f"Upper bounds for m_omega at omega={omega:g}...", "yellow")
        rescaled = m_omega_upper_bounds_of_reports(
            rescaled_family(result.report, config.trials.rescale_mus), result.m_omega, result.sigma_threshold
        )
        entries.append((omega, "rescaled", rescaled))
        entries.append((
            omega,
            "gaussian",
            await m_omega_upper_bounds(spec, omega, gaussians, result.m_omega, result.sigma_threshold),
        ))
        entries.append((
            omega,
            "bubble",
            await m_omega_upper_bounds(spec, omega, bubbles, result.m_omega, result.sigma_threshold),
        ))
    return results, entries


def cmd_bound_sweep(config: RunConfig, args: argparse.Namespace, out_dir: Path) -> Outcome:
    results, entries = asyncio.run(_bound_sweep(config))
    for omega, family, bounds in entries:
        cprint(f"omega={omega:g} {family}: min bound {bounds.minimum:.10g} (m_omega {bounds.m_omega:.10g})", "green")
    tables = {"bound-sweep": ground_state_table(results), "bound-sweep_bounds": bounds_table(entries)}
    return tables, {"omegas": ",".join(f"{r.omega:g}" for r in results)}


def cmd_sigma(config: RunConfig, args: argparse.Namespace, out_dir: Path) -> Outcome:
    estimate = sigma_estimate(config.grid.build(config.dimension))
    cprint(
        f"sigma={estimate.sigma:.10g} (closed form {estimate.closed_form:.10g}), mismatch={estimate.mismatch:.2e}",
        "green",
    )
    return {"sigma": sigma_table(estimate)}, {"sigma": f"{estimate.sigma:.12g}"}


def cmd_evolve(config: RunConfig, args: argparse.Namespace, out_dir: Path) -> Outcome:
    spec = config.spec()
    grid = config.evolution_grid.build(config.dimension)
    psi0, ground = _initial_field(config, args, grid)
    settings = config.evolution
    cprint(f"Evolving to t={settings.t_end:g} with dt={settings.dt:g}...", "yellow")
    trace = evolve(spec, config.omega, psi0, settings.dt, settings.t_end, settings.sample_every, evo_cfg=settings)

    proxy = scattering_proxy(trace)
    summary = {
        "max_mass_drift": f"{trace.max_mass_drift:.3e}",
        "max_H_drift": f"{trace.max_H_drift:.3e}",
        "valid_until": f"{trace.valid_until:.6g}",
        "exploratory": str(trace.exploratory),
        "potF_decaying": str(proxy.potF_decaying),
    }
    tables: Dict[str, Table] = {Path(args.out).stem if args.out else "evolve": trace_table(trace)}
    if ground is not None:
        if args.psi0 == "q":
            summary["modulus_drift"] = f"{modulus_drift(trace, psi0):.3e}"
            summary["phase_rate"] = f"{phase_rate(trace):.6g}"
        elif trace.K_t[0] > 0 and trace.S_t[0] < ground.m_omega:
            audit = invariance_audit(spec, config.omega, trace, ground.m_omega)
            summary["inf_K"] = f"{audit.inf_K:.6g}"
            tables["evolve_invariance"] = invariance_table(audit)
    for key, value in summary.items():
        cprint(f"{key}: {value}", "green")
    return tables, summary


def cmd_classify(config: RunConfig, args: argparse.Namespace, out_dir: Path) -> Outcome:
    grid = config.grid.build(config.dimension)
    u, ground = _initial_field(config, args, grid)
    if ground is None:
        ground = _ground_state(config)
    rep = report(config.spec(), config.omega, u)
    classification = classify_report(rep, ground.m_omega, ground.sigma_pow)
    cprint(f"in A_omega,+: {classification.in_A_omega_plus}, in A_0: {classification.in_A0}", "green")
    return {"classify": classification_table(classification)}, {
        "in_A_omega_plus": str(classification.in_A_omega_plus),
        "in_A0": str(classification.in_A0),
    }


def _p1(config: RunConfig, args: argparse.Namespace) -> str:
    """--p1, else p_1 of the configured terms when they are valid for --d, else default_p1(d)"""
    if args.p1:
        return args.p1
    try:
        p1 = config.spec().p1
    except NonlinearityError:
        p1 = None
    if p1 is None:
        return str(default_p1(config.dimension))
    return str(p1)


def cmd_exponents(config: RunConfig, args: argparse.Namespace, out_dir: Path) -> Outcome:
    exps = exotic(config.dimension, _p1(config, args), allow_low_dimension=True)
    if isinstance(exps, LowDimensionNorms):
        cprint(f"d={exps.d}: ordinary V/W norms replace the exotic ones", "yellow")
        return {"exponents": low_dimension_table(exps)}, {"kind": exps.kind}
    cprint(f"alpha={exps.alpha}, rho={exps.rho}, gamma={exps.gamma}", "green")
    if not exps.passed:
        failed = [name for name, ok in exps.certificates.items() if not ok]
        cprint(f"Failed certificates: {', '.join(failed)}", "red")
    return {"exponents": exponents_table(exps)}, {"passed": str(exps.passed)}


def cmd_pairs(config: RunConfig, args: argparse.Namespace, out_dir: Path) -> Outcome:
    p = _p1(config, args)
    pairs = named_pairs(config.dimension, p)
    return {"pairs": pairs_table(config.dimension, pairs)}, {"count": str(len(pairs))}


COMMANDS: Dict[str, Callable[[RunConfig, argparse.Namespace, Path], Outcome]] = {
    "validate-nl": cmd_validate,
    "functionals": cmd_functionals,
    "scan-lambda": cmd_scan,
    "ground-state": cmd_ground_state,
    "bound-sweep": cmd_bound_sweep,
    "sigma": cmd_sigma,
    "evolve": cmd_evolve,
    "classify": cmd_classify,
    "exponents": cmd_exponents,
    "pairs": cmd_pairs,
}


def exit_status(error: BaseException) -> int:
    if isinstance(error, SolverError):
        return EXIT_SOLVER
    if isinstance(error, ValueError):
        return EXIT_INVALID
    return EXIT_ERROR


def run(command: str, config: RunConfig, args: argparse.Namespace) -> int:
    """Run one subcommand, writing its CSV files, manifest and run log.

    Returns:
        The exit status: 0 ok, 2 invalid input, 3 solver failure, 1 anything else
    """
    out_dir = config.resolve_out_dir()
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(command=command, config=config.model_dump(), seed=config.seed)
    start_time = time.time()
    error: Optional[str] = None
    try:
        tables, summary = COMMANDS[command](config, args, out_dir)
        out_override = getattr(args, "out", None)
        for name, (header, rows) in tables.items():
            if out_override and Path(out_override).stem == name:
                path = Path(out_override)
            else:
                path = out_dir / f"{name}.csv"
            manifest.outputs.append(str(write_csv(path, header, rows)))
        manifest.summary = summary
        manifest.exit_status = EXIT_OK
    except Exception as e:
        manifest.exit_status = exit_status(e)
        error = f"{type(e).__name__}: {e}"
        cprint(f"Error: {error}", "red")
    finally:
        manifest.wall_time = time.time() - start_time
        manifest.log_path = str(write_run_log(manifest, out_dir / "logs", error))
        manifest.save(out_dir / f"{command}.manifest.json")
    return manifest.exit_status  # type: ignore[return-value]


def main():
    parser = create_parser()
    args = parser.parse_args()

    try:
        config = build_config(args)
        status = run(args.command, config, args)
        if status == EXIT_OK:
            cprint(f"\n{args.command} completed; outputs in {config.resolve_out_dir()}", "magenta", attrs=["bold"])
        sys.exit(status)

    except Exception as e:
        print(f"Error: {e}")
        sys.exit(exit_status(e))


if __name__ == "__main__":
    main()
