"""
Command-line driver.

    hydrostatic RELATION      half-space profile, balance check, CSV
    cull                      verdict matrix of candidates against observations
    check-isotropy RELATION   equivariance under random rotations
    solve-stress RELATION     stress root at a given density and gradient

Exit codes: 0 success, 2 input, configuration or solver failure, 3 a violated
property (isotropy).
"""
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import List, Optional, Tuple

import orjson
import typer
from loguru import logger
from tabulate import tabulate

from .config import RunConfig, default_config, load_config
from .constitutive import ConstitutiveRelation, Family, isotropy_check
from .culling import cull as run_cull
from .exceptions import (
    ConfigError,
    ConstitutiveToolkitError,
    DegenerateRelationError,
    ExprDomainError,
    NonInvertibleRelationError,
)
from .file_processor import FileProcessor
from .hydrostatics import (
    HydrostaticSolution,
    consistency_on_profile,
    ideal_gas_profile,
    phi_from_density,
    solve_coupled_profile,
    verify_balances,
)
from .solver import solve_spherical, solve_stress
from .tensor3 import COMPONENTS, SymTensor3, Vec3

EXIT_OK = 0
EXIT_FAILURE = 2
EXIT_VIOLATION = 3
ISOTROPY_TOL = 1e-8

app = typer.Typer(
    add_completion=False,
    no_args_is_help=True,
    help="Implicit constitutive relations: hydrostatics, isotropy checks, stress solves and culling.",
)

_LABELS = {
    DegenerateRelationError: "degenerate relation",
    NonInvertibleRelationError: "non-invertible relation",
    ConfigError: "configuration error",
}


def configure_logging(verbose: bool):
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if verbose else "INFO", format="{time:HH:mm:ss} | {level: <7} | {message}")


def fail(message: str, code: int = EXIT_FAILURE):
    typer.echo(f"error: {message}", err=True)
    raise typer.Exit(code)


@contextmanager
def exit_on_error():
    """Map library errors to exit code 2 with a one-line diagnostic."""
    try:
        yield
    except (ConstitutiveToolkitError, ValueError) as exc:
        label = next((text for cls, text in _LABELS.items() if isinstance(exc, cls)), None)
        fail(f"{label}: {exc}" if label else str(exc))


def _config(ctx: typer.Context) -> RunConfig:
    return ctx.obj


@app.callback()
def main_callback(
    ctx: typer.Context,
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="JSON run configuration."),
    out_dir: Optional[str] = typer.Option(None, "--out-dir", help="Directory for CSV/JSON artifacts."),
    seed: Optional[int] = typer.Option(None, "--seed", help="Seed for every random draw."),
    tol: Optional[float] = typer.Option(None, "--tol", help="Culling consistency tolerance."),
    max_iter: Optional[int] = typer.Option(None, "--max-iter", help="Newton iteration limit."),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging."),
):
    configure_logging(verbose)
    with exit_on_error():
        cfg = load_config(config) if config is not None else default_config()
        ctx.obj = cfg.with_overrides(out_dir=out_dir, seed=seed, tol=tol, max_iter=max_iter)


# --- hydrostatic -----------------------------------------------------------------


def _hydrostatic_solution(cfg: RunConfig, rel: ConstitutiveRelation) -> Tuple[HydrostaticSolution, str]:
    grid = cfg.grid.build()
    phi0 = cfg.surface.surface_phi
    if cfg.density is not None:
        return phi_from_density(cfg.density.build(), phi0, grid), f"prescribed {cfg.density.law} density"
    if rel.family is Family.IDEAL_GAS:
        c = rel.ideal_gas_constant
        return ideal_gas_profile(phi0 / c, c, grid), "closed-form ideal gas"
    return solve_coupled_profile(rel, grid, phi0, cfg.settings()), "coupled solve"


@app.command()
def hydrostatic(
    ctx: typer.Context,
    relation: str = typer.Argument(..., help="Relation name from the configuration."),
    fd_step: Optional[float] = typer.Option(None, "--fd-step", help="Finite-difference step for the balance check."),
):
    """Solve the half-space problem and write y,rho,phi,h_residual as CSV."""
    cfg = _config(ctx)
    with exit_on_error():
        rel = cfg.relation(relation)
        solution, method = _hydrostatic_solution(cfg, rel)
        try:
            consistency = consistency_on_profile(rel, solution)
            solution.h_residual = consistency.h
        except ExprDomainError as exc:
            logger.warning("{}: residual not evaluable along the profile: {}", rel.name, exc)
            consistency = None
        balance = verify_balances(solution, fd_step)
        path = FileProcessor(cfg.out_dir).write_csv(solution.to_frame(), f"{relation}_profile")

    rows = [
        ["method", method],
        ["phi(0)", f"{solution.phi_surface:.17g}"],
        ["mass residual", f"{balance.mass_residual:.3e}"],
        ["momentum residual", f"{balance.momentum_residual:.3e}"],
        ["fd step", f"{balance.fd_step:.6g}"],
    ]
    if consistency is not None:
        rows.append(["max |h|", f"{consistency.max_abs:.3e}"])
        rows.append(["consistent", "yes" if consistency.is_consistent(cfg.cull.tol) else "no"])
    typer.echo(tabulate(rows, tablefmt="plain"))
    typer.echo(f"profile written to {path}")


# --- cull ------------------------------------------------------------------------


@app.command()
def cull(
    ctx: typer.Context,
    report: str = typer.Option("cull_report", "--report", help="Report file name (without .json)."),
):
    """Classify every candidate against every observation and report survivors."""
    cfg = _config(ctx)
    with exit_on_error():
        candidates = cfg.candidates()
        if not candidates:
            fail("no candidates")
        observations = cfg.observations_built()
        if not observations:
            fail("no observations")
        result = run_cull(candidates, observations, cfg.cull.tol, cfg.settings())
        path = FileProcessor(cfg.out_dir).write_json(result.to_dict(), report)

    typer.echo(result.render_table())
    survivors = result.survivors
    typer.echo(f"survivors ({len(survivors)}): {', '.join(survivors) if survivors else 'none'}")
    typer.echo(f"report written to {path}")


# --- check-isotropy ----------------------------------------------------------------


@app.command("check-isotropy")
def check_isotropy(
    ctx: typer.Context,
    relation: str = typer.Argument(...),
    samples: int = typer.Option(1000, "--samples", help="Number of random (rho, g, T, Q) draws."),
):
    """Measure the equivariance error under random orthogonal transformations."""
    cfg = _config(ctx)
    with exit_on_error():
        rel = cfg.relation(relation)
        error = isotropy_check(rel, samples, cfg.seed)

    typer.echo(f"max equivariance error: {error:.3e} ({samples} samples, seed {cfg.seed})")
    if error > ISOTROPY_TOL:
        typer.echo(f"isotropy violated: error exceeds {ISOTROPY_TOL:g}")
        raise typer.Exit(EXIT_VIOLATION)


# --- solve-stress --------------------------------------------------------------------


@app.command("solve-stress")
def solve_stress_cmd(
    ctx: typer.Context,
    relation: str = typer.Argument(...),
    rho: float = typer.Option(..., "--rho", help="Density."),
    grad: Tuple[float, float, float] = typer.Option((0.0, 0.0, 0.0), "--grad", help="Density gradient."),
    phi0: Optional[float] = typer.Option(None, "--phi0", help="Initial guess T0 = -phi0 I."),
    as_json: bool = typer.Option(False, "--json", help="Print the reports as JSON."),
):
    """Solve the relation for the stress at fixed density and gradient."""
    cfg = _config(ctx)
    with exit_on_error():
        if not rho > 0:
            fail(f"density must be positive, got {rho!r}")
        rel = cfg.relation(relation)
        settings = cfg.settings()
        if phi0 is None:
            pressure = rel.euler_pressure(rho)
            phi0 = pressure if pressure is not None else 1.0
        report = solve_stress(rel, rho, Vec3(*grad), SymTensor3.identity(-phi0), settings)
        branches: Optional[List] = None
        degenerate = False
        if rel.family.is_euler_type:
            try:
                branches = solve_spherical(rel, rho, phi0, settings)
            except DegenerateRelationError:
                degenerate = True

    if as_json:
        payload = {
            "relation": rel.name,
            "tensor": report.to_dict(),
            "branches": [b.to_dict() for b in branches] if branches is not None else None,
            "degenerate": degenerate,
        }
        typer.echo(orjson.dumps(payload, option=orjson.OPT_INDENT_2).decode())
    else:
        rows = [[name, f"{value:.17g}"] for name, value in zip(COMPONENTS, report.solution.to_tuple())]
        typer.echo(tabulate(rows, headers=["T", "value"], tablefmt="plain"))
        typer.echo(f"iterations: {report.iterations}  residual: {report.residual_norm:.3e}")
        if degenerate:
            typer.echo("spherical branches: undetermined (relation is satisfied by every spherical stress)")
        elif branches is not None:
            for b in branches:
                mark = " (physical)" if b.physical else ""
                typer.echo(f"{b.branch}: phi = {b.phi:.17g}{mark}")
    if not report.converged:
        fail(f"stress solve did not converge: {report.message}")
