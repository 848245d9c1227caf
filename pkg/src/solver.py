"""
Root finding for implicit constitutive relations.

solve_stress      damped Newton on the six stress components at fixed (rho, grad rho)
solve_spherical   all real roots phi of h(phi) = a1 - a2 phi + a4 phi^2 for T = -phi I
invert_density    rho such that h(rho, phi) = 0 for a given phi
integrate_profile phi(y) = phi_top + int_y^y_top g rho(s) ds by composite Simpson
"""
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from scipy.integrate import simpson
from scipy.optimize import brentq

from .constitutive import ConstitutiveRelation
from .exceptions import (
    DegenerateRelationError,
    ExprDomainError,
    NonInvertibleRelationError,
    QuadratureError,
    RelationValidationError,
)
from .tensor3 import SymTensor3, Vec3

MAX_STEP_HALVINGS = 30
DEFAULT_SCAN_PROBES = 1024
# relative positions of the degeneracy probes inside the scan interval
DEGENERACY_PROBES = (1e-3, 1e-2, 0.05, 0.17, 0.33, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class NewtonSettings:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_iter: int = 100
    fd_step: float = 1e-7

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0 and self.fd_step > 0):
            raise ValueError("tolerances and fd_step must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    def tolerance(self, scale: float) -> float:
        return self.abs_tol + self.rel_tol * scale


@dataclass
class RootReport:
    solution: Union[SymTensor3, float]
    iterations: int
    residual_norm: float
    converged: bool
    branch: str = "branch-0"
    physical: bool = False
    history: List[float] = field(default_factory=list)
    message: str = ""

    @property
    def phi(self) -> float:
        """Scalar spherical value; for tensor solutions -tr T / 3."""
        if isinstance(self.solution, SymTensor3):
            return -self.solution.trace() / 3.0
        return float(self.solution)

    def to_dict(self) -> dict:
        if isinstance(self.solution, SymTensor3):
            solution = dict(zip(("xx", "yy", "zz", "xy", "xz", "yz"), self.solution.to_tuple()))
        else:
            solution = float(self.solution)
        return {
            "solution": solution,
            "iterations": self.iterations,
            "residual_norm": self.residual_norm,
            "converged": self.converged,
            "branch": self.branch,
            "physical": self.physical,
            "message": self.message,
        }


# --- tensor Newton ------------------------------------------------------------


def _jacobian(func: Callable[[np.ndarray], np.ndarray], x: np.ndarray, fd_step: float) -> np.ndarray:
    """Central finite-difference Jacobian with relative steps."""
    n = x.size
    jac = np.empty((n, n))
    for j in range(n):
        h = fd_step * max(1.0, abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        jac[:, j] = (func(xp) - func(xm)) / (2.0 * h)
    return jac


def solve_stress(
    rel: ConstitutiveRelation,
    rho: float,
    g: Vec3,
    t0: SymTensor3,
    settings: NewtonSettings = NewtonSettings(),
) -> RootReport:
    """Solve residual(rho, g, T) = 0 for T starting from t0."""
    if not rho > 0:
        raise ValueError(f"density must be positive, got {rho!r}")

    def residual(x: np.ndarray) -> np.ndarray:
        return rel.residual(rho, g, SymTensor3.from_vector(x)).to_vector()

    x = t0.to_vector()
    r = residual(x)
    norm = float(np.max(np.abs(r)))
    history = [norm]

    for iteration in range(settings.max_iter + 1):
        if norm <= settings.tolerance(float(np.max(np.abs(x)))):
            return RootReport(SymTensor3.from_vector(x), iteration, norm, True, history=history)
        if iteration == settings.max_iter:
            break

        try:
            jac = _jacobian(residual, x, settings.fd_step)
        except (ExprDomainError, ValueError) as exc:
            message = f"Jacobian not evaluable at iteration {iteration}: {exc}"
            logger.warning("solve_stress({}): {}", rel.name, message)
            return RootReport(SymTensor3.from_vector(x), iteration, norm, False, history=history, message=message)
        step = np.linalg.lstsq(jac, -r, rcond=None)[0]

        damping = 1.0
        for _ in range(MAX_STEP_HALVINGS + 1):
            candidate = x + damping * step
            try:
                r_new = residual(candidate)
                norm_new = float(np.max(np.abs(r_new)))
            except (ExprDomainError, ValueError):
                norm_new = np.inf
            if norm_new < norm:
                break
            damping *= 0.5
        else:
            message = f"no descent after {MAX_STEP_HALVINGS} step halvings (singular Jacobian?)"
            logger.warning("solve_stress({}): {}", rel.name, message)
            return RootReport(SymTensor3.from_vector(x), iteration, norm, False, history=history, message=message)

        x, r, norm = candidate, r_new, norm_new
        history.append(norm)

    message = f"no convergence in {settings.max_iter} iterations"
    logger.warning("solve_stress({}): {}", rel.name, message)
    return RootReport(SymTensor3.from_vector(x), settings.max_iter, norm, False, history=history, message=message)


# --- scalar spherical equation -------------------------------------------------


def _require_euler_type(rel: ConstitutiveRelation):
    if not rel.family.is_euler_type:
        raise RelationValidationError(f"{rel.name}: the spherical reduction needs an implicit Euler relation")


def _term_scale(rel: ConstitutiveRelation, rho: float, phi: float) -> float:
    a1, a2, a4 = rel.spherical_coefficients(rho, phi)
    return abs(a1) + abs(a2 * phi) + abs(a4 * phi * phi)


def _negligible(rel: ConstitutiveRelation, rho: float, phi: float, settings: NewtonSettings) -> bool:
    try:
        h = rel.spherical_residual(rho, phi)
        scale = _term_scale(rel, rho, phi)
    except (ExprDomainError, ValueError):
        return False
    return abs(h) <= settings.tolerance(scale)


def default_scan_interval(rel: ConstitutiveRelation, rho: float) -> Tuple[float, float]:
    """[0, 10 max(1, p)] with p the Euler pressure, or a1/a2 at phi = 0 as a stand-in."""
    estimate = rel.euler_pressure(rho)
    if estimate is None:
        try:
            a1, a2, _ = rel.spherical_coefficients(rho, 0.0)
            estimate = a1 / a2 if a2 != 0.0 else 1.0
        except ExprDomainError:
            estimate = 1.0
    return 0.0, 10.0 * max(1.0, abs(estimate))


def is_degenerate(
    rel: ConstitutiveRelation,
    rho: float,
    settings: NewtonSettings = NewtonSettings(),
    interval: Optional[Tuple[float, float]] = None,
) -> bool:
    """True if h(rho, phi) vanishes at all eight probe values of phi."""
    _require_euler_type(rel)
    _, hi = interval or default_scan_interval(rel, rho)
    return all(_negligible(rel, rho, hi * frac, settings) for frac in DEGENERACY_PROBES)


def determines_density(rel: ConstitutiveRelation, phi: float, settings: NewtonSettings = NewtonSettings()) -> bool:
    """False if h(rho, phi) vanishes for every probe density, so phi fixes no rho."""
    _require_euler_type(rel)
    probes = np.geomspace(1e-6, 1e6, 8)
    return not all(_negligible(rel, float(rho), phi, settings) for rho in probes)


def _scalar_newton(func: Callable[[float], float], x0: float, settings: NewtonSettings) -> Optional[Tuple[float, int]]:
    x = float(x0)
    for iteration in range(settings.max_iter):
        try:
            f = func(x)
            h = settings.fd_step * max(1.0, abs(x))
            slope = (func(x + h) - func(x - h)) / (2.0 * h)
        except (ExprDomainError, ValueError):
            return None
        if f == 0.0:
            return x, iteration
        if slope == 0.0 or not np.isfinite(slope):
            return None
        step = f / slope
        x -= step
        if not np.isfinite(x):
            return None
        if abs(step) <= 1e-15 * max(1.0, abs(x)):
            return x, iteration + 1
    return x, settings.max_iter


def _safe_eval(func: Callable[[float], float], x: float) -> Optional[float]:
    try:
        return func(x)
    except (ExprDomainError, ValueError):
        return None


def solve_spherical(
    rel: ConstitutiveRelation,
    rho: float,
    phi0: float,
    settings: NewtonSettings = NewtonSettings(),
    interval: Optional[Tuple[float, float]] = None,
    n_probes: int = DEFAULT_SCAN_PROBES,
) -> List[RootReport]:
    """All real roots of the spherical consistency equation at density rho.

    Roots come from a sign-change scan over ``interval`` refined by Brent's
    method, plus a Newton solve from phi0. They are ordered by |phi|; the
    physical branch is the one nearest the Euler pressure when the relation
    has one, otherwise the smallest |phi|.

    Raises DegenerateRelationError when h vanishes identically.
    """
    _require_euler_type(rel)
    if not rho > 0:
        raise ValueError(f"density must be positive, got {rho!r}")
    lo, hi = interval or default_scan_interval(rel, rho)
    if is_degenerate(rel, rho, settings, (lo, hi)):
        logger.info("{} is identically satisfied at rho={}: phi is not determined", rel.name, rho)
        raise DegenerateRelationError(f"{rel.name}: the relation is identically satisfied by every spherical stress")

    def h(phi: float) -> float:
        return rel.spherical_residual(rho, phi)

    candidates: List[Tuple[float, int]] = []
    probes = np.linspace(lo, hi, n_probes)
    values = [_safe_eval(h, float(p)) for p in probes]
    for i, value in enumerate(values):
        if value == 0.0:
            candidates.append((float(probes[i]), 0))
            continue
        if i + 1 == len(values):
            break
        right = values[i + 1]
        if value is None or right is None or right == 0.0:
            continue
        if (value < 0.0) != (right < 0.0):
            root, info = brentq(h, probes[i], probes[i + 1], xtol=1e-14, full_output=True)
            candidates.append((float(root), info.iterations))

    newton = _scalar_newton(h, phi0, settings)
    if newton is not None:
        candidates.append(newton)

    roots: List[Tuple[float, int, float]] = []
    for phi, iterations in candidates:
        if any(abs(phi - kept) <= 1e-8 * max(1.0, abs(phi)) for kept, _, _ in roots):
            continue
        residual = _safe_eval(h, phi)
        if residual is None or abs(residual) > settings.tolerance(_term_scale(rel, rho, phi)):
            # sign changes across poles land here
            continue
        roots.append((phi, iterations, abs(residual)))

    if not roots:
        logger.warning("{}: no real root of the spherical equation in [{}, {}] at rho={}", rel.name, lo, hi, rho)
        return []

    roots.sort(key=lambda item: abs(item[0]))
    reports = [
        RootReport(phi, iterations, residual, True, branch=f"branch-{k}")
        for k, (phi, iterations, residual) in enumerate(roots)
    ]
    euler = rel.euler_pressure(rho)
    if euler is not None:
        physical = min(reports, key=lambda rep: abs(rep.phi - euler))
    else:
        physical = reports[0]
    physical.physical = True
    return reports


def physical_branch(reports: Sequence[RootReport]) -> Optional[RootReport]:
    for report in reports:
        if report.physical:
            return report
    return None


# --- density inversion ---------------------------------------------------------


def invert_density(
    rel: ConstitutiveRelation,
    phi: float,
    rho_guess: Optional[float] = None,
    settings: NewtonSettings = NewtonSettings(),
    rho_bounds: Tuple[float, float] = (1e-12, 1e12),
    max_doublings: int = 60,
) -> float:
    """Density rho > 0 with h(rho, phi) = 0.

    With a guess, the root nearest the guess (in doublings) is returned;
    without one, a geometric scan over rho_bounds picks the smallest root.
    """
    _require_euler_type(rel)

    def f(rho: float) -> float:
        return rel.spherical_residual(rho, phi)

    def refine(a: float, b: float) -> float:
        return float(brentq(f, a, b, xtol=1e-300, rtol=4 * np.finfo(float).eps))

    def changes(fa: Optional[float], fb: Optional[float]) -> bool:
        return fa is not None and fb is not None and (fa < 0.0) != (fb < 0.0)

    if rho_guess is not None and rho_guess > 0:
        f_center = _safe_eval(f, rho_guess)
        if f_center == 0.0:
            return float(rho_guess)
        left = right = float(rho_guess)
        f_left = f_right = f_center
        for _ in range(max_doublings):
            new_right = right * 2.0
            f_new_right = _safe_eval(f, new_right)
            if changes(f_right, f_new_right):
                return refine(right, new_right)
            new_left = left * 0.5
            f_new_left = _safe_eval(f, new_left)
            if changes(f_new_left, f_left):
                return refine(new_left, left)
            left, f_left, right, f_right = new_left, f_new_left, new_right, f_new_right
    else:
        probes = np.geomspace(rho_bounds[0], rho_bounds[1], 24 * 24 + 1)
        prev_rho, prev_f = float(probes[0]), _safe_eval(f, float(probes[0]))
        if prev_f == 0.0:
            return prev_rho
        for rho in probes[1:]:
            rho = float(rho)
            value = _safe_eval(f, rho)
            if value == 0.0:
                return rho
            if changes(prev_f, value):
                return refine(prev_rho, rho)
            prev_rho, prev_f = rho, value

    raise NonInvertibleRelationError(f"{rel.name}: no density satisfies the relation at phi={phi!r}")


# --- quadrature ----------------------------------------------------------------


def sample_density(density: Callable, points: np.ndarray) -> np.ndarray:
    """Evaluate a vectorized density law, rejecting non-finite samples."""
    values = np.asarray(density(points), dtype=float)
    if values.shape != points.shape:
        values = np.broadcast_to(values, points.shape).astype(float)
    bad = ~np.isfinite(values)
    if bad.any():
        raise QuadratureError("non-finite density sample", float(points[np.argmax(bad)]))
    return values


def integrate_profile(
    density: Callable,
    y: float,
    y_top: float,
    phi_top: float,
    n_panels: int,
    grav: float = 1.0,
) -> float:
    """phi(y) = phi_top + int_y^y_top grav * rho(s) ds with composite Simpson.

    ``density`` must accept a numpy array of heights.
    """
    if y > y_top:
        raise ValueError(f"y={y!r} lies above y_top={y_top!r}")
    if n_panels < 2 or n_panels % 2:
        raise ValueError(f"n_panels must be even and >= 2, got {n_panels}")
    if y == y_top:
        return float(phi_top)
    s = np.linspace(y, y_top, n_panels + 1)
    values = sample_density(density, s)
    return float(phi_top + grav * simpson(values, x=s))
