"""
Hydrostatic half-space problem.

A fluid fills y < 0 under gravity b = -g j with a free surface at y = 0. With a
spherical stress T = -phi(y) I, the balance of linear momentum gives
phi' = -g rho, so phi(y) = phi(0) + int_y^0 g rho(s) ds. A relation supports
such a state iff h(rho, phi) = a1 - a2 phi + a4 phi^2 vanishes along it.
"""
import math
from dataclasses import dataclass
from itertools import pairwise
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from scipy.integrate import solve_ivp

from .constitutive import ConstitutiveRelation, residual_general
from .exceptions import (
    DegenerateRelationError,
    ExprDomainError,
    GridTooCoarseError,
    ProfileOverflowError,
    SolverError,
)
from .solver import (
    NewtonSettings,
    determines_density,
    integrate_profile,
    invert_density,
)
from .tensor3 import SymTensor3, Vec3, invariants

DEFAULT_Y_MIN = -10.0
DEFAULT_CONSISTENCY_TOL = 1e-8
DEFAULT_PANELS = 2048
CSV_COLUMNS = ("y", "rho", "phi", "h_residual")

_MAX_EXPONENT = math.log(np.finfo(float).max)


@dataclass(frozen=True)
class HalfSpaceGrid:
    y_min: float = DEFAULT_Y_MIN
    n_points: int = 2001
    grav: float = 1.0

    def __post_init__(self):
        if not self.y_min < 0:
            raise ValueError(f"y_min must be negative, got {self.y_min!r}")
        if self.n_points < 3:
            raise ValueError(f"n_points must be >= 3, got {self.n_points}")
        if not self.grav > 0:
            raise ValueError(f"gravity must be positive, got {self.grav!r}")

    @property
    def y(self) -> np.ndarray:
        """Uniform heights from y_min up to exactly 0."""
        return np.linspace(self.y_min, 0.0, self.n_points)

    @property
    def spacing(self) -> float:
        return -self.y_min / (self.n_points - 1)

    def refined(self) -> "HalfSpaceGrid":
        """Same domain with half the spacing."""
        return HalfSpaceGrid(self.y_min, 2 * self.n_points - 1, self.grav)


# --- density laws ------------------------------------------------------------


@dataclass(frozen=True)
class ConstantDensity:
    rho0: float

    def __call__(self, y):
        return np.full(np.shape(y), float(self.rho0))


@dataclass(frozen=True)
class ExponentialDensity:
    """rho = k exp(-y / scale_length); the ideal gas has scale_length = C / g."""
    k: float
    scale_length: float

    def __call__(self, y):
        return self.k * np.exp(-np.asarray(y, dtype=float) / self.scale_length)


@dataclass(frozen=True)
class LayeredDensity:
    """Stacked constant-density layers.

    ``interfaces`` are the layer boundaries from the top down; ``densities``
    has one more entry, densities[0] being the top layer.
    """
    interfaces: Tuple[float, ...]
    densities: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "interfaces", tuple(float(b) for b in self.interfaces))
        object.__setattr__(self, "densities", tuple(float(r) for r in self.densities))
        if len(self.densities) != len(self.interfaces) + 1:
            raise ValueError("need exactly one more density than interfaces")
        if any(a <= b for a, b in pairwise(self.interfaces)):
            raise ValueError("interfaces must be strictly decreasing")

    @property
    def breakpoints(self) -> Tuple[float, ...]:
        return self.interfaces

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        below = np.zeros(y.shape, dtype=int)
        for b in self.interfaces:
            below += (y < b).astype(int)
        return np.asarray(self.densities)[below]


# --- solutions -----------------------------------------------------------------


@dataclass
class HydrostaticSolution:
    grid: HalfSpaceGrid
    rho: np.ndarray
    phi: np.ndarray
    h_residual: Optional[np.ndarray] = None

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        n = self.grid.n_points
        if self.rho.shape != (n,) or self.phi.shape != (n,):
            raise ValueError(f"profiles must have {n} points")
        if not np.all(self.rho > 0):
            raise ValueError("density must be positive everywhere")

    @property
    def y(self) -> np.ndarray:
        return self.grid.y

    @property
    def phi_surface(self) -> float:
        return float(self.phi[-1])

    @property
    def rho_surface(self) -> float:
        return float(self.rho[-1])

    def stress_at(self, i: int) -> SymTensor3:
        """T = -phi I at grid point i."""
        return SymTensor3.identity(-self.phi[i])

    def to_frame(self) -> pd.DataFrame:
        h = self.h_residual if self.h_residual is not None else np.full(self.grid.n_points, np.nan)
        return pd.DataFrame({"y": self.y, "rho": self.rho, "phi": self.phi, "h_residual": h}, columns=list(CSV_COLUMNS))


def ideal_gas_profile(k: float, c: float, grid: HalfSpaceGrid) -> HydrostaticSolution:
    """Closed form rho = K exp(-(g/C) y), phi = C rho."""
    if not (k > 0 and c > 0):
        raise ValueError(f"K and C must be positive, got K={k!r}, C={c!r}")
    exponent = grid.grav * -grid.y_min / c
    if exponent + math.log(k * max(1.0, c)) >= _MAX_EXPONENT:
        raise ProfileOverflowError(
            f"exp(g*|y_min|/C) = exp({exponent:.4g}) overflows; truncate the grid (raise y_min)"
        )
    rho = k * np.exp(-(grid.grav / c) * grid.y)
    return HydrostaticSolution(grid, rho, c * rho)


def _one_sided(density: Callable, lo: float, hi: float, breakpoints: Sequence[float]) -> Callable:
    """Sample [lo, hi] from the inside at ends that sit on a density jump."""
    nudge_lo = lo in breakpoints
    nudge_hi = hi in breakpoints
    if not (nudge_lo or nudge_hi):
        return density

    def inner(s):
        s = np.array(s, dtype=float)
        if nudge_lo:
            s[0] = np.nextafter(lo, hi)
        if nudge_hi:
            s[-1] = np.nextafter(hi, lo)
        return density(s)

    return inner


def phi_from_density(
    density: Callable,
    phi0: float,
    grid: HalfSpaceGrid,
    n_panels: int = DEFAULT_PANELS,
) -> HydrostaticSolution:
    """Integrate phi' = -g rho downward from the surface value phi0.

    Each grid interval gets an even number of Simpson panels (n_panels shared
    over the grid, at least two per interval); intervals are split at density
    jumps of layered laws.
    """
    y = grid.y
    per_interval = max(2, math.ceil(n_panels / (grid.n_points - 1)))
    per_interval += per_interval % 2
    breakpoints = tuple(getattr(density, "breakpoints", ()))

    increments = np.empty(grid.n_points - 1)
    for i, (a, b) in enumerate(pairwise(y)):
        cuts = [a, *(p for p in breakpoints if a < p < b), b]
        increments[i] = sum(
            integrate_profile(_one_sided(density, lo, hi, breakpoints), lo, hi, 0.0, per_interval, grid.grav)
            for lo, hi in pairwise(cuts)
        )

    phi = np.empty(grid.n_points)
    phi[-1] = phi0
    phi[:-1] = phi0 + np.cumsum(increments[::-1])[::-1]
    # layered laws report the upper-layer value at an interface
    rho = np.asarray(density(y), dtype=float)
    return HydrostaticSolution(grid, rho, phi)


def solve_coupled_profile(
    rel: ConstitutiveRelation,
    grid: HalfSpaceGrid,
    phi0: float,
    settings: NewtonSettings = NewtonSettings(),
    rtol: float = 1e-12,
) -> HydrostaticSolution:
    """Solve phi' = -g rho(phi) with rho recovered from the relation at each phi.

    For the ideal gas this reproduces rho = (phi0/C) exp(-(g/C) y).
    """
    if not determines_density(rel, phi0, settings):
        raise DegenerateRelationError(f"{rel.name}: relation does not determine phi from rho")

    state = {"rho": invert_density(rel, phi0, None, settings)}
    logger.debug("{}: surface density {} for phi0={}", rel.name, state["rho"], phi0)

    def rhs(_y, phi):
        rho = invert_density(rel, float(phi[0]), state["rho"], settings)
        state["rho"] = rho
        return [-grid.grav * rho]

    y_down = grid.y[::-1]
    result = solve_ivp(
        rhs,
        (0.0, grid.y_min),
        [phi0],
        method="DOP853",
        t_eval=y_down,
        rtol=rtol,
        atol=rtol * max(1.0, abs(phi0)),
    )
    if not result.success:
        raise SolverError(f"{rel.name}: hydrostatic integration failed: {result.message}")

    phi_down = result.y[0]
    rho_down = np.empty_like(phi_down)
    guess = invert_density(rel, phi0, None, settings)
    for i, value in enumerate(phi_down):
        guess = invert_density(rel, float(value), guess, settings)
        rho_down[i] = guess
    return HydrostaticSolution(grid, rho_down[::-1], phi_down[::-1])


# --- checks --------------------------------------------------------------------


@dataclass
class ConsistencyReport:
    h: np.ndarray
    max_abs: float
    alpha_scale: float

    @property
    def normalized(self) -> float:
        """max |h| / (1 + max |a1|) along the profile."""
        return self.max_abs / (1.0 + self.alpha_scale)

    def is_consistent(self, tol: float = DEFAULT_CONSISTENCY_TOL) -> bool:
        return self.max_abs <= tol * (1.0 + self.alpha_scale)


def consistency_on_profile(rel: ConstitutiveRelation, sol: HydrostaticSolution) -> ConsistencyReport:
    """Evaluate the relation along a hydrostatic state.

    Euler-type relations give the signed scalar residual h(rho_i, phi_i). Gradient
    families are evaluated in full at T = -phi I with grad rho = (0, rho', 0),
    rho' from second-order differences; h_i is then the max-abs tensor residual.
    """
    n = sol.grid.n_points
    h = np.empty(n)
    scale = 0.0
    drho = np.gradient(sol.rho, sol.y) if not rel.family.is_euler_type else None
    for i in range(n):
        rho, phi = float(sol.rho[i]), float(sol.phi[i])
        try:
            if drho is None:
                a1, a2, a4 = rel.spherical_coefficients(rho, phi)
                h[i] = a1 - a2 * phi + a4 * phi * phi
            else:
                g = Vec3(0.0, float(drho[i]), 0.0)
                t = SymTensor3.identity(-phi)
                a1 = rel.coefficients_at(rho, invariants(t, g))[0]
                h[i] = residual_general(rel, rho, g, t).norm_inf()
        except ExprDomainError as exc:
            raise ExprDomainError(f"at y={sol.y[i]!r}: {exc.reason}", exc.subexpression) from exc
        scale = max(scale, abs(a1))
    return ConsistencyReport(h, float(np.max(np.abs(h))), scale)


@dataclass(frozen=True)
class BalanceReport:
    mass_residual: float
    momentum_residual: float
    fd_step: float


def verify_balances(sol: HydrostaticSolution, fd_step: Optional[float] = None) -> BalanceReport:
    """Finite-difference check of the static balance laws.

    Mass balance holds identically (v = 0, rho independent of time). The
    y-momentum balance -phi' - rho g = 0 is checked with central differences
    of step fd_step (a multiple of the grid spacing, default one spacing) and
    normalized by rho g; the x and z components vanish since phi depends on y only.
    """
    grid = sol.grid
    if grid.n_points < 5:
        raise GridTooCoarseError(f"need at least 5 grid points, got {grid.n_points}")
    spacing = grid.spacing
    stride = 1 if fd_step is None else int(round(fd_step / spacing))
    if stride < 1 or abs(stride * spacing - (fd_step or spacing)) > 1e-9 * spacing:
        raise ValueError(f"fd_step must be a positive multiple of the grid spacing {spacing!r}")
    if grid.n_points <= 2 * stride:
        raise GridTooCoarseError(f"fd_step {fd_step!r} leaves no interior points")

    step = stride * spacing
    dphi = (sol.phi[2 * stride:] - sol.phi[: -2 * stride]) / (2.0 * step)
    weight = sol.rho[stride:-stride] * grid.grav
    momentum = np.abs(-dphi - weight) / weight
    return BalanceReport(0.0, float(np.max(momentum)), step)
