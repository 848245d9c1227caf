"""
Culling candidate constitutive relations against observed states.

Every (candidate, observation) cell gets one verdict:

    consistent        the relation holds along the observation
    inconsistent      it does not
    degenerate        it holds because it constrains nothing there
    evaluation-error  evaluating the relation failed; the message is kept

Survivors are the candidates that are consistent or degenerate with every
observation, so adding an observation can only shrink the survivor set.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from tabulate import tabulate

from .constitutive import ConstitutiveRelation
from .exceptions import ConstitutiveToolkitError, SolverError
from .hydrostatics import (
    DEFAULT_CONSISTENCY_TOL,
    HalfSpaceGrid,
    HydrostaticSolution,
    consistency_on_profile,
    phi_from_density,
    solve_coupled_profile,
)
from .solver import NewtonSettings, is_degenerate
from .tensor3 import SymTensor3, Vec3, invariants

# densities of a profile probed for degeneracy: bottom, middle, surface
_DEGENERACY_SAMPLES = 3


class Verdict(str, Enum):
    CONSISTENT = "consistent"
    INCONSISTENT = "inconsistent"
    DEGENERATE = "degenerate"
    EVALUATION_ERROR = "evaluation-error"

    @property
    def survives(self) -> bool:
        return self in (Verdict.CONSISTENT, Verdict.DEGENERATE)


@dataclass(frozen=True)
class StressSample:
    """One measured state: density, stress and (optionally) density gradient."""
    rho: float
    stress: SymTensor3
    grad: Vec3 = field(default_factory=Vec3)

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"sample density must be positive, got {self.rho!r}")

    @classmethod
    def spherical(cls, rho: float, phi: float) -> "StressSample":
        return cls(rho, SymTensor3.identity(-phi))

    @property
    def is_spherical(self) -> bool:
        t = self.stress
        return t.xy == t.xz == t.yz == 0.0 and t.xx == t.yy == t.zz and self.grad.norm2() == 0.0


@dataclass
class Observation:
    name: str
    solution: Optional[HydrostaticSolution] = None
    samples: Tuple[StressSample, ...] = ()
    tol: Optional[float] = None

    def __post_init__(self):
        self.samples = tuple(self.samples)
        if (self.solution is None) == (not self.samples):
            raise ValueError(f"observation {self.name!r} needs either a profile or a nonempty sample list")
        if self.tol is not None and not self.tol > 0:
            raise ValueError(f"observation {self.name!r}: tolerance must be positive")

    @property
    def kind(self) -> str:
        return "profile" if self.solution is not None else "samples"


class CandidateSet:
    """Named candidate relations, in the order given."""

    def __init__(self, relations: Iterable[ConstitutiveRelation]):
        self.relations: List[ConstitutiveRelation] = list(relations)
        names = [rel.name for rel in self.relations]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ValueError(f"duplicate candidate names: {duplicates}")

    def __iter__(self):
        return iter(self.relations)

    def __len__(self) -> int:
        return len(self.relations)

    @property
    def names(self) -> List[str]:
        return [rel.name for rel in self.relations]


@dataclass(frozen=True)
class CullCell:
    candidate: str
    observation: str
    verdict: Verdict
    max_residual: Optional[float] = None
    normalized_residual: Optional[float] = None
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "candidate": self.candidate,
            "observation": self.observation,
            "verdict": self.verdict.value,
            "max_residual": self.max_residual,
            "normalized_residual": self.normalized_residual,
            "message": self.message,
        }


@dataclass
class CullingReport:
    candidates: List[str]
    observations: List[str]
    cells: Dict[Tuple[str, str], CullCell]
    tol: float

    def cell(self, candidate: str, observation: str) -> CullCell:
        return self.cells[(candidate, observation)]

    def verdict(self, candidate: str, observation: str) -> Verdict:
        return self.cell(candidate, observation).verdict

    @property
    def survivors(self) -> List[str]:
        return [
            c for c in self.candidates
            if all(self.cells[(c, o)].verdict.survives for o in self.observations)
        ]

    def to_dict(self) -> dict:
        return {
            "tolerance": self.tol,
            "candidates": list(self.candidates),
            "observations": list(self.observations),
            "verdicts": {c: {o: self.cells[(c, o)].verdict.value for o in self.observations} for c in self.candidates},
            "cells": [self.cells[(c, o)].to_dict() for c in self.candidates for o in self.observations],
            "survivors": self.survivors,
        }

    def render_table(self) -> str:
        """Verdict matrix, one row per candidate, plus a survivor column."""
        survivors = set(self.survivors)
        rows = [
            [c, *(self.cells[(c, o)].verdict.value for o in self.observations), "yes" if c in survivors else "no"]
            for c in self.candidates
        ]
        return tabulate(rows, headers=["candidate", *self.observations, "survives"], tablefmt="github")


# --- cell evaluation -------------------------------------------------------------


def _profile_cell(rel: ConstitutiveRelation, obs: Observation, tol: float, settings: NewtonSettings) -> CullCell:
    report = consistency_on_profile(rel, obs.solution)
    if not report.is_consistent(tol):
        return CullCell(rel.name, obs.name, Verdict.INCONSISTENT, report.max_abs, report.normalized)
    verdict = Verdict.CONSISTENT
    if rel.family.is_euler_type:
        rho = np.sort(obs.solution.rho)
        probes = rho[np.linspace(0, rho.size - 1, _DEGENERACY_SAMPLES).astype(int)]
        if all(is_degenerate(rel, float(r), settings) for r in probes):
            verdict = Verdict.DEGENERATE
    return CullCell(rel.name, obs.name, verdict, report.max_abs, report.normalized)


def _samples_cell(rel: ConstitutiveRelation, obs: Observation, tol: float, settings: NewtonSettings) -> CullCell:
    worst = 0.0
    scale = 0.0
    for sample in obs.samples:
        residual = rel.residual(sample.rho, sample.grad, sample.stress)
        a1 = rel.coefficients_at(sample.rho, invariants(sample.stress, sample.grad))[0]
        worst = max(worst, residual.norm_inf())
        scale = max(scale, abs(a1))
    normalized = worst / (1.0 + scale)
    if normalized > tol:
        return CullCell(rel.name, obs.name, Verdict.INCONSISTENT, worst, normalized)
    verdict = Verdict.CONSISTENT
    if rel.family.is_euler_type and all(s.is_spherical for s in obs.samples):
        if all(is_degenerate(rel, s.rho, settings) for s in obs.samples[:_DEGENERACY_SAMPLES]):
            verdict = Verdict.DEGENERATE
    return CullCell(rel.name, obs.name, verdict, worst, normalized)


def evaluate_cell(
    rel: ConstitutiveRelation,
    obs: Observation,
    tol: float = DEFAULT_CONSISTENCY_TOL,
    settings: NewtonSettings = NewtonSettings(),
) -> CullCell:
    """Classify one candidate against one observation; errors become a verdict."""
    tol = obs.tol if obs.tol is not None else tol
    evaluate: Callable = _profile_cell if obs.kind == "profile" else _samples_cell
    try:
        return evaluate(rel, obs, tol, settings)
    except (ConstitutiveToolkitError, ValueError) as exc:
        logger.warning("cull: {} on {}: {}", rel.name, obs.name, exc)
        return CullCell(rel.name, obs.name, Verdict.EVALUATION_ERROR, message=str(exc))


def cull(
    candidates: Sequence[ConstitutiveRelation],
    observations: Sequence[Observation],
    tol: float = DEFAULT_CONSISTENCY_TOL,
    settings: NewtonSettings = NewtonSettings(),
) -> CullingReport:
    """Evaluate every candidate against every observation.

    An empty survivor set is a valid outcome.
    """
    candidates = candidates if isinstance(candidates, CandidateSet) else CandidateSet(candidates)
    if not len(candidates):
        raise ValueError("no candidates")
    if not observations:
        raise ValueError("no observations")
    obs_names = [obs.name for obs in observations]
    if len(set(obs_names)) != len(obs_names):
        raise ValueError(f"duplicate observation names in {obs_names}")
    if not tol > 0:
        raise ValueError(f"tolerance must be positive, got {tol!r}")

    cells = {}
    for rel in candidates:
        for obs in observations:
            cells[(rel.name, obs.name)] = evaluate_cell(rel, obs, tol, settings)
    report = CullingReport(candidates.names, obs_names, cells, tol)
    logger.info("cull: {} of {} candidates survive {} observations", len(report.survivors), len(candidates), len(observations))
    return report


# --- synthetic observations --------------------------------------------------------


def generate_observation(
    rel: ConstitutiveRelation,
    grid: HalfSpaceGrid,
    phi0: float,
    noise_amplitude: float = 0.0,
    seed: int = 0,
    density: Optional[Callable] = None,
    name: Optional[str] = None,
    settings: NewtonSettings = NewtonSettings(),
) -> Observation:
    """Hydrostatic state of rel (or of a prescribed density law) as an observation.

    Noise multiplies rho and phi independently by 1 + U(-a, a), drawn from a
    generator seeded with ``seed``.
    """
    if not 0.0 <= noise_amplitude < 1.0:
        raise ValueError(f"noise amplitude must lie in [0, 1), got {noise_amplitude!r}")
    if density is not None:
        solution = phi_from_density(density, phi0, grid)
    elif rel.family.is_euler_type:
        solution = solve_coupled_profile(rel, grid, phi0, settings)
    else:
        raise SolverError(f"{rel.name}: no spherical branch to integrate for the {rel.family.value} family")

    if noise_amplitude > 0.0:
        rng = np.random.default_rng(seed)
        rho_noise = rng.uniform(-noise_amplitude, noise_amplitude, grid.n_points)
        phi_noise = rng.uniform(-noise_amplitude, noise_amplitude, grid.n_points)
        solution = HydrostaticSolution(grid, solution.rho * (1.0 + rho_noise), solution.phi * (1.0 + phi_noise))
    return Observation(name or f"{rel.name}-generated", solution)
