"""
Run configuration.

A run is described by one JSON document, validated with pydantic:

    {
      "relations": [
        {"name": "ideal-gas", "family": "IdealGas", "c": 1.0},
        {"name": "quadratic", "family": "ImplicitEuler",
         "coefficients": {"alpha1": "2", "alpha2": "3", "alpha4": "1"}},
        {"name": "eq-a", "family": "ImplicitEuler", "constants": {"A": 1, "K": 1},
         "coefficients": {"alpha1": "A*phi*rho/K", "alpha2": "A*rho/K"}}
      ],
      "grid": {"y_min": -10, "n_points": 2001, "g": 1},
      "surface": {"k": 1, "c": 1},
      "density": {"law": "constant", "rho0": 1.0},
      "solver": {"abs_tol": 1e-12, "rel_tol": 1e-10, "max_iter": 100, "fd_step": 1e-7},
      "observations": [{"name": "profile", "source": "ideal_gas", "k": 1, "c": 1}],
      "cull": {"candidates": ["ideal-gas", "eq-a"], "tol": 1e-8},
      "out_dir": "runs",
      "seed": 0
    }

Expressions are parsed and family restrictions checked when the document is
loaded. Observation files are resolved relative to the config file.
"""
from pathlib import Path
from typing import Annotated, Dict, List, Literal, Optional, Union

from loguru import logger
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PositiveFloat,
    PositiveInt,
    PrivateAttr,
    ValidationError,
    model_validator,
)

from .constitutive import CoefficientSet, ConstitutiveRelation, Family
from .culling import Observation, StressSample, generate_observation
from .exceptions import ConfigError, ConstitutiveToolkitError
from .exprdsl import as_expr
from .file_processor import read_json_file, read_profile_csv, read_samples_json
from .hydrostatics import (
    ConstantDensity,
    ExponentialDensity,
    HalfSpaceGrid,
    HydrostaticSolution,
    LayeredDensity,
    ideal_gas_profile,
    phi_from_density,
)
from .solver import NewtonSettings
from .tensor3 import SymTensor3, Vec3

Scalar = Union[float, str]


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RelationConfig(_Model):
    name: str = Field(min_length=1)
    family: Family
    coefficients: Dict[str, Scalar] = Field(default_factory=dict)
    constants: Dict[str, float] = Field(default_factory=dict)
    pressure: Optional[Scalar] = None
    c: Optional[float] = None
    structural_direction: Optional[List[float]] = Field(default=None, min_length=3, max_length=3)

    def build(self) -> ConstitutiveRelation:
        direction = Vec3.from_array(self.structural_direction) if self.structural_direction else None
        pressure = as_expr(self.pressure, self.constants) if self.pressure is not None else None
        return ConstitutiveRelation(
            self.name,
            self.family,
            CoefficientSet.from_mapping(self.coefficients, self.constants),
            pressure=pressure,
            ideal_gas_constant=self.c,
            structural_direction=direction,
        )


class GridConfig(_Model):
    y_min: float = Field(default=-10.0, lt=0)
    n_points: int = Field(default=2001, ge=3)
    g: PositiveFloat = 1.0

    def build(self) -> HalfSpaceGrid:
        return HalfSpaceGrid(self.y_min, self.n_points, self.g)


class SurfaceConfig(_Model):
    """Surface condition: phi(0) directly, or K and C with phi(0) = K C."""
    phi0: Optional[float] = None
    k: Optional[PositiveFloat] = None
    c: Optional[PositiveFloat] = None

    @model_validator(mode="after")
    def _one_form(self):
        if self.phi0 is None and (self.k is None or self.c is None):
            raise ValueError("surface needs phi0, or both k and c")
        if self.phi0 is not None and self.k is not None and self.c is not None:
            raise ValueError("give phi0 or k and c, not both")
        return self

    @property
    def surface_phi(self) -> float:
        return self.phi0 if self.phi0 is not None else self.k * self.c


class ConstantDensityConfig(_Model):
    law: Literal["constant"]
    rho0: PositiveFloat

    def build(self) -> ConstantDensity:
        return ConstantDensity(self.rho0)


class ExponentialDensityConfig(_Model):
    law: Literal["exponential"]
    k: PositiveFloat
    scale_length: PositiveFloat

    def build(self) -> ExponentialDensity:
        return ExponentialDensity(self.k, self.scale_length)


class LayeredDensityConfig(_Model):
    law: Literal["layered"]
    interfaces: List[float]
    densities: List[PositiveFloat] = Field(min_length=1)

    def build(self) -> LayeredDensity:
        return LayeredDensity(tuple(self.interfaces), tuple(self.densities))


DensityConfig = Annotated[
    Union[ConstantDensityConfig, ExponentialDensityConfig, LayeredDensityConfig],
    Field(discriminator="law"),
]


class SolverConfig(_Model):
    abs_tol: PositiveFloat = 1e-12
    rel_tol: PositiveFloat = 1e-10
    max_iter: PositiveInt = 100
    fd_step: PositiveFloat = 1e-7

    def build(self) -> NewtonSettings:
        return NewtonSettings(self.abs_tol, self.rel_tol, self.max_iter, self.fd_step)


class SampleConfig(_Model):
    """A raw state: density with either phi (T = -phi I) or six stress components."""
    rho: PositiveFloat
    phi: Optional[float] = None
    stress: Optional[List[float]] = Field(default=None, min_length=6, max_length=6)
    grad: Optional[List[float]] = Field(default=None, min_length=3, max_length=3)

    @model_validator(mode="after")
    def _one_stress(self):
        if (self.phi is None) == (self.stress is None):
            raise ValueError("a sample needs exactly one of phi or stress")
        return self

    def build(self) -> StressSample:
        stress = SymTensor3.identity(-self.phi) if self.phi is not None else SymTensor3.from_vector(self.stress)
        grad = Vec3.from_array(self.grad) if self.grad else Vec3()
        return StressSample(self.rho, stress, grad)


class _ObservationBase(_Model):
    name: str = Field(min_length=1)
    tol: Optional[PositiveFloat] = None
    grid: Optional[GridConfig] = None


class IdealGasObservation(_ObservationBase):
    source: Literal["ideal_gas"]
    k: PositiveFloat
    c: PositiveFloat


class GeneratedObservation(_ObservationBase):
    source: Literal["generated"]
    relation: str
    phi0: float
    noise: float = Field(default=0.0, ge=0.0, lt=1.0)
    seed: Optional[int] = None


class PrescribedObservation(_ObservationBase):
    source: Literal["prescribed"]
    density: DensityConfig
    phi0: float


class SamplesObservation(_ObservationBase):
    source: Literal["samples"]
    samples: List[SampleConfig] = Field(min_length=1)


class ProfileFileObservation(_ObservationBase):
    source: Literal["profile_file"]
    path: str


class SamplesFileObservation(_ObservationBase):
    source: Literal["samples_file"]
    path: str


ObservationConfig = Annotated[
    Union[
        IdealGasObservation,
        GeneratedObservation,
        PrescribedObservation,
        SamplesObservation,
        ProfileFileObservation,
        SamplesFileObservation,
    ],
    Field(discriminator="source"),
]


class CullConfig(_Model):
    candidates: Optional[List[str]] = None  # None: every relation
    tol: PositiveFloat = 1e-8


class RunConfig(_Model):
    relations: List[RelationConfig] = Field(default_factory=list)
    grid: GridConfig = Field(default_factory=GridConfig)
    surface: SurfaceConfig = Field(default_factory=lambda: SurfaceConfig(phi0=1.0))
    density: Optional[DensityConfig] = None
    solver: SolverConfig = Field(default_factory=SolverConfig)
    observations: List[ObservationConfig] = Field(default_factory=list)
    cull: CullConfig = Field(default_factory=CullConfig)
    out_dir: str = "runs"
    seed: int = 0

    _relations: Dict[str, ConstitutiveRelation] = PrivateAttr(default_factory=dict)
    _base_dir: Path = PrivateAttr(default_factory=Path.cwd)

    @model_validator(mode="after")
    def _resolve(self):
        names = [r.name for r in self.relations]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ValueError(f"duplicate relation names: {duplicates}")
        built = {}
        for rc in self.relations:
            try:
                built[rc.name] = rc.build()
            except ConstitutiveToolkitError as exc:
                raise ValueError(f"relation {rc.name!r}: {exc}") from exc
        known = set(built)
        referenced = list(self.cull.candidates or [])
        referenced += [o.relation for o in self.observations if isinstance(o, GeneratedObservation)]
        unknown = sorted(set(referenced) - known)
        if unknown:
            raise ValueError(f"unknown relation names: {unknown}")
        obs_names = [o.name for o in self.observations]
        if len(set(obs_names)) != len(obs_names):
            raise ValueError(f"duplicate observation names in {obs_names}")
        self._relations = built
        return self

    # -- lookups -----------------------------------------------------------

    def relation(self, name: str) -> ConstitutiveRelation:
        try:
            return self._relations[name]
        except KeyError:
            raise ConfigError(f"unknown relation {name!r}; known: {sorted(self._relations)}") from None

    def candidates(self) -> List[ConstitutiveRelation]:
        names = self.cull.candidates if self.cull.candidates is not None else [r.name for r in self.relations]
        return [self.relation(n) for n in names]

    def settings(self) -> NewtonSettings:
        return self.solver.build()

    def observations_built(self) -> List[Observation]:
        return [self.build_observation(o) for o in self.observations]

    def build_observation(self, oc) -> Observation:
        grid = (oc.grid or self.grid).build()
        if isinstance(oc, IdealGasObservation):
            return Observation(oc.name, ideal_gas_profile(oc.k, oc.c, grid), tol=oc.tol)
        if isinstance(oc, GeneratedObservation):
            seed = oc.seed if oc.seed is not None else self.seed
            obs = generate_observation(self.relation(oc.relation), grid, oc.phi0, oc.noise, seed, name=oc.name, settings=self.settings())
            obs.tol = oc.tol
            return obs
        if isinstance(oc, PrescribedObservation):
            return Observation(oc.name, phi_from_density(oc.density.build(), oc.phi0, grid), tol=oc.tol)
        if isinstance(oc, SamplesObservation):
            return Observation(oc.name, samples=tuple(s.build() for s in oc.samples), tol=oc.tol)
        path = self._resolve_path(oc.path)
        if isinstance(oc, ProfileFileObservation):
            return Observation(oc.name, _solution_from_frame(read_profile_csv(path), self.grid.g, path), tol=oc.tol)
        try:
            samples = tuple(SampleConfig.model_validate(s).build() for s in read_samples_json(path))
        except ValidationError as exc:
            raise ConfigError(f"invalid sample ({exc.errors()[0]['msg']})", str(path)) from exc
        return Observation(oc.name, samples=samples, tol=oc.tol)

    def _resolve_path(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self._base_dir / p

    # -- overrides and persistence -------------------------------------------

    def with_overrides(
        self,
        out_dir: Optional[str] = None,
        seed: Optional[int] = None,
        tol: Optional[float] = None,
        max_iter: Optional[int] = None,
    ) -> "RunConfig":
        """Apply command-line flags; the result is validated again."""
        data = self.model_dump()
        if out_dir is not None:
            data["out_dir"] = out_dir
        if seed is not None:
            data["seed"] = seed
        if tol is not None:
            data["cull"]["tol"] = tol
        if max_iter is not None:
            data["solver"]["max_iter"] = max_iter
        return _validate(data, self._base_dir)

    def dump_json(self) -> str:
        return self.model_dump_json(indent=2)


def _solution_from_frame(frame, grav: float, path: Path) -> HydrostaticSolution:
    """A profile file must sit on a uniform grid ending at y = 0."""
    y = frame["y"].to_numpy()
    if y.size < 3 or y[-1] != 0.0:
        raise ConfigError("profile must have at least 3 rows and end at y = 0", str(path))
    try:
        grid = HalfSpaceGrid(float(y[0]), int(y.size), grav)
    except ValueError as exc:
        raise ConfigError(str(exc), str(path)) from exc
    if abs(grid.y - y).max() > 1e-9 * max(1.0, -grid.y_min):
        raise ConfigError("profile heights must be uniformly spaced", str(path))
    try:
        return HydrostaticSolution(grid, frame["rho"].to_numpy(), frame["phi"].to_numpy())
    except ValueError as exc:
        raise ConfigError(str(exc), str(path)) from exc


def _validate(data, base_dir: Path, source: Optional[str] = None) -> RunConfig:
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"invalid configuration at '{where}': {first['msg']}", source) from exc
    cfg._base_dir = base_dir
    return cfg


def load_config(path) -> RunConfig:
    """Load and validate a run configuration file."""
    path = Path(path)
    cfg = _validate(read_json_file(path), path.parent.resolve(), str(path))
    logger.debug("loaded {} relations and {} observations from {}", len(cfg.relations), len(cfg.observations), path)
    return cfg


def default_config() -> RunConfig:
    return _validate({}, Path.cwd())
