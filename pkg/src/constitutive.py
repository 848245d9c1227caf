"""
Constitutive relation families for compressible fluids and their residuals.

An implicit relation f(rho, grad rho, T) = 0 is stored as six coefficient
functions alpha1..alpha6 of the density and the invariants of (T, grad rho);
its residual is the isotropic representation

    a1 I + a2 T + a3 g(x)g + a4 T^2 + a5 (g(x)Tg + Tg(x)g) + a6 (g(x)T^2g + T^2g(x)g)

with g = grad rho. Families restrict which terms and arguments are admissible:

    GeneralImplicit   every term, every argument
    StressLinear      a4 = a6 = 0; a1, a3 of (rho, i1, i4, i5); a2, a5 of (rho, i4)
    ImplicitEuler     a3 = a5 = a6 = 0; arguments (rho, i1, i2, i3)
    ClassicalEuler    a1 = p(rho), a2 = 1
    IdealGas          a1 = C rho, a2 = 1
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Mapping, Optional, Protocol, Tuple

import numpy as np
from loguru import logger

from .exceptions import ExprDomainError, RelationValidationError
from .exprdsl import (
    BinOp,
    EvalContext,
    Expr,
    ExprLike,
    Neg,
    Number,
    Variable,
    as_expr,
    is_zero,
    to_source,
    variables,
)
from .tensor3 import (
    InvariantSet,
    SymTensor3,
    Vec3,
    invariants,
    outer,
    random_orthogonal,
    random_symmetric,
)


class Family(str, Enum):
    GENERAL_IMPLICIT = "GeneralImplicit"
    STRESS_LINEAR = "StressLinear"
    IMPLICIT_EULER = "ImplicitEuler"
    CLASSICAL_EULER = "ClassicalEuler"
    IDEAL_GAS = "IdealGas"

    @property
    def is_euler_type(self) -> bool:
        """Families whose residual only involves (rho, T)."""
        return self in (Family.IMPLICIT_EULER, Family.CLASSICAL_EULER, Family.IDEAL_GAS)


_ALL_ARGS = frozenset({"rho", "i1", "i2", "i3", "i4", "i5", "i6", "phi"})
_STRESS_LINEAR_WIDE = frozenset({"rho", "i1", "phi", "i4", "i5"})
_STRESS_LINEAR_NARROW = frozenset({"rho", "i4"})
_EULER_ARGS = frozenset({"rho", "i1", "i2", "i3", "phi"})

# (admissible arguments per alpha_k, coefficients that must vanish)
_RESTRICTIONS: Dict[Family, Tuple[Dict[int, FrozenSet[str]], Tuple[int, ...]]] = {
    Family.GENERAL_IMPLICIT: ({k: _ALL_ARGS for k in range(1, 7)}, ()),
    Family.STRESS_LINEAR: (
        {1: _STRESS_LINEAR_WIDE, 2: _STRESS_LINEAR_NARROW, 3: _STRESS_LINEAR_WIDE, 5: _STRESS_LINEAR_NARROW},
        (4, 6),
    ),
    Family.IMPLICIT_EULER: ({1: _EULER_ARGS, 2: _EULER_ARGS, 4: _EULER_ARGS}, (3, 5, 6)),
}


@dataclass(frozen=True)
class CoefficientSet:
    """alpha1..alpha6; None means the coefficient is identically zero."""
    alpha1: Optional[Expr] = None
    alpha2: Optional[Expr] = None
    alpha3: Optional[Expr] = None
    alpha4: Optional[Expr] = None
    alpha5: Optional[Expr] = None
    alpha6: Optional[Expr] = None

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, ExprLike], constants: Optional[Mapping[str, float]] = None) -> "CoefficientSet":
        """Build from {"alpha1": "rho", ...}; unknown keys are rejected."""
        unknown = set(mapping) - {f"alpha{k}" for k in range(1, 7)}
        if unknown:
            raise RelationValidationError(f"unknown coefficient names: {sorted(unknown)}")
        return cls(**{key: as_expr(value, constants) for key, value in mapping.items()})

    def get(self, k: int) -> Optional[Expr]:
        return getattr(self, f"alpha{k}")

    def to_dict(self) -> Dict[str, str]:
        return {f"alpha{k}": to_source(e) for k in range(1, 7) if (e := self.get(k)) is not None}


class TensorResidual(Protocol):
    def residual(self, rho: float, g: Vec3, t: SymTensor3) -> SymTensor3:
        ...


@dataclass(frozen=True)
class ConstitutiveRelation:
    name: str
    family: Family
    coefficients: CoefficientSet = field(default_factory=CoefficientSet)
    pressure: Optional[Expr] = None
    ideal_gas_constant: Optional[float] = None
    structural_direction: Optional[Vec3] = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.family is Family.IDEAL_GAS:
            c = self.ideal_gas_constant
            if c is None or not np.isfinite(c) or c <= 0:
                raise RelationValidationError(f"{self.name}: ideal gas constant C must be positive, got {c!r}")
            object.__setattr__(self, "pressure", BinOp("*", Number(float(c)), Variable("rho")))
        if self.family in (Family.CLASSICAL_EULER, Family.IDEAL_GAS):
            if self.pressure is None:
                raise RelationValidationError(f"{self.name}: {self.family.value} needs a pressure law p(rho)")
            extra = variables(self.pressure) - {"rho"}
            if extra:
                raise RelationValidationError(f"{self.name}: pressure law may only use rho, found {sorted(extra)}")
            object.__setattr__(self, "coefficients", CoefficientSet(alpha1=self.pressure, alpha2=Number(1.0)))
        else:
            self._check_restrictions()

    def _check_restrictions(self):
        allowed, vanishing = _RESTRICTIONS[self.family]
        for k in range(1, 7):
            expr = self.coefficients.get(k)
            if k in vanishing:
                if not is_zero(expr):
                    raise RelationValidationError(f"{self.name}: alpha{k} must be zero for the {self.family.value} family")
                continue
            if expr is None:
                continue
            extra = variables(expr) - allowed[k]
            if extra:
                raise RelationValidationError(
                    f"{self.name}: alpha{k} of the {self.family.value} family may depend on "
                    f"{sorted(allowed[k])} only, found {sorted(extra)}"
                )

    # -- construction helpers ---------------------------------------------

    @classmethod
    def general(cls, name: str, constants: Optional[Mapping[str, float]] = None, **alphas: ExprLike) -> "ConstitutiveRelation":
        return cls(name, Family.GENERAL_IMPLICIT, CoefficientSet.from_mapping(alphas, constants))

    @classmethod
    def stress_linear(cls, name: str, constants: Optional[Mapping[str, float]] = None, **alphas: ExprLike) -> "ConstitutiveRelation":
        return cls(name, Family.STRESS_LINEAR, CoefficientSet.from_mapping(alphas, constants))

    @classmethod
    def implicit_euler(cls, name: str, constants: Optional[Mapping[str, float]] = None, **alphas: ExprLike) -> "ConstitutiveRelation":
        return cls(name, Family.IMPLICIT_EULER, CoefficientSet.from_mapping(alphas, constants))

    @classmethod
    def classical_euler(cls, name: str, pressure: ExprLike, constants: Optional[Mapping[str, float]] = None) -> "ConstitutiveRelation":
        return cls(name, Family.CLASSICAL_EULER, pressure=as_expr(pressure, constants))

    @classmethod
    def ideal_gas(cls, name: str, c: float) -> "ConstitutiveRelation":
        return cls(name, Family.IDEAL_GAS, ideal_gas_constant=float(c))

    # -- evaluation ---------------------------------------------------------

    def coefficients_at(self, rho: float, inv: InvariantSet) -> Tuple[float, ...]:
        """Evaluate alpha1..alpha6 at (rho, invariants)."""
        ctx = EvalContext.from_invariants(rho, inv)
        values = []
        for k in range(1, 7):
            expr = self.coefficients.get(k)
            if expr is None:
                values.append(0.0)
                continue
            try:
                values.append(expr.evaluate(ctx))
            except ExprDomainError as exc:
                raise ExprDomainError(f"{self.name}: alpha{k} at rho={rho!r}: {exc.reason}", exc.subexpression) from exc
        return tuple(values)

    def spherical_coefficients(self, rho: float, phi: float) -> Tuple[float, float, float]:
        """hat-alpha 1, 2, 4: the coefficients at T = -phi I.

        The invariants follow tr T = -3 phi, tr T^2 = 3 phi^2, tr T^3 = -3 phi^3.
        """
        a = self.coefficients_at(rho, InvariantSet.spherical(phi))
        return a[0], a[1], a[3]

    def spherical_residual(self, rho: float, phi: float) -> float:
        """h(rho, phi) = a1 - a2 phi + a4 phi^2; zero iff T = -phi I satisfies the relation."""
        a1, a2, a4 = self.spherical_coefficients(rho, phi)
        return a1 - a2 * phi + a4 * phi * phi

    def euler_pressure(self, rho: float) -> Optional[float]:
        """p(rho) for families with an explicit Euler limit, else None."""
        if self.pressure is None:
            return None
        return self.pressure.evaluate(EvalContext(rho))

    def residual(self, rho: float, g: Vec3, t: SymTensor3) -> SymTensor3:
        """Tensor residual of whichever form the family uses."""
        if self.family.is_euler_type and self.family is not Family.IMPLICIT_EULER:
            return residual_implicit_euler(self, rho, t)
        return residual_general(self, rho, g, t)


def _euler_matrix(a1: float, a2: float, a4: float, tm: np.ndarray, t2m: np.ndarray) -> np.ndarray:
    return a1 * np.eye(3) + a2 * tm + a4 * t2m


def _structural_term(rel: ConstitutiveRelation) -> np.ndarray:
    d = rel.structural_direction
    if d is None:
        return np.zeros((3, 3))
    return outer(d, d).to_matrix()


def residual_general(rel: ConstitutiveRelation, rho: float, g: Vec3, t: SymTensor3) -> SymTensor3:
    """Full isotropic representation evaluated at (rho, grad rho, T)."""
    if rel.family not in (Family.GENERAL_IMPLICIT, Family.STRESS_LINEAR, Family.IMPLICIT_EULER):
        raise RelationValidationError(f"{rel.name}: residual_general does not apply to the {rel.family.value} family")
    a1, a2, a3, a4, a5, a6 = rel.coefficients_at(rho, invariants(t, g))
    tm = t.to_matrix()
    t2m = tm @ tm
    ga = g.to_array()
    tg = tm @ ga
    t2g = t2m @ ga
    r = _euler_matrix(a1, a2, a4, tm, t2m)
    r = r + a3 * np.outer(ga, ga)
    r = r + a5 * (np.outer(ga, tg) + np.outer(tg, ga))
    r = r + a6 * (np.outer(ga, t2g) + np.outer(t2g, ga))
    r = r + _structural_term(rel)
    return SymTensor3.from_matrix(r)


def residual_implicit_euler(rel: ConstitutiveRelation, rho: float, t: SymTensor3) -> SymTensor3:
    """a1 I + a2 T + a4 T^2 with coefficients of (rho, tr T, tr T^2, tr T^3)."""
    if not rel.family.is_euler_type:
        raise RelationValidationError(f"{rel.name}: the {rel.family.value} family is not an implicit Euler relation")
    a1, a2, _, a4, _, _ = rel.coefficients_at(rho, invariants(t, Vec3()))
    tm = t.to_matrix()
    r = _euler_matrix(a1, a2, a4, tm, tm @ tm)
    r = r + _structural_term(rel)
    return SymTensor3.from_matrix(r)


def euler_stress(pressure: ExprLike, rho: float) -> SymTensor3:
    """Classical Euler stress T = -p(rho) I."""
    p = as_expr(pressure).evaluate(EvalContext(rho))
    return SymTensor3.identity(-p)


@dataclass(frozen=True)
class KortewegParams:
    alpha0: Expr
    a1: float = 0.0
    a2: float = 0.0
    a3: float = 0.0
    a4: float = 0.0
    lam: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "alpha0", as_expr(self.alpha0))
        extra = variables(self.alpha0) - {"rho"}
        if extra:
            raise RelationValidationError(f"alpha0 may only depend on rho, found {sorted(extra)}")
        if self.mu < 0:
            raise RelationValidationError(f"shear viscosity mu must be nonnegative, got {self.mu!r}")
        if self.bulk_modulus < 0:
            raise RelationValidationError(f"bulk modulus 3*lambda + 2*mu must be nonnegative, got {self.bulk_modulus!r}")

    @property
    def bulk_modulus(self) -> float:
        return 3.0 * self.lam + 2.0 * self.mu

    @classmethod
    def euler(cls, pressure: ExprLike) -> "KortewegParams":
        """The Euler fluid as a Korteweg fluid: alpha0 = -p, everything else zero."""
        return cls(alpha0=Neg(as_expr(pressure)))


def korteweg_stress(p: KortewegParams, rho: float, g: Vec3, hess: SymTensor3, dv: SymTensor3) -> SymTensor3:
    """Explicit Korteweg stress.

    T = (alpha0(rho) + a1 lap(rho) + a2 |g|^2 + lam tr Dv) I + a3 g(x)g + a4 hess + 2 mu Dv,
    where lap(rho) is the trace of the supplied Hessian.
    """
    alpha0 = p.alpha0.evaluate(EvalContext(rho))
    spherical = alpha0 + p.a1 * hess.trace() + p.a2 * g.norm2() + p.lam * dv.trace()
    return (
        SymTensor3.identity(spherical)
        + p.a3 * outer(g, g)
        + p.a4 * hess
        + (2.0 * p.mu) * dv
    )


def isotropy_check(rel: TensorResidual, samples: int, seed: int) -> float:
    """Largest normalized violation of f(rho, Qg, QTQ^T) = Q f(rho, g, T) Q^T.

    Draws (rho, g, T, Q) at random; each sample's error is
    |f(rho, Qg, QTQ^T) - Q f Q^T|_inf / (|f|_inf + 1).
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        rho = float(rng.uniform(0.5, 2.0))
        g = Vec3.from_array(rng.standard_normal(3))
        t = random_symmetric(rng)
        q = random_orthogonal(int(rng.integers(0, 2**31 - 1)))
        base = rel.residual(rho, g, t)
        rotated = rel.residual(rho, g.rotate(q), t.rotate(q))
        err = (rotated - base.rotate(q)).norm_inf() / (base.norm_inf() + 1.0)
        worst = max(worst, err)
    logger.debug("isotropy check: {} samples, max error {:.3e}", samples, worst)
    return worst
