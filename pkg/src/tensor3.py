"""
Symmetric 3x3 tensor algebra for Cauchy stresses and density gradients.

Tensors are immutable values. A symmetric tensor stores its six independent
components (xx, yy, zz, xy, xz, yz); full 3x3 matrices only appear as numpy
arrays for intermediate products and rotations.
"""
import math
from dataclasses import dataclass
from typing import Iterable, Tuple, Union

import numpy as np
from scipy.stats import ortho_group

Number = Union[int, float]

# Storage order of the six independent components, shared with the solver's
# 6-vector unknowns.
COMPONENTS: Tuple[str, ...] = ("xx", "yy", "zz", "xy", "xz", "yz")
_INDEX = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))

ORTHOGONALITY_TOL = 1e-12


def _require_finite(values: Iterable[float], what: str):
    for value in values:
        if not math.isfinite(value):
            raise ValueError(f"{what} has a non-finite component: {value!r}")


@dataclass(frozen=True)
class Vec3:
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        _require_finite((self.x, self.y, self.z), "Vec3")

    @classmethod
    def from_array(cls, values) -> "Vec3":
        """Build a vector from any 3-element sequence."""
        arr = np.asarray(values, dtype=float).reshape(3)
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def norm2(self) -> float:
        """Squared Euclidean length."""
        return self.dot(self)

    def rotate(self, q: "OrthogonalMatrix") -> "Vec3":
        """Return Q v."""
        return Vec3.from_array(q.matrix @ self.to_array())

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __mul__(self, scalar: Number) -> "Vec3":
        return Vec3(self.x * scalar, self.y * scalar, self.z * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "Vec3":
        return Vec3(-self.x, -self.y, -self.z)


@dataclass(frozen=True)
class SymTensor3:
    xx: float = 0.0
    yy: float = 0.0
    zz: float = 0.0
    xy: float = 0.0
    xz: float = 0.0
    yz: float = 0.0

    def __post_init__(self):
        _require_finite(self.to_tuple(), "SymTensor3")

    @classmethod
    def zero(cls) -> "SymTensor3":
        return cls()

    @classmethod
    def identity(cls, scale: Number = 1.0) -> "SymTensor3":
        """Return scale * I."""
        s = float(scale)
        return cls(s, s, s, 0.0, 0.0, 0.0)

    @classmethod
    def from_vector(cls, values) -> "SymTensor3":
        """Build from a 6-vector ordered as COMPONENTS."""
        arr = np.asarray(values, dtype=float).reshape(6)
        return cls(*(float(v) for v in arr))

    @classmethod
    def from_matrix(cls, m) -> "SymTensor3":
        """Symmetric part of a 3x3 matrix."""
        arr = np.asarray(m, dtype=float).reshape(3, 3)
        return cls(
            float(arr[0, 0]),
            float(arr[1, 1]),
            float(arr[2, 2]),
            float(0.5 * (arr[0, 1] + arr[1, 0])),
            float(0.5 * (arr[0, 2] + arr[2, 0])),
            float(0.5 * (arr[1, 2] + arr[2, 1])),
        )

    def to_tuple(self) -> Tuple[float, ...]:
        return (self.xx, self.yy, self.zz, self.xy, self.xz, self.yz)

    def to_vector(self) -> np.ndarray:
        return np.array(self.to_tuple(), dtype=float)

    def to_matrix(self) -> np.ndarray:
        return np.array(
            [
                [self.xx, self.xy, self.xz],
                [self.xy, self.yy, self.yz],
                [self.xz, self.yz, self.zz],
            ],
            dtype=float,
        )

    def trace(self) -> float:
        return self.xx + self.yy + self.zz

    def norm_inf(self) -> float:
        """Max-abs component norm."""
        return max(abs(c) for c in self.to_tuple())

    def deviator(self) -> "SymTensor3":
        return self - SymTensor3.identity(self.trace() / 3.0)

    def apply(self, v: Vec3) -> Vec3:
        """Return T v."""
        return Vec3(
            self.xx * v.x + self.xy * v.y + self.xz * v.z,
            self.xy * v.x + self.yy * v.y + self.yz * v.z,
            self.xz * v.x + self.yz * v.y + self.zz * v.z,
        )

    def rotate(self, q: "OrthogonalMatrix") -> "SymTensor3":
        """Return Q T Q^T."""
        m = q.matrix
        return SymTensor3.from_matrix(m @ self.to_matrix() @ m.T)

    def component(self, name: str) -> float:
        return getattr(self, name)

    def __add__(self, other: "SymTensor3") -> "SymTensor3":
        return SymTensor3(*(a + b for a, b in zip(self.to_tuple(), other.to_tuple())))

    def __sub__(self, other: "SymTensor3") -> "SymTensor3":
        return SymTensor3(*(a - b for a, b in zip(self.to_tuple(), other.to_tuple())))

    def __mul__(self, scalar: Number) -> "SymTensor3":
        return SymTensor3(*(a * scalar for a in self.to_tuple()))

    __rmul__ = __mul__

    def __neg__(self) -> "SymTensor3":
        return SymTensor3(*(-a for a in self.to_tuple()))


@dataclass(frozen=True)
class InvariantSet:
    """The six scalar invariants of a (stress, density gradient) pair."""
    i1: float = 0.0
    i2: float = 0.0
    i3: float = 0.0
    i4: float = 0.0
    i5: float = 0.0
    i6: float = 0.0

    @classmethod
    def spherical(cls, phi: float) -> "InvariantSet":
        """Invariants of T = -phi I with no density gradient."""
        return cls(-3.0 * phi, 3.0 * phi ** 2, -3.0 * phi ** 3, 0.0, 0.0, 0.0)

    def to_tuple(self) -> Tuple[float, ...]:
        return (self.i1, self.i2, self.i3, self.i4, self.i5, self.i6)


@dataclass(frozen=True, eq=False)
class OrthogonalMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
        if not is_orthogonal(m):
            raise ValueError("matrix is not orthogonal to within 1e-12")
        object.__setattr__(self, "matrix", m)

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.matrix))

    def __eq__(self, other) -> bool:
        return isinstance(other, OrthogonalMatrix) and np.array_equal(self.matrix, other.matrix)


def is_orthogonal(m, tol: float = ORTHOGONALITY_TOL) -> bool:
    """Check Q^T Q = I entrywise to within tol."""
    arr = np.asarray(m, dtype=float)
    return bool(np.max(np.abs(arr.T @ arr - np.eye(3))) <= tol)


def outer(u: Vec3, v: Vec3) -> SymTensor3:
    """Symmetrized outer product (u (x) v + v (x) u) / 2.

    For u = v this is exactly u (x) u: each entry is (2 u_i u_j) / 2.
    """
    a = u.to_array()
    b = v.to_array()
    m = np.outer(a, b)
    return SymTensor3.from_matrix(m)


def matmul(a: SymTensor3, b: SymTensor3) -> np.ndarray:
    """General 3x3 product A B (not symmetric unless A and B commute)."""
    return a.to_matrix() @ b.to_matrix()


def square(t: SymTensor3) -> SymTensor3:
    """T^2 as a symmetric tensor."""
    return SymTensor3.from_matrix(matmul(t, t))


def invariants(t: SymTensor3, g: Vec3) -> InvariantSet:
    """Compute tr T, tr T^2, tr T^3, g.g, g.(T g) and g.(T^2 g)."""
    tm = t.to_matrix()
    t2 = tm @ tm
    ga = g.to_array()
    tg = tm @ ga
    return InvariantSet(
        i1=float(np.trace(tm)),
        i2=float(np.trace(t2)),
        i3=float(np.trace(t2 @ tm)),
        i4=float(ga @ ga),
        i5=float(ga @ tg),
        i6=float(tg @ tg),
    )


def random_orthogonal(seed: int) -> OrthogonalMatrix:
    """Haar-distributed sample from O(3), deterministic for a given seed.

    Both determinants occur with equal probability.
    """
    q = ortho_group.rvs(dim=3, random_state=np.random.default_rng(seed))
    return OrthogonalMatrix(np.asarray(q, dtype=float))


def random_symmetric(rng: np.random.Generator, scale: float = 1.0) -> SymTensor3:
    """Symmetric tensor with standard normal components times scale."""
    return SymTensor3.from_vector(scale * rng.standard_normal(6))
