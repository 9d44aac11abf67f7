"""
Geometry of the sphere, oblique, Stiefel, Grassmann and torus manifolds.

All points are stored as complex ``n x d`` matrices. The metric everywhere is
the real trace inner product ``Re Tr(Z1^H Z2)``.

Tangent spaces
--------------
Sphere / Oblique
    ``diag(X^H Z) = 0`` per column (full complex orthogonality), projection
    ``Z - X diag(X^H Z)``.
Torus
    ``Re(conj(x_k) z_k) = 0``, projection ``Z - X Re(diag(X^H Z))``. With one
    row per column the complex rule above would annihilate every direction,
    so the torus keeps the phase direction ``i x_k``.
Stiefel
    ``X^H Z + Z^H X = 0``, projection ``Z - X herm(X^H Z)``.
Grassmann
    Horizontal space ``X^H Z = 0`` on Stiefel representatives, projection
    ``Z - X X^H Z``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from qmo.exceptions import (
    DegenerateStepError,
    DimensionError,
    ManifoldMembershipError,
    PreconditionError,
    UsageError,
)

MEMBERSHIP_TOL = 1e-12
TANGENT_TOL = 1e-12
DEGENERATE_NORM = 1e-14
SKEW_PRECONDITION_TOL = 1e-10
ORTHO_PART_RTOL = 1e-12
# how far a tangent's anchor may sit from the point it is used at
ANCHOR_TOL = 1e-10


class Kind(str, enum.Enum):
    SPHERE = "sphere"
    OBLIQUE = "oblique"
    STIEFEL = "stiefel"
    GRASSMANNIAN = "grassmannian"
    TORUS = "torus"


class Field(str, enum.Enum):
    REAL = "real"
    COMPLEX = "complex"


_COLUMNWISE = (Kind.SPHERE, Kind.OBLIQUE, Kind.TORUS)
_ORTHONORMAL = (Kind.STIEFEL, Kind.GRASSMANNIAN)


@dataclass(frozen=True)
class ManifoldDescriptor:
    """Which manifold a matrix lives on: kind, ``n`` rows, ``d`` columns, field."""

    kind: Kind
    n: int
    d: int
    field: Field = Field.COMPLEX

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "field", Field(self.field))
        if int(self.n) != self.n or int(self.d) != self.d or self.n < 1 or self.d < 1:
            raise DimensionError(f"n and d must be positive integers, got n={self.n}, d={self.d}")
        if self.kind is Kind.SPHERE and self.d != 1:
            raise DimensionError("a sphere point has exactly one column (d = 1)")
        if self.kind is Kind.TORUS and (self.n != 1 or self.field is not Field.COMPLEX):
            raise DimensionError("a torus point is a complex 1 x N row (n = 1, complex field)")
        if self.kind in _ORTHONORMAL and self.d > self.n:
            raise DimensionError(f"{self.kind.value} needs d <= n, got d={self.d} > n={self.n}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.d)

    @property
    def columnwise(self) -> bool:
        """True for the product-of-spheres family (sphere, oblique, torus)."""
        return self.kind in _COLUMNWISE

    @classmethod
    def sphere(cls, n: int, field: Field = Field.COMPLEX) -> "ManifoldDescriptor":
        return cls(Kind.SPHERE, n, 1, field)

    @classmethod
    def oblique(cls, n: int, d: int, field: Field = Field.COMPLEX) -> "ManifoldDescriptor":
        return cls(Kind.OBLIQUE, n, d, field)

    @classmethod
    def stiefel(cls, n: int, p: int, field: Field = Field.COMPLEX) -> "ManifoldDescriptor":
        return cls(Kind.STIEFEL, n, p, field)

    @classmethod
    def grassmann(cls, n: int, p: int, field: Field = Field.COMPLEX) -> "ManifoldDescriptor":
        return cls(Kind.GRASSMANNIAN, n, p, field)

    @classmethod
    def torus(cls, N: int) -> "ManifoldDescriptor":
        return cls(Kind.TORUS, 1, N, Field.COMPLEX)


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=np.complex128, copy=True)
    out.setflags(write=False)
    return out


def membership_error(descriptor: ManifoldDescriptor, X: np.ndarray) -> float:
    """Largest absolute violation of the manifold constraint at ``X``."""
    if descriptor.columnwise:
        col_sq = np.sum(np.abs(X) ** 2, axis=0)
        return float(np.max(np.abs(col_sq - 1.0)))
    gram = X.conj().T @ X
    return float(np.max(np.abs(gram - np.eye(descriptor.d))))


def tangent_error(descriptor: ManifoldDescriptor, X: np.ndarray, Z: np.ndarray) -> float:
    """Largest absolute violation of the tangent-space constraint of ``Z`` at ``X``."""
    if descriptor.kind is Kind.TORUS:
        return float(np.max(np.abs(np.real(np.sum(X.conj() * Z, axis=0)))))
    if descriptor.columnwise:
        return float(np.max(np.abs(np.sum(X.conj() * Z, axis=0))))
    XhZ = X.conj().T @ Z
    if descriptor.kind is Kind.STIEFEL:
        return float(np.max(np.abs(XhZ + XhZ.conj().T)))
    return float(np.max(np.abs(XhZ)))


@dataclass(frozen=True, eq=False)
class ManifoldPoint:
    """A matrix certified to lie on the manifold described by ``descriptor``."""

    descriptor: ManifoldDescriptor
    X: np.ndarray

    def __post_init__(self):
        X = _frozen(self.X)
        if X.ndim == 1 and self.descriptor.d == 1:
            X = _frozen(X.reshape(-1, 1))
        if X.shape != self.descriptor.shape:
            raise DimensionError(f"point has shape {X.shape}, descriptor wants {self.descriptor.shape}")
        if self.descriptor.field is Field.REAL and np.any(X.imag != 0):
            raise ManifoldMembershipError("real-field point has a nonzero imaginary part")
        err = membership_error(self.descriptor, X)
        if not err <= MEMBERSHIP_TOL:
            raise ManifoldMembershipError(
                f"matrix is off the {self.descriptor.kind.value} manifold by {err:.3e}"
            )
        object.__setattr__(self, "X", X)

    def same_as(self, other: "ManifoldPoint", atol: float = 0.0) -> bool:
        if self.descriptor != other.descriptor:
            return False
        if atol == 0.0:
            return self is other or bool(np.array_equal(self.X, other.X))
        return bool(np.max(np.abs(self.X - other.X)) <= atol)


@dataclass(frozen=True, eq=False)
class TangentVector:
    """An ambient matrix ``Z`` lying in the tangent space at ``at``.

    The tangency check is relative to ``max(1, ||Z||_F)`` so that large
    gradients are not rejected for rounding noise.
    """

    at: ManifoldPoint
    Z: np.ndarray

    def __post_init__(self):
        Z = _frozen(self.Z)
        if Z.ndim == 1 and self.at.descriptor.d == 1:
            Z = _frozen(Z.reshape(-1, 1))
        if Z.shape != self.at.descriptor.shape:
            raise DimensionError(f"tangent has shape {Z.shape}, point has {self.at.descriptor.shape}")
        err = tangent_error(self.at.descriptor, self.at.X, Z)
        if not err <= TANGENT_TOL * max(1.0, float(np.linalg.norm(Z))):
            raise PreconditionError(f"matrix is not tangent at the anchor point (violation {err:.3e})")
        object.__setattr__(self, "Z", Z)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.Z))


def _as_ambient(point: ManifoldPoint, Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.complex128)
    if Z.ndim == 1 and point.descriptor.d == 1:
        Z = Z.reshape(-1, 1)
    if Z.shape != point.descriptor.shape:
        raise DimensionError(f"ambient matrix has shape {Z.shape}, expected {point.descriptor.shape}")
    if point.descriptor.field is Field.REAL:
        Z = Z.real.astype(np.complex128)
    return Z


def _project(descriptor: ManifoldDescriptor, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    kind = descriptor.kind
    if kind is Kind.TORUS:
        return Z - X * np.real(np.sum(X.conj() * Z, axis=0, keepdims=True))
    if descriptor.columnwise:
        return Z - X * np.sum(X.conj() * Z, axis=0, keepdims=True)
    XhZ = X.conj().T @ Z
    if kind is Kind.STIEFEL:
        return Z - X @ (0.5 * (XhZ + XhZ.conj().T))
    return Z - X @ XhZ


def project_tangent(point: ManifoldPoint, Z) -> TangentVector:
    """Orthogonal projection of an ambient matrix onto the tangent space at ``point``."""
    Z = _as_ambient(point, Z)
    return TangentVector(point, _project(point.descriptor, point.X, Z))


def riemannian_grad(point: ManifoldPoint, egrad) -> TangentVector:
    """Riemannian gradient: the tangent projection of the Euclidean gradient."""
    return project_tangent(point, egrad)


def metric(Z1: TangentVector, Z2: TangentVector) -> float:
    """Real trace inner product ``Re Tr(Z1^H Z2)`` between tangents at one point."""
    if not Z1.at.same_as(Z2.at):
        raise UsageError("tangent vectors are anchored at different points")
    return inner(Z1.Z, Z2.Z)


def inner(A: np.ndarray, B: np.ndarray) -> float:
    """``Re Tr(A^H B)`` for raw arrays."""
    return float(np.real(np.vdot(A, B)))


def retract_normalize(point: ManifoldPoint, xi: TangentVector, alpha: float) -> ManifoldPoint:
    """Column-wise normalization retraction ``(x_k + alpha xi_k) / ||x_k + alpha xi_k||``."""
    if not point.descriptor.columnwise:
        raise UsageError("normalization retraction is defined for sphere, oblique and torus only")
    _check_step(point, xi, alpha)
    if alpha == 0:
        return point
    Y = point.X + alpha * xi.Z
    norms = np.linalg.norm(Y, axis=0, keepdims=True)
    if np.any(norms < DEGENERATE_NORM):
        raise DegenerateStepError("a column of X + alpha*Xi vanished")
    return ManifoldPoint(point.descriptor, Y / norms)


def skew_generator(x, v) -> np.ndarray:
    """Anti-Hermitian generator ``A`` with ``A x = v`` whose exponential traces the great circle.

    For ``x^H v = 0`` this is ``v x^H - x v^H`` (``v x^T - x v^T`` for real input).
    When ``v`` carries a phase component ``c x`` with ``c = i*Im(x^H v)`` (the
    torus case) the generator gains ``c (x x^H - w w^H)``, where ``w`` is the
    unit part of ``v`` orthogonal to ``x``, so ``exp(tA) x`` still equals
    ``cos(t|v|) x + sin(t|v|) v/|v|``.

    Raises
    ------
    PreconditionError
        If ``x`` is not unit norm or ``Re(x^H v) != 0`` beyond 1e-10.
    """
    x = np.asarray(x, dtype=np.complex128).reshape(-1)
    v = np.asarray(v, dtype=np.complex128).reshape(-1)
    if x.shape != v.shape:
        raise DimensionError(f"x has length {x.size}, v has length {v.size}")
    return skew_generators(x[:, None], v[:, None])[0]


def skew_generators(X, V) -> np.ndarray:
    """Stack of :func:`skew_generator` over the columns of ``X`` and ``V``; shape ``(d, n, n)``."""
    X = np.asarray(X, dtype=np.complex128)
    V = np.asarray(V, dtype=np.complex128)
    if X.shape != V.shape or X.ndim != 2:
        raise DimensionError(f"X is {X.shape}, V is {V.shape}")
    if np.max(np.abs(np.linalg.norm(X, axis=0) - 1.0)) > SKEW_PRECONDITION_TOL:
        raise PreconditionError("skew_generator needs a unit-norm x")
    xv = np.sum(X.conj() * V, axis=0)
    vn = np.linalg.norm(V, axis=0)
    if np.any(np.abs(xv.real) > SKEW_PRECONDITION_TOL * np.maximum(1.0, vn)):
        raise PreconditionError("v is not tangent to the sphere at x")
    x, v = X.T[:, :, None], V.T[:, :, None]  # (d, n, 1)
    c = (1j * xv.imag)[:, None, None]
    w = v - x * xv[:, None, None]
    A = w @ _h(x) - x @ _h(w) + c * (x @ _h(x))
    # a w at rounding level has no direction (always so when len(x) == 1)
    wn = np.linalg.norm(w, axis=(1, 2))
    live = wn > ORTHO_PART_RTOL * vn
    u = np.where(live[:, None, None], w / np.where(live, wn, 1.0)[:, None, None], 0.0)
    A = A - c * (u @ _h(u))
    # exact anti-Hermitian part; removes rounding asymmetry
    return 0.5 * (A - _h(A))


def _h(A: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(A, -1, -2))


def _check_step(point: ManifoldPoint, V: TangentVector, t: float) -> None:
    if V.Z.shape != point.descriptor.shape:
        raise DimensionError("tangent shape does not match point")
    if not V.at.same_as(point, atol=ANCHOR_TOL):
        raise UsageError("tangent vector is anchored at a different point")
    if not np.isfinite(t):
        raise DegenerateStepError(f"step must be finite, got {t}")


def retract_exp(point: ManifoldPoint, V: TangentVector, t: float) -> ManifoldPoint:
    """Column-wise sphere exponential map ``cos(t|v|) x + sin(t|v|) v/|v|``.

    Columns with ``|v_k| < 1e-14`` are left unchanged.
    """
    if not point.descriptor.columnwise:
        raise UsageError("exponential retraction is defined for sphere, oblique and torus only")
    _check_step(point, V, t)
    if t == 0:
        return point
    X = point.X
    speed = np.linalg.norm(V.Z, axis=0)
    moving = speed >= DEGENERATE_NORM
    Y = np.array(X, copy=True)
    s = speed[moving]
    Y[:, moving] = np.cos(t * s) * X[:, moving] + np.sin(t * s) * (V.Z[:, moving] / s)
    # the formula multiplies a column-norm error by up to ~1.2 per step; renormalize
    Y[:, moving] /= np.linalg.norm(Y[:, moving], axis=0)
    return ManifoldPoint(point.descriptor, Y)


def retract_stiefel(point: ManifoldPoint, V: TangentVector, t: float) -> ManifoldPoint:
    """QR retraction ``qf(X + tV)`` with the R diagonal made real positive."""
    if point.descriptor.kind not in _ORTHONORMAL:
        raise UsageError("QR retraction is defined for Stiefel and Grassmann only")
    _check_step(point, V, t)
    if t == 0:
        return point
    Q, R = np.linalg.qr(point.X + t * V.Z)
    rd = np.diag(R)
    mags = np.abs(rd)
    if np.any(mags < DEGENERATE_NORM):
        raise DegenerateStepError("X + tV is rank deficient")
    return ManifoldPoint(point.descriptor, Q * (rd / mags))


def vector_transport(src: ManifoldPoint, dst: ManifoldPoint, V: TangentVector) -> TangentVector:
    """Projection transport of ``V`` from ``src`` into the tangent space at ``dst``."""
    if src.descriptor != dst.descriptor:
        raise UsageError("transport between different manifolds")
    if not V.at.same_as(src):
        raise UsageError("tangent vector is not anchored at the source point")
    return project_tangent(dst, V.Z)


def random_point(descriptor: ManifoldDescriptor, seed: int) -> ManifoldPoint:
    """Deterministic random point for a given seed."""
    rng = np.random.default_rng(seed)
    n, d = descriptor.shape
    if descriptor.kind is Kind.TORUS:
        return ManifoldPoint(descriptor, np.exp(1j * rng.uniform(0.0, 2 * np.pi, size=(1, d))))
    G = rng.standard_normal((n, d))
    if descriptor.field is Field.COMPLEX:
        G = (G + 1j * rng.standard_normal((n, d))) / np.sqrt(2)
    if descriptor.columnwise:
        return ManifoldPoint(descriptor, G / np.linalg.norm(G, axis=0, keepdims=True))
    Q, R = np.linalg.qr(G)
    rd = np.diag(R)
    return ManifoldPoint(descriptor, Q * (rd / np.abs(rd)))
