"""
Riemannian gradient descent and conjugate gradient with Armijo backtracking.

The same loop drives two backends. ``classical`` works on matrices;
``quantum`` keeps the iterate as an :class:`~qmo.qstate.EncodedState`,
reads the objective out as expectation values, takes inner products as state
overlaps and, on sphere-like manifolds, projects and retracts with the
register operators. Stiefel and Grassmann iterates have no register
projection or retraction, so those two steps run on the decoded matrix.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, fields, replace
from typing import Any, Callable, NamedTuple

import numpy as np

from qmo import manifolds as mf
from qmo import qstate as qs
from qmo.exceptions import DegenerateStepError, UsageError
from qmo.manifolds import Kind, ManifoldPoint, TangentVector
from qmo.problems import TraceObjective


class Method(str, enum.Enum):
    GRADIENT_DESCENT = "gradient_descent"
    CONJUGATE_GRADIENT = "conjugate_gradient"


class Retraction(str, enum.Enum):
    NORMALIZE = "normalize"
    EXPONENTIAL = "exponential"
    QR = "qr"


class CGVariant(str, enum.Enum):
    FLETCHER_REEVES = "fletcher_reeves"
    POLAK_RIBIERE = "polak_ribiere"


class Backend(str, enum.Enum):
    CLASSICAL = "classical"
    QUANTUM = "quantum"


class Termination(str, enum.Enum):
    GRAD_TOL = "GradTol"
    MAX_ITERS = "MaxIters"
    LINE_SEARCH_FAIL = "LineSearchFail"


_ALIASES = {
    "gradientdescent": "gradient_descent", "gd": "gradient_descent",
    "conjugategradient": "conjugate_gradient", "cg": "conjugate_gradient",
    "exp": "exponential", "fletcherreeves": "fletcher_reeves", "fr": "fletcher_reeves",
    "polakribiere": "polak_ribiere", "pr": "polak_ribiere", "pr+": "polak_ribiere",
    "quantumemulated": "quantum", "quantum_emulated": "quantum",
}


def _enum(cls, value):
    if value is None or isinstance(value, cls):
        return value
    key = str(value).strip().lower()
    return cls(_ALIASES.get(key, key))


@dataclass(frozen=True)
class SolverConfig:
    method: Method = Method.CONJUGATE_GRADIENT
    retraction: Retraction | None = None  # None: exponential on sphere-like, QR otherwise
    max_iters: int = 500
    grad_tol: float = 1e-8
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    initial_step: float = 1.0
    cg_variant: CGVariant = CGVariant.POLAK_RIBIERE
    backend: Backend = Backend.CLASSICAL
    seed: int = 0
    max_backtracks: int = 60
    init: str = "random"

    def __post_init__(self):
        for name, cls in (("method", Method), ("retraction", Retraction),
                          ("cg_variant", CGVariant), ("backend", Backend)):
            object.__setattr__(self, name, _enum(cls, getattr(self, name)))
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError("max_iters must be an integer >= 1")
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must lie in (0, 1)")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if not self.initial_step > 0 or not self.grad_tol >= 0:
            raise ValueError("initial_step must be positive and grad_tol nonnegative")
        if self.init not in ("random", "uniform"):
            raise ValueError("init must be 'random' or 'uniform'")

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> "SolverConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown solver option(s): {', '.join(sorted(unknown))}")
        return cls(**doc)

    def to_dict(self) -> dict[str, Any]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.value if isinstance(v, enum.Enum) else v
        return out

    def with_(self, **changes) -> "SolverConfig":
        return replace(self, **changes)


class IterRecord(NamedTuple):
    iter: int
    objective: float
    grad_norm: float
    step: float


@dataclass(frozen=True, eq=False)
class RunReport:
    """Per-iterate trace (natural-sense objective) and the final point."""

    iterates: tuple[IterRecord, ...]
    final_point: ManifoldPoint
    termination: Termination
    wall_time: float
    sense: str = "min"

    @property
    def objective(self) -> float:
        return self.iterates[-1].objective

    @property
    def iters(self) -> int:
        return self.iterates[-1].iter

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.iterates])


class LineSearchResult(NamedTuple):
    ok: bool
    step: float
    point: Any
    value: float
    backtracks: int


def line_search(
    point,
    direction,
    objective_fn: Callable[[Any], float],
    retraction: Callable[[Any, Any, float], Any],
    config: SolverConfig,
    *,
    f0: float | None = None,
    dir_sqnorm: float | None = None,
) -> LineSearchResult:
    """Armijo backtracking on the retraction curve.

    Accepts the first ``t = initial_step * backtrack_factor**m`` with
    ``f(R(t d)) <= f(x) - armijo_c * t * ||d||^2``. ``objective_fn`` is in the
    minimization sense. A retraction that degenerates counts as a rejection.

    Iterates carry rounding error of order ``eps`` off the manifold, which
    moves ``f`` by about ``eps * |f|``. Decreases below that cannot be
    certified, so the search fails once ``||grad||`` is near
    ``sqrt(eps * |f| * L)`` (``L`` the curvature scale).
    """
    if f0 is None:
        f0 = objective_fn(point)
    if dir_sqnorm is None:
        dir_sqnorm = direction.norm ** 2
    t = config.initial_step
    for m in range(config.max_backtracks + 1):
        try:
            cand = retraction(point, direction, t)
        except DegenerateStepError:
            cand = None
        if cand is not None:
            f = objective_fn(cand)
            if f <= f0 - config.armijo_c * t * dir_sqnorm:
                return LineSearchResult(True, t, cand, f, m)
        t *= config.backtrack_factor
    return LineSearchResult(False, 0.0, point, f0, config.max_backtracks)


def cg_beta(variant: CGVariant, g_new_sq: float, g_new_dot_old: float, g_old_sq: float) -> float:
    if g_old_sq == 0.0:
        return 0.0
    if variant is CGVariant.FLETCHER_REEVES:
        return g_new_sq / g_old_sq
    return max(0.0, (g_new_sq - g_new_dot_old) / g_old_sq)


def cg_direction(
    g_new: TangentVector,
    g_old: TangentVector | None,
    dir_old: TangentVector | None,
    variant: CGVariant = CGVariant.POLAK_RIBIERE,
    *,
    g_old_sqnorm: float | None = None,
) -> TangentVector:
    """Conjugate direction ``-g_new + beta * dir_old`` with descent restart.

    ``g_old`` and ``dir_old`` must already be transported to the point of
    ``g_new``. ``g_old_sqnorm`` defaults to the squared norm of the
    transported ``g_old``.
    """
    return _conjugate(_ClassicalOps, g_new.at, g_new, g_old, dir_old, _enum(CGVariant, variant), g_old_sqnorm)


def _conjugate(ops, p, g, g_old, d_old, variant, g_old_sq):
    steepest = ops.lincomb(p, [(-1.0, g)])
    if g_old is None or d_old is None:
        return steepest
    g_sq = ops.inner(p, g, g)
    if g_old_sq is None:
        g_old_sq = ops.inner(p, g_old, g_old)
    beta = cg_beta(variant, g_sq, ops.inner(p, g, g_old), g_old_sq)
    if beta == 0.0:
        return steepest
    d = ops.lincomb(p, [(-1.0, g), (beta, d_old)])
    if ops.inner(p, d, steepest) <= 0.0:
        return steepest
    return d


# --------------------------------------------------------------------------
# backends
# --------------------------------------------------------------------------


class _ClassicalOps:
    """Tangent arithmetic on :class:`TangentVector`."""

    @staticmethod
    def inner(p, a: TangentVector, b: TangentVector) -> float:
        return mf.inner(a.Z, b.Z)

    @staticmethod
    def lincomb(p, terms) -> TangentVector:
        Z = sum(c * v.Z for c, v in terms)
        return TangentVector(p, Z)


def _default_retraction(desc: mf.ManifoldDescriptor) -> Retraction:
    return Retraction.EXPONENTIAL if desc.columnwise else Retraction.QR


def _check_retraction(desc: mf.ManifoldDescriptor, r: Retraction) -> None:
    ok = (Retraction.NORMALIZE, Retraction.EXPONENTIAL) if desc.columnwise else (Retraction.QR,)
    if r not in ok:
        raise UsageError(f"{r.value} retraction does not apply to the {desc.kind.value} manifold")


class ClassicalBackend(_ClassicalOps):
    def __init__(self, obj: TraceObjective, retraction: Retraction):
        self.obj = obj
        self.desc = obj.descriptor
        self._retract = {
            Retraction.NORMALIZE: mf.retract_normalize,
            Retraction.EXPONENTIAL: mf.retract_exp,
            Retraction.QR: mf.retract_stiefel,
        }[retraction]

    def lift(self, point: ManifoldPoint) -> ManifoldPoint:
        return point

    def to_point(self, p: ManifoldPoint) -> ManifoldPoint:
        return p

    def value(self, p: ManifoldPoint) -> float:
        return self.obj.value(p.X)

    def grad(self, p: ManifoldPoint) -> TangentVector:
        return mf.riemannian_grad(p, self.obj.sign * self.obj.egrad(p.X))

    def retract(self, p: ManifoldPoint, d: TangentVector, t: float) -> ManifoldPoint:
        return self._retract(p, d, t)

    def transport(self, src: ManifoldPoint, dst: ManifoldPoint, v: TangentVector) -> TangentVector:
        return mf.vector_transport(src, dst, v)


class QuantumBackend:
    """Iterates and tangents are encoded states; the sentinel stands for zero."""

    def __init__(self, obj: TraceObjective, retraction: Retraction):
        self.obj = obj
        self.desc = obj.descriptor
        self.shape = qs.RegisterShape(self.desc.n, self.desc.d)
        self.retraction = retraction
        self.real_tangent = self.desc.kind is Kind.TORUS

    def lift(self, point: ManifoldPoint) -> qs.EncodedState:
        return qs.encode(point.X)

    def to_point(self, s: qs.EncodedState) -> ManifoldPoint:
        return ManifoldPoint(self.desc, qs.decode(s))

    def value(self, s: qs.EncodedState) -> float:
        return self.obj.value_quantum(s)

    def _encode(self, Z: np.ndarray) -> qs.EncodedState:
        return qs.encode_tangent(Z, self.shape)

    def grad(self, s: qs.EncodedState) -> qs.EncodedState:
        X = qs.decode(s)
        eg = self.obj.sign * self.obj.egrad(X)
        if self.desc.columnwise:
            return qs.quantum_project(s, self._encode(eg), real_tangent=self.real_tangent)
        return self._encode(mf.project_tangent(self.to_point(s), eg).Z)

    def inner(self, s, a: qs.EncodedState, b: qs.EncodedState) -> float:
        return qs.overlap_inner_product(a, b)

    def lincomb(self, s, terms) -> qs.EncodedState:
        Z = sum(c * qs.decode(v) for c, v in terms)
        return self._encode(Z)

    def retract(self, s: qs.EncodedState, d: qs.EncodedState, t: float) -> qs.EncodedState:
        point = self.to_point(s)
        V = TangentVector(point, qs.decode(d))
        if self.retraction is Retraction.EXPONENTIAL:
            return qs.quantum_retract(s, V, t)
        if self.retraction is Retraction.NORMALIZE:
            return qs.encode(mf.retract_normalize(point, V, t).X)
        return qs.encode(mf.retract_stiefel(point, V, t).X)

    def transport(self, src, dst: qs.EncodedState, v: qs.EncodedState) -> qs.EncodedState:
        if self.desc.columnwise:
            return qs.quantum_project(dst, v, real_tangent=self.real_tangent)
        return self._encode(mf.project_tangent(self.to_point(dst), qs.decode(v)).Z)


def make_backend(obj: TraceObjective, config: SolverConfig):
    retraction = config.retraction or _default_retraction(obj.descriptor)
    _check_retraction(obj.descriptor, retraction)
    cls = QuantumBackend if config.backend is Backend.QUANTUM else ClassicalBackend
    return cls(obj, retraction)


def initial_point(obj: TraceObjective, config: SolverConfig) -> ManifoldPoint:
    desc = obj.descriptor
    if config.init == "uniform":
        if not desc.columnwise:
            raise UsageError("uniform warm start needs a sphere, oblique or torus manifold")
        return ManifoldPoint(desc, qs.decode(qs.prepare_uniform(qs.RegisterShape(desc.n, desc.d))))
    return mf.random_point(desc, config.seed)


def solve(
    obj: TraceObjective,
    init: ManifoldPoint | None = None,
    config: SolverConfig | None = None,
    callback: Callable[[int, ManifoldPoint], None] | None = None,
) -> RunReport:
    """Minimize (or maximize, per ``obj.sense``) over ``obj.descriptor``.

    ``callback(iter, point)`` sees every accepted iterate, including the start.
    """
    config = config or SolverConfig()
    if init is None:
        init = initial_point(obj, config)
    if init.descriptor != obj.descriptor:
        raise UsageError("initial point lives on a different manifold than the objective")
    be = make_backend(obj, config)
    sign = obj.sign
    start = time.perf_counter()

    def cost(p) -> float:
        return sign * be.value(p)

    p = be.lift(init)
    f = cost(p)
    g = be.grad(p)
    g_sq = be.inner(p, g, g)
    records = [IterRecord(0, sign * f, float(np.sqrt(g_sq)), 0.0)]
    d_old = g_old = g_old_sq = None
    if callback:
        callback(0, be.to_point(p))
    termination = Termination.MAX_ITERS
    cg = config.method is Method.CONJUGATE_GRADIENT

    for it in range(1, config.max_iters + 1):
        if np.sqrt(g_sq) <= config.grad_tol:
            termination = Termination.GRAD_TOL
            break
        d = _conjugate(be, p, g, g_old, d_old, config.cg_variant, g_old_sq) if cg else be.lincomb(p, [(-1.0, g)])
        ls = line_search(p, d, cost, be.retract, config, f0=f, dir_sqnorm=be.inner(p, d, d))
        if not ls.ok:
            termination = Termination.LINE_SEARCH_FAIL
            break
        p_new = ls.point
        g_new = be.grad(p_new)
        if cg:
            g_old = be.transport(p, p_new, g)
            d_old = be.transport(p, p_new, d)
            g_old_sq = g_sq
        p, f, g = p_new, ls.value, g_new
        g_sq = be.inner(p, g, g)
        records.append(IterRecord(it, sign * f, float(np.sqrt(g_sq)), ls.step))
        if callback:
            callback(it, be.to_point(p))
    else:
        if np.sqrt(g_sq) <= config.grad_tol:
            termination = Termination.GRAD_TOL

    return RunReport(
        iterates=tuple(records),
        final_point=be.to_point(p),
        termination=termination,
        wall_time=time.perf_counter() - start,
        sense=obj.sense,
    )


def backend_gaps(a: RunReport, b: RunReport) -> np.ndarray:
    """Elementwise objective differences; the shorter trace is held at its final value."""
    fa, fb = a.objectives, b.objectives
    m = max(fa.size, fb.size)
    fa = np.pad(fa, (0, m - fa.size), mode="edge")
    fb = np.pad(fb, (0, m - fb.size), mode="edge")
    return np.abs(fa - fb)


def is_monotone(report: RunReport, rtol: float = 0.0) -> bool:
    """Minimization-sense objective never increases by more than ``rtol * |f|`` per step.

    The recorded objectives are direct evaluations, so a few ulps of noise
    can appear once the run sits at the optimum.
    """
    s = 1.0 if report.sense == "min" else -1.0
    f = s * report.objectives
    return bool(np.all(np.diff(f) <= rtol * np.abs(f[:-1])))
