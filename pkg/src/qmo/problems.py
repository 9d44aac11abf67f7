"""
Trace-form design problems with classical and statevector evaluators.

Each problem exposes its natural optimization sense: the eigenstate, Grassmann
and pilot objectives are minimized, beamforming power and RIS gain are
maximized. Euclidean gradients follow the real-trace convention
``f(X + E) = f(X) + Re Tr(G^H E) + o(E)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from qmo.exceptions import DimensionError, PreconditionError, SentinelStateError
from qmo.manifolds import ManifoldDescriptor, ManifoldPoint
from qmo.qstate import EncodedState, IndexedOperator, expectation

HERMITIAN_TOL = 1e-12


def _mat(X) -> np.ndarray:
    if isinstance(X, ManifoldPoint):
        return X.X
    X = np.asarray(X, dtype=np.complex128)
    return X.reshape(-1, 1) if X.ndim == 1 else X


def _live(state: EncodedState) -> EncodedState:
    if state.is_sentinel:
        raise SentinelStateError("objective evaluated on the zero-tangent sentinel")
    return state


def _check_rows(X: np.ndarray, n: int, what: str) -> None:
    if X.shape[0] != n:
        raise DimensionError(f"{what} expects {n} rows, got {X.shape[0]}")


def _is_hermitian(A: np.ndarray) -> bool:
    return A.shape[0] == A.shape[1] and np.max(np.abs(A - A.conj().T), initial=0.0) <= HERMITIAN_TOL


def index_expectations(state: EncodedState, B) -> np.ndarray:
    """Table ``E[k, i] = <Psi| |k><i| (x) B |Psi>`` for all index pairs.

    One contraction of the block amplitudes; agrees entrywise with
    :func:`qmo.qstate.expectation` on the corresponding operators.
    """
    _live(state)
    n, d = state.shape.n, state.shape.d
    B = np.asarray(B, dtype=np.complex128)
    if B.shape != (n, n):
        raise DimensionError(f"column operator must be {n} x {n}")
    P = state.blocks()[:d, :n]
    return P.conj() @ B @ P.T


# --------------------------------------------------------------------------
# many-body eigenstate (Stiefel) and its Grassmann reduction
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EigenstateProblem:
    """``min 1/2 Re Tr(X^H H X K)`` over ``St(n, p)``."""

    H: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        H = np.asarray(self.H, dtype=np.complex128)
        K = np.asarray(self.K, dtype=float)
        if K.ndim == 1:
            K = np.diag(K)
        if not _is_hermitian(H):
            raise PreconditionError("H must be Hermitian")
        k = np.diag(K)
        if np.any(K - np.diag(k)) or np.any(k <= 0) or np.any(np.diff(k) >= 0):
            raise PreconditionError("K must be diagonal with strictly decreasing positive entries")
        if K.shape[0] > H.shape[0]:
            raise DimensionError("p exceeds n")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "K", K)

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def p(self) -> int:
        return self.K.shape[0]


def eigenstate_objective(prob: EigenstateProblem, X) -> float:
    X = _mat(X)
    _check_rows(X, prob.n, "eigenstate objective")
    return 0.5 * float(np.real(np.trace(X.conj().T @ prob.H @ X @ prob.K)))


def eigenstate_egrad(prob: EigenstateProblem, X) -> np.ndarray:
    return prob.H @ _mat(X) @ prob.K


def eigenstate_objective_quantum(prob: EigenstateProblem, state: EncodedState) -> float:
    """``1/2 scale^2 <Psi| K (x) H |Psi>``."""
    val = expectation(_live(state), IndexedOperator(prob.K, prob.H))
    return 0.5 * state.scale**2 * val.real


def eigenstate_optimum(prob: EigenstateProblem) -> float:
    """Ascending eigenvalues paired with the descending weights of ``K``."""
    lam = np.linalg.eigvalsh(prob.H)[: prob.p]
    return 0.5 * float(np.sum(np.diag(prob.K) * lam))


def grassmann_objective(prob: EigenstateProblem, X) -> float:
    X = _mat(X)
    _check_rows(X, prob.n, "grassmann objective")
    return 0.5 * float(np.real(np.trace(X.conj().T @ prob.H @ X)))


def grassmann_egrad(prob: EigenstateProblem, X) -> np.ndarray:
    return prob.H @ _mat(X)


def grassmann_objective_quantum(prob: EigenstateProblem, state: EncodedState) -> float:
    val = expectation(_live(state), IndexedOperator(np.eye(state.shape.d), prob.H))
    return 0.5 * state.scale**2 * val.real


def grassmann_optimum(prob: EigenstateProblem) -> float:
    return 0.5 * float(np.sum(np.linalg.eigvalsh(prob.H)[: prob.p]))


# --------------------------------------------------------------------------
# pilot design (oblique)
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PilotProblem:
    """Pilot contamination over ``OB(T, K_users)`` with fading ``beta`` (L x K_users).

    ``require_overloaded`` enforces ``K_users > T``, the regime in which
    orthogonal pilots run out.
    """

    beta: np.ndarray
    T: int
    require_overloaded: bool = True

    def __post_init__(self):
        beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        if np.any(beta < 0):
            raise PreconditionError("fading coefficients must be nonnegative")
        if self.T < 1:
            raise DimensionError("pilot length T must be positive")
        if self.require_overloaded and beta.shape[1] <= self.T:
            raise DimensionError(f"pilot design needs K_users > T, got K_users={beta.shape[1]}, T={self.T}")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

    @property
    def L(self) -> int:
        return self.beta.shape[0]

    @property
    def K_users(self) -> int:
        return self.beta.shape[1]

    @property
    def weights(self) -> np.ndarray:
        """Per-user aggregate fading ``w_k = sum_l beta[l, k]``."""
        return self.beta.sum(axis=0)

    @property
    def B_w(self) -> np.ndarray:
        return np.diag(self.weights)

    @property
    def offset(self) -> float:
        """``sum_{l,k} beta[l, k]``: trace form minus triple sum on the manifold."""
        return float(self.beta.sum())


def _pilot_shape(prob: PilotProblem, F: np.ndarray) -> None:
    if F.shape != (prob.T, prob.K_users):
        raise DimensionError(f"pilot matrix must be {prob.T} x {prob.K_users}, got {F.shape}")


def pilot_objective_direct(prob: PilotProblem, F) -> float:
    """``sum_l sum_k sum_{k' != k} beta[l, k'] |f_k^H f_k'|^2``."""
    F = _mat(F)
    _pilot_shape(prob, F)
    G2 = np.abs(F.conj().T @ F) ** 2
    np.fill_diagonal(G2, 0.0)
    return float(np.sum(G2 @ prob.weights))


def pilot_objective_trace(prob: PilotProblem, F) -> float:
    """``Tr(B_w |F^H F|^2 J)`` with ``J`` the all-ones matrix; keeps the diagonal terms."""
    F = _mat(F)
    _pilot_shape(prob, F)
    G2 = np.abs(F.conj().T @ F) ** 2
    J = np.ones((prob.K_users, prob.K_users))
    return float(np.trace(prob.B_w @ G2 @ J))


def pilot_quartic(F, B_op=None, A_op=None) -> float:
    """Dense ``Re Tr((F^H B F)(F^H A F))``; identities by default."""
    F = _mat(F)
    T = F.shape[0]
    B_op = np.eye(T) if B_op is None else np.asarray(B_op)
    A_op = np.eye(T) if A_op is None else np.asarray(A_op)
    return float(np.real(np.trace((F.conj().T @ B_op @ F) @ (F.conj().T @ A_op @ F))))


def pilot_objective_quantum(prob: PilotProblem, state: EncodedState, B_op=None, A_op=None) -> float:
    """``scale^4 sum_{i,k} <M_ki (x) B><M_ik (x) A>`` with ``M_ki = |k><i|``.

    ``B_op`` and ``A_op`` are ``T x T`` column-register operators, identity
    unless given.
    """
    _live(state)
    if (state.shape.n, state.shape.d) != (prob.T, prob.K_users):
        raise DimensionError("state does not encode a T x K_users pilot matrix")
    T = prob.T
    EB = index_expectations(state, np.eye(T) if B_op is None else B_op)
    EA = index_expectations(state, np.eye(T) if A_op is None else A_op)
    # sum_{i,k} EB[k, i] * EA[i, k]
    return state.scale**4 * float(np.real(np.sum(EB * EA.T)))


def _pilot_overlaps_quantum(prob: PilotProblem, state: EncodedState) -> np.ndarray:
    """``|f_k^H f_i|^2`` for all pairs, read out from index-register expectations."""
    _live(state)
    if (state.shape.n, state.shape.d) != (prob.T, prob.K_users):
        raise DimensionError("state does not encode a T x K_users pilot matrix")
    E = index_expectations(state, np.eye(prob.T))
    return state.scale**4 * np.real(E * E.T)


def pilot_contamination_quantum(prob: PilotProblem, state: EncodedState) -> float:
    """The triple-sum objective on the register."""
    G2 = _pilot_overlaps_quantum(prob, state)
    np.fill_diagonal(G2, 0.0)
    return float(np.sum(G2 @ prob.weights))


def pilot_trace_quantum(prob: PilotProblem, state: EncodedState) -> float:
    """The trace form (diagonal kept) on the register."""
    return float(np.sum(_pilot_overlaps_quantum(prob, state) @ prob.weights))


def pilot_egrad(prob: PilotProblem, F) -> np.ndarray:
    """Column ``j``: ``2 sum_{k' != j} (w_k' + w_j) f_k' (f_k'^H f_j)``."""
    F = _mat(F)
    _pilot_shape(prob, F)
    C = F.conj().T @ F
    np.fill_diagonal(C, 0.0)
    w = prob.weights
    return 2.0 * F @ (C * (w[:, None] + w[None, :]))


# --------------------------------------------------------------------------
# beamforming (Stiefel)
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BeamformingProblem:
    """``max Re Tr(W^H R W)`` over ``St(n_t, n_r)`` with ``R = H^H H``."""

    H_ch: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H_ch, dtype=np.complex128))
        object.__setattr__(self, "H_ch", H)
        R = H.conj().T @ H
        object.__setattr__(self, "R", 0.5 * (R + R.conj().T))

    R: np.ndarray = field(init=False)

    @property
    def n_r(self) -> int:
        return self.H_ch.shape[0]

    @property
    def n_t(self) -> int:
        return self.H_ch.shape[1]


def beamforming_objective(prob: BeamformingProblem, W) -> float:
    W = _mat(W)
    _check_rows(W, prob.n_t, "beamforming objective")
    return float(np.real(np.trace(W.conj().T @ prob.R @ W)))


def beamforming_egrad(prob: BeamformingProblem, W) -> np.ndarray:
    return 2.0 * prob.R @ _mat(W)


def beamforming_objective_quantum(prob: BeamformingProblem, state: EncodedState) -> float:
    """``scale^2 <Psi| I (x) R |Psi>`` (the index register runs over the beams)."""
    val = expectation(_live(state), IndexedOperator(np.eye(state.shape.d), prob.R))
    return state.scale**2 * val.real


def beamforming_optimum(prob: BeamformingProblem, n_beams: int | None = None) -> float:
    k = prob.n_r if n_beams is None else n_beams
    return float(np.sum(np.linalg.eigvalsh(prob.R)[::-1][:k]))


# --------------------------------------------------------------------------
# RIS phase tuning (torus as OB(1, N))
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RisProblem:
    """``max |h_r^H diag(phi) H_b f|^2`` over unit-modulus ``phi``."""

    h_r: np.ndarray
    H_b: np.ndarray
    f: np.ndarray
    Q: np.ndarray = field(init=False)
    R_ris: np.ndarray = field(init=False)

    def __post_init__(self):
        h_r = np.asarray(self.h_r, dtype=np.complex128).reshape(-1)
        H_b = np.atleast_2d(np.asarray(self.H_b, dtype=np.complex128))
        f = np.asarray(self.f, dtype=np.complex128).reshape(-1)
        if H_b.shape != (h_r.size, f.size):
            raise DimensionError(f"H_b must be {h_r.size} x {f.size}, got {H_b.shape}")
        g = H_b @ f
        object.__setattr__(self, "h_r", h_r)
        object.__setattr__(self, "H_b", H_b)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "Q", np.outer(g, g.conj()))
        object.__setattr__(self, "R_ris", np.outer(h_r, h_r.conj()))

    @property
    def N(self) -> int:
        return self.h_r.size

    @property
    def cascade(self) -> np.ndarray:
        """``a_k = conj(h_r[k]) (H_b f)[k]`` so the effective channel is ``sum_k a_k phi_k``."""
        return self.h_r.conj() * (self.H_b @ self.f)


def _phases(prob: RisProblem, theta) -> np.ndarray:
    phi = _mat(theta).reshape(-1)
    if phi.size != prob.N:
        raise DimensionError(f"expected {prob.N} phases, got {phi.size}")
    return phi


def phases_point(theta) -> ManifoldPoint:
    """Torus point ``exp(j theta)`` from real phase angles."""
    theta = np.asarray(theta, dtype=float).reshape(1, -1)
    return ManifoldPoint(ManifoldDescriptor.torus(theta.shape[1]), np.exp(1j * theta))


def ris_objective(prob: RisProblem, theta) -> float:
    """Received power ``|h_r^H Phi H_b f|^2``."""
    phi = _phases(prob, theta)
    return float(abs(np.sum(prob.cascade * phi)) ** 2)


def ris_objective_trace(prob: RisProblem, theta) -> float:
    """``Tr(Phi Q Phi^H R)``."""
    phi = _phases(prob, theta)
    Phi = np.diag(phi)
    return float(np.real(np.trace(Phi @ prob.Q @ Phi.conj().T @ prob.R_ris)))


def ris_index_operator(prob: RisProblem) -> np.ndarray:
    """Hermitian ``O = Q^T * R`` (entrywise) so that ``Tr(Phi Q Phi^H R) = phi^H O phi``."""
    return prob.Q.T * prob.R_ris


def ris_objective_quantum(prob: RisProblem, state: EncodedState) -> float:
    """``scale^2 <Psi| O (x) 1 |Psi>`` on a state encoding the 1 x N phase row."""
    _live(state)
    if (state.shape.n, state.shape.d) != (1, prob.N):
        raise DimensionError("state does not encode a 1 x N phase row")
    val = expectation(state, IndexedOperator(ris_index_operator(prob), np.eye(1)))
    return state.scale**2 * val.real


def ris_egrad(prob: RisProblem, theta) -> np.ndarray:
    """``2 diag(R Phi Q)`` as a ``1 x N`` row."""
    phi = _phases(prob, theta)
    grad = 2.0 * np.sum(prob.cascade * phi) * prob.cascade.conj()
    return grad.reshape(1, -1)


def ris_optimal_phases(prob: RisProblem) -> np.ndarray:
    g = prob.H_b @ prob.f
    return np.angle(prob.h_r) - np.angle(g)


def ris_optimum(prob: RisProblem) -> float:
    return float(np.sum(np.abs(prob.cascade)) ** 2)


# --------------------------------------------------------------------------
# uniform evaluator contract used by the solver
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TraceObjective:
    """One problem bound to a manifold, with classical and register evaluators.

    ``sense`` is ``"min"`` or ``"max"``. ``optimum`` is the analytic optimal
    value when one is known.
    """

    name: str
    descriptor: ManifoldDescriptor
    sense: str
    value: Callable[[np.ndarray], float]
    egrad: Callable[[np.ndarray], np.ndarray]
    value_quantum: Callable[[EncodedState], float]
    optimum: float | None = None
    problem: object = None

    @property
    def sign(self) -> float:
        """Multiplier turning the objective into a minimization."""
        return 1.0 if self.sense == "min" else -1.0


def as_objective(prob, geometry: str | None = None) -> TraceObjective:
    """Bind a problem instance to its manifold.

    ``geometry="grassmann"`` selects the Grassmann reduction of an
    :class:`EigenstateProblem`.
    """
    if isinstance(prob, EigenstateProblem):
        if geometry == "grassmann":
            return TraceObjective(
                "grassmann", ManifoldDescriptor.grassmann(prob.n, prob.p), "min",
                lambda X: grassmann_objective(prob, X),
                lambda X: grassmann_egrad(prob, X),
                lambda s: grassmann_objective_quantum(prob, s),
                grassmann_optimum(prob), prob,
            )
        return TraceObjective(
            "eigenstate", ManifoldDescriptor.stiefel(prob.n, prob.p), "min",
            lambda X: eigenstate_objective(prob, X),
            lambda X: eigenstate_egrad(prob, X),
            lambda s: eigenstate_objective_quantum(prob, s),
            eigenstate_optimum(prob), prob,
        )
    if isinstance(prob, PilotProblem):
        return TraceObjective(
            "pilot", ManifoldDescriptor.oblique(prob.T, prob.K_users), "min",
            lambda F: pilot_objective_direct(prob, F),
            lambda F: pilot_egrad(prob, F),
            lambda s: pilot_contamination_quantum(prob, s),
            None, prob,
        )
    if isinstance(prob, BeamformingProblem):
        return TraceObjective(
            "beamforming", ManifoldDescriptor.stiefel(prob.n_t, prob.n_r), "max",
            lambda W: beamforming_objective(prob, W),
            lambda W: beamforming_egrad(prob, W),
            lambda s: beamforming_objective_quantum(prob, s),
            beamforming_optimum(prob), prob,
        )
    if isinstance(prob, RisProblem):
        return TraceObjective(
            "ris", ManifoldDescriptor.torus(prob.N), "max",
            lambda t: ris_objective(prob, t),
            lambda t: ris_egrad(prob, t),
            lambda s: ris_objective_quantum(prob, s),
            ris_optimum(prob), prob,
        )
    raise TypeError(f"unsupported problem type {type(prob).__name__}")


# --------------------------------------------------------------------------
# scenario generation
# --------------------------------------------------------------------------

SCENARIO_DIMS: Mapping[str, tuple[str, ...]] = {
    "eigenstate": ("n", "p"),
    "grassmann": ("n", "p"),
    "pilot": ("L", "K_users", "T"),
    "beamforming": ("n_t", "n_r"),
    "ris": ("N", "M"),
}


class MissingDimensionError(DimensionError, KeyError):
    def __init__(self, kind: str, key: str):
        super().__init__(f"{kind} scenario is missing required dimension '{key}'")
        self.key = key

    def __str__(self):
        return self.args[0]


def _cgauss(rng: np.random.Generator, *shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_hermitian(n: int, rng: np.random.Generator) -> np.ndarray:
    A = _cgauss(rng, n, n)
    H = 0.5 * (A + A.conj().T)
    return 0.5 * (H + H.conj().T)


def generate_scenario(kind: str, dims: Mapping[str, int], seed: int):
    """Seeded problem instance: Rayleigh channels, log-uniform fading in [1e-2, 1]."""
    if kind not in SCENARIO_DIMS:
        raise ValueError(f"unknown problem kind '{kind}'")
    for key in SCENARIO_DIMS[kind]:
        if key not in dims:
            raise MissingDimensionError(kind, key)
    vals = {}
    for key in SCENARIO_DIMS[kind]:
        v = dims[key]
        if isinstance(v, bool) or int(v) != v or v < 1:
            raise DimensionError(f"dimension '{key}' must be a positive integer, got {v!r}")
        vals[key] = int(v)
    rng = np.random.default_rng(seed)
    if kind in ("eigenstate", "grassmann"):
        n, p = vals["n"], vals["p"]
        if p > n:
            raise DimensionError(f"need p <= n, got p={p}, n={n}")
        K = dims.get("K", list(range(p, 0, -1)))
        return EigenstateProblem(random_hermitian(n, rng), np.asarray(K, dtype=float))
    if kind == "pilot":
        L, K_users, T = vals["L"], vals["K_users"], vals["T"]
        beta = 10.0 ** rng.uniform(-2.0, 0.0, size=(L, K_users))
        return PilotProblem(beta, T)
    if kind == "beamforming":
        n_t, n_r = vals["n_t"], vals["n_r"]
        if n_r > n_t:
            raise DimensionError(f"need n_r <= n_t, got n_r={n_r}, n_t={n_t}")
        return BeamformingProblem(_cgauss(rng, n_r, n_t))
    N, M = vals["N"], vals["M"]
    return RisProblem(_cgauss(rng, N), _cgauss(rng, N, M), _cgauss(rng, M))
