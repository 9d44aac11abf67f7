"""
Statevector emulation of matrix-valued manifold points.

A matrix ``X`` with columns ``x_0 .. x_{d-1}`` is stored as the normalized state

    |Psi> = sum_k |k> (x) |x_k> / ||X||_F

on an index register of ``ceil(log2 d)`` qubits followed by a column register
of ``ceil(log2 n)`` qubits. Slots beyond ``d`` blocks or ``n`` rows are zero
padding. The Frobenius norm is carried separately as ``scale`` so that
``decode(encode(X)) == X``.

Operators are applied as dense matrices on the ``2**q`` amplitude vector;
nothing here compiles to gates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag, expm

from qmo.exceptions import (
    CorruptedStateError,
    DimensionError,
    PreconditionError,
    SentinelStateError,
    ZeroMatrixError,
)
from qmo.manifolds import DEGENERATE_NORM, TangentVector, skew_generators

NORMALIZATION_TOL = 1e-12
PADDING_TOL = 1e-12
ANCHOR_TOL = 1e-10
# projections whose norm falls below this fraction of the input are reported as zero
ZERO_TANGENT_RTOL = 1e-13


def _qubits(m: int) -> int:
    return (m - 1).bit_length()


@dataclass(frozen=True)
class RegisterShape:
    n: int
    d: int

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise DimensionError(f"register needs positive n, d (got {self.n}, {self.d})")

    @property
    def index_qubits(self) -> int:
        return _qubits(self.d)

    @property
    def column_qubits(self) -> int:
        return _qubits(self.n)

    @property
    def num_qubits(self) -> int:
        return self.index_qubits + self.column_qubits

    @property
    def dim(self) -> int:
        return 2**self.num_qubits

    @property
    def blocks(self) -> tuple[int, int]:
        """Padded (index, column) register dimensions."""
        return 2**self.index_qubits, 2**self.column_qubits


@dataclass(frozen=True, eq=False)
class EncodedState:
    """Normalized amplitudes plus the Frobenius norm of the encoded matrix.

    ``scale == 0`` marks the zero-tangent sentinel; its amplitudes are the
    basis state ``|0...0>`` and carry no information.
    """

    shape: RegisterShape
    amplitudes: np.ndarray
    scale: float

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=np.complex128, copy=True).reshape(-1)
        if amps.size != self.shape.dim:
            raise DimensionError(f"{amps.size} amplitudes for a {self.shape.dim}-dimensional register")
        if not self.scale >= 0:
            raise CorruptedStateError("scale must be nonnegative")
        if self.scale > 0:
            err = abs(np.linalg.norm(amps) - 1.0)
            if err > NORMALIZATION_TOL:
                raise CorruptedStateError(f"amplitudes not normalized (|norm - 1| = {err:.2e})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "scale", float(self.scale))

    @property
    def is_sentinel(self) -> bool:
        return self.scale == 0.0

    def blocks(self) -> np.ndarray:
        """Amplitudes as a (padded index) x (padded column) array; row k is block k."""
        return self.amplitudes.reshape(self.shape.blocks)


def zero_tangent(shape: RegisterShape) -> EncodedState:
    amps = np.zeros(shape.dim, dtype=np.complex128)
    amps[0] = 1.0
    return EncodedState(shape, amps, 0.0)


def _require_live(state: EncodedState, what: str = "state") -> None:
    if state.is_sentinel:
        raise SentinelStateError(f"{what} is the zero-tangent sentinel")


def _from_blocks(shape: RegisterShape, P: np.ndarray) -> EncodedState:
    norm = float(np.linalg.norm(P))
    return EncodedState(shape, (P / norm).reshape(-1), norm)


def encode(X) -> EncodedState:
    """Encode an ``n x d`` matrix as a normalized statevector."""
    X = np.asarray(X, dtype=np.complex128)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise DimensionError("encode takes a matrix")
    norm = float(np.linalg.norm(X))
    if norm == 0.0:
        raise ZeroMatrixError("cannot encode the zero matrix")
    shape = RegisterShape(*X.shape)
    P = np.zeros(shape.blocks, dtype=np.complex128)
    P[: shape.d, : shape.n] = X.T / norm
    return EncodedState(shape, P.reshape(-1), norm)


def encode_tangent(Z, shape: RegisterShape) -> EncodedState:
    """Like :func:`encode` but maps the zero matrix to the sentinel."""
    if not np.any(Z):
        return zero_tangent(shape)
    return encode(Z)


def decode(state: EncodedState) -> np.ndarray:
    """Recover the ``n x d`` matrix; the sentinel decodes to zeros."""
    n, d = state.shape.n, state.shape.d
    if state.is_sentinel:
        return np.zeros((n, d), dtype=np.complex128)
    P = state.blocks()
    pad = np.concatenate([P[d:, :].ravel(), P[:d, n:].ravel()])
    if pad.size and np.max(np.abs(pad)) > PADDING_TOL:
        raise CorruptedStateError("nonzero amplitude in a padding slot")
    return state.scale * P[:d, :n].T.copy()


def overlap_inner_product(s1: EncodedState, s2: EncodedState) -> float:
    """``Re(scale1 * scale2 * <Psi1|Psi2>)``, the trace metric of the decoded matrices."""
    if s1.shape != s2.shape:
        raise DimensionError("states live on different registers")
    return float(np.real(s1.scale * s2.scale * np.vdot(s1.amplitudes, s2.amplitudes)))


@dataclass(frozen=True, eq=False)
class IndexedOperator:
    """``M (x) B``: ``M`` acts on the index register, ``B`` on the column register."""

    M: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=np.complex128))
        B = np.atleast_2d(np.asarray(self.B, dtype=np.complex128))
        if M.shape[0] != M.shape[1] or B.shape[0] != B.shape[1]:
            raise DimensionError("operator factors must be square")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "B", B)

    def dense(self, shape: RegisterShape) -> np.ndarray:
        if self.M.shape[0] != shape.d or self.B.shape[0] != shape.n:
            raise DimensionError(
                f"operator is ({self.M.shape[0]} x {self.B.shape[0]}), register is ({shape.d} x {shape.n})"
            )
        bi, bc = shape.blocks
        Mp = np.zeros((bi, bi), dtype=np.complex128)
        Mp[: shape.d, : shape.d] = self.M
        Bp = np.zeros((bc, bc), dtype=np.complex128)
        Bp[: shape.n, : shape.n] = self.B
        return np.kron(Mp, Bp)


def basis_projector(d: int, k: int, i: int) -> np.ndarray:
    """``|k><i|`` on a ``d``-dimensional index register."""
    M = np.zeros((d, d), dtype=np.complex128)
    M[k, i] = 1.0
    return M


def expectation(state: EncodedState, op: IndexedOperator) -> complex:
    """``<Psi| M (x) B |Psi>`` on the padded register."""
    _require_live(state)
    O = op.dense(state.shape)
    a = state.amplitudes
    return complex(np.vdot(a, O @ a))


def _unit_columns(state: EncodedState, what: str) -> np.ndarray:
    X = decode(state)
    if np.max(np.abs(np.linalg.norm(X, axis=0) - 1.0)) > ANCHOR_TOL:
        raise PreconditionError(f"{what} does not encode a matrix with unit columns")
    return X


def quantum_project(state: EncodedState, z_state: EncodedState, *, real_tangent: bool = False) -> EncodedState:
    """Apply ``sum_k |k><k| (x) (I - |psi_k><psi_k|)`` to ``z_state``.

    ``state`` must encode unit-norm columns. With ``real_tangent`` only the
    real part of ``<psi_k|z_k>`` is removed (torus geometry); that map is
    real-linear only, so it is applied block by block rather than as a
    dense operator.

    Returns the zero-tangent sentinel when the projection vanishes.
    """
    _require_live(state)
    if state.shape != z_state.shape:
        raise DimensionError("states live on different registers")
    if z_state.is_sentinel:
        return z_state
    shape = state.shape
    X = _unit_columns(state, "state")
    bi, bc = shape.blocks
    U = np.zeros((bi, bc), dtype=np.complex128)
    U[: shape.d, : shape.n] = X.T  # row k = unit column psi_k
    if real_tangent:
        Zb = z_state.blocks()
        coeff = np.real(np.sum(U.conj() * Zb, axis=1, keepdims=True))
        out = (Zb - U * coeff).reshape(-1)
    else:
        Pi = block_diag(*[np.outer(u, u.conj()) for u in U])
        out = z_state.amplitudes - Pi @ z_state.amplitudes
    norm = float(np.linalg.norm(out))
    if norm <= ZERO_TANGENT_RTOL:
        return zero_tangent(shape)
    return EncodedState(shape, out / norm, z_state.scale * norm)


def column_unitaries(X: np.ndarray, V: np.ndarray, t: float, pad_to: int) -> np.ndarray:
    """``exp(t A_k)`` for each column as a ``(d, pad_to, pad_to)`` stack; generators zero-extended."""
    n, d = X.shape
    A = np.zeros((d, pad_to, pad_to), dtype=np.complex128)
    moving = np.linalg.norm(V, axis=0) >= DEGENERATE_NORM
    if np.any(moving):
        A[moving, :n, :n] = skew_generators(X[:, moving], V[:, moving])
    return expm(t * A)


def quantum_retract(state: EncodedState, V: TangentVector, t: float) -> EncodedState:
    """Apply the block-diagonal unitary ``sum_k |k><k| (x) exp(t A_k)``.

    ``A_k`` is the skew generator of column ``k`` of ``V``. Padding blocks get
    the identity, so the scale is unchanged.
    """
    _require_live(state)
    X = _unit_columns(state, "state")
    if V.Z.shape != X.shape or np.max(np.abs(V.at.X - X)) > ANCHOR_TOL:
        raise PreconditionError("tangent vector is not anchored at the encoded point")
    if t == 0:
        return state
    shape = state.shape
    bi, bc = shape.blocks
    U = column_unitaries(X, np.asarray(V.Z), t, bc)
    P = state.blocks().copy()
    # block k evolves under U_k; padding blocks get the identity
    P[: shape.d] = np.einsum("kij,kj->ki", U, P[: shape.d])
    amps = P.reshape(-1)
    # unitarity holds to rounding; renormalize so drift cannot accumulate
    amps = amps / np.linalg.norm(amps)
    return EncodedState(shape, amps, state.scale)


def prepare_uniform(shape: RegisterShape) -> EncodedState:
    """Hadamard on every qubit of ``|0...0>``, restricted to the logical slots.

    For power-of-two ``n`` and ``d`` this is exactly the Hadamard output. With
    padding, the padded slots are post-selected away so the state stays
    decodable. The scale is ``sqrt(d)``, so every decoded column is the unit
    vector with entries ``1/sqrt(n)``.
    """
    P = np.zeros(shape.blocks, dtype=np.complex128)
    P[: shape.d, : shape.n] = 1.0 / np.sqrt(shape.n * shape.d)
    return EncodedState(shape, P.reshape(-1), np.sqrt(shape.d))


def state_to_records(state: EncodedState) -> dict:
    """Wire form: nonzero amplitudes as ``[basis_index, re, im]`` triples plus scale."""
    a = state.amplitudes
    idx = np.flatnonzero(a)
    return {
        "n": state.shape.n,
        "d": state.shape.d,
        "scale": state.scale,
        "amplitudes": [[int(i), float(a[i].real), float(a[i].imag)] for i in idx],
    }


def state_from_records(doc: dict) -> EncodedState:
    shape = RegisterShape(int(doc["n"]), int(doc["d"]))
    amps = np.zeros(shape.dim, dtype=np.complex128)
    for i, re, im in doc["amplitudes"]:
        amps[int(i)] = complex(re, im)
    return EncodedState(shape, amps, float(doc["scale"]))
