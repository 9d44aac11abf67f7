import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from conftest import cgauss
from qmo import manifolds as mf
from qmo.exceptions import (
    DegenerateStepError,
    DimensionError,
    ManifoldMembershipError,
    PreconditionError,
    UsageError,
)
from qmo.manifolds import Field, Kind, ManifoldDescriptor, ManifoldPoint, TangentVector

SIZES = [(2, 2), (4, 3), (8, 5), (16, 4)]


def descriptors(n, d):
    return [
        ManifoldDescriptor.oblique(n, d),
        ManifoldDescriptor.stiefel(n, d),
        ManifoldDescriptor.grassmann(n, d),
        ManifoldDescriptor.torus(n),
        ManifoldDescriptor.sphere(n),
    ]


ALL_DESCS = [desc for n, d in SIZES for desc in descriptors(n, d)]


def unit_tangent(point, rng):
    v = mf.project_tangent(point, cgauss(rng, *point.descriptor.shape))
    return TangentVector(point, v.Z / v.norm)


# --- descriptors and points -------------------------------------------------


class TestDescriptor:
    def test_sphere_needs_one_column(self):
        with pytest.raises(DimensionError):
            ManifoldDescriptor(Kind.SPHERE, 3, 2)

    def test_torus_is_a_complex_row(self):
        t = ManifoldDescriptor.torus(5)
        assert t.shape == (1, 5)
        with pytest.raises(DimensionError):
            ManifoldDescriptor(Kind.TORUS, 2, 5)
        with pytest.raises(DimensionError):
            ManifoldDescriptor(Kind.TORUS, 1, 5, Field.REAL)

    @pytest.mark.parametrize("kind", [Kind.STIEFEL, Kind.GRASSMANNIAN])
    def test_orthonormal_kinds_need_d_le_n(self, kind):
        with pytest.raises(DimensionError):
            ManifoldDescriptor(kind, 2, 3)

    def test_rejects_nonpositive_dims(self):
        with pytest.raises(DimensionError):
            ManifoldDescriptor.oblique(0, 2)


class TestPoint:
    def test_membership_enforced(self):
        with pytest.raises(ManifoldMembershipError):
            ManifoldPoint(ManifoldDescriptor.oblique(2, 2), np.array([[1, 0], [1, 1]]))
        with pytest.raises(ManifoldMembershipError):
            ManifoldPoint(ManifoldDescriptor.stiefel(2, 2), np.array([[1, 1], [0, 1]]) / np.sqrt([1, 2]))

    def test_shape_enforced(self):
        with pytest.raises(DimensionError):
            ManifoldPoint(ManifoldDescriptor.oblique(3, 2), np.eye(2))

    def test_read_only(self):
        p = mf.random_point(ManifoldDescriptor.oblique(3, 2), 0)
        with pytest.raises(ValueError):
            p.X[0, 0] = 2.0

    def test_tangent_enforced(self):
        p = ManifoldPoint(ManifoldDescriptor.sphere(2), np.array([[1.0], [0.0]]))
        with pytest.raises(PreconditionError):
            TangentVector(p, np.array([[1.0], [0.0]]))


# --- projection -------------------------------------------------------------


class TestProjection:
    def test_hand_example(self):
        p = ManifoldPoint(ManifoldDescriptor.sphere(2), np.array([[1.0], [0.0]]))
        np.testing.assert_array_equal(mf.project_tangent(p, np.array([[3.0], [4.0]])).Z, [[0], [4]])

    def test_point_projects_to_zero_on_oblique(self):
        p = mf.random_point(ManifoldDescriptor.oblique(4, 3), 1)
        assert np.max(np.abs(mf.project_tangent(p, p.X).Z)) < 1e-15

    @pytest.mark.parametrize("desc", ALL_DESCS, ids=str)
    def test_idempotent_and_tangent(self, desc, rng):
        p = mf.random_point(desc, 3)
        Z = cgauss(rng, *desc.shape)
        P1 = mf.project_tangent(p, Z)
        P2 = mf.project_tangent(p, P1.Z)
        assert np.max(np.abs(P2.Z - P1.Z)) <= 1e-12 * np.linalg.norm(Z)
        assert mf.tangent_error(desc, p.X, P1.Z) <= 1e-12 * np.linalg.norm(Z)

    @pytest.mark.parametrize("desc", ALL_DESCS, ids=str)
    def test_self_adjoint(self, desc, rng):
        # <Z - P Z, P W> = 0
        p = mf.random_point(desc, 4)
        Z, W = cgauss(rng, *desc.shape), cgauss(rng, *desc.shape)
        PZ = mf.project_tangent(p, Z).Z
        PW = mf.project_tangent(p, W).Z
        assert abs(mf.inner(Z - PZ, PW)) <= 1e-10

    def test_formulas(self, rng):
        X = mf.random_point(ManifoldDescriptor.stiefel(5, 2), 0).X
        Z = cgauss(rng, 5, 2)
        S = X.conj().T @ Z
        np.testing.assert_allclose(
            mf.project_tangent(ManifoldPoint(ManifoldDescriptor.stiefel(5, 2), X), Z).Z,
            Z - X @ (S + S.conj().T) / 2, atol=1e-14)
        np.testing.assert_allclose(
            mf.project_tangent(ManifoldPoint(ManifoldDescriptor.grassmann(5, 2), X), Z).Z,
            Z - X @ S, atol=1e-14)

    def test_torus_keeps_phase_directions(self):
        # the tangent space of a unit circle at x is i*R*x
        x = np.exp(1j * np.array([[0.3, 1.1]]))
        p = ManifoldPoint(ManifoldDescriptor.torus(2), x)
        Z = 1j * x * np.array([[2.0, -0.5]])
        np.testing.assert_allclose(mf.project_tangent(p, Z).Z, Z, atol=1e-15)
        np.testing.assert_allclose(mf.project_tangent(p, 3 * x).Z, 0, atol=1e-15)

    def test_shape_mismatch(self):
        p = mf.random_point(ManifoldDescriptor.oblique(3, 2), 0)
        with pytest.raises(DimensionError):
            mf.project_tangent(p, np.ones((2, 3)))


# --- metric -----------------------------------------------------------------


class TestMetric:
    def test_norm_identity(self, rng):
        p = mf.random_point(ManifoldDescriptor.oblique(4, 3), 0)
        v = unit_tangent(p, rng)
        Z = TangentVector(p, 2 * v.Z)
        assert mf.metric(Z, Z) == pytest.approx(4.0, abs=1e-12)

    def test_imaginary_multiple_is_orthogonal(self, rng):
        p = mf.random_point(ManifoldDescriptor.grassmann(4, 2), 0)
        Z = mf.project_tangent(p, cgauss(rng, 4, 2))
        assert abs(mf.metric(Z, TangentVector(p, 1j * Z.Z))) < 1e-14

    def test_elementwise_oracle(self, rng):
        p = mf.random_point(ManifoldDescriptor.stiefel(6, 3), 0)
        Z1 = mf.project_tangent(p, cgauss(rng, 6, 3))
        Z2 = mf.project_tangent(p, cgauss(rng, 6, 3))
        expected = sum((np.conj(a) * b).real for a, b in zip(Z1.Z.ravel(), Z2.Z.ravel()))
        assert mf.metric(Z1, Z2) == pytest.approx(expected, rel=1e-13)
        assert mf.metric(Z1, Z2) == pytest.approx(mf.metric(Z2, Z1), rel=1e-15)

    def test_different_anchors(self, rng):
        d = ManifoldDescriptor.oblique(3, 2)
        p, q = mf.random_point(d, 0), mf.random_point(d, 1)
        with pytest.raises(UsageError):
            mf.metric(mf.project_tangent(p, cgauss(rng, 3, 2)), mf.project_tangent(q, cgauss(rng, 3, 2)))


# --- retractions ------------------------------------------------------------


def retractions_for(desc):
    if desc.columnwise:
        return [mf.retract_normalize, mf.retract_exp]
    return [mf.retract_stiefel]


RETRACTION_CASES = [
    (desc, R) for desc in ALL_DESCS for R in retractions_for(desc)
    if not (desc.kind is Kind.GRASSMANNIAN and desc.n == desc.d)
]


class TestRetractionAxioms:
    @pytest.mark.parametrize("desc,R", RETRACTION_CASES, ids=lambda x: getattr(x, "__name__", str(x)))
    def test_zero_step_and_first_order(self, desc, R, rng):
        p = mf.random_point(desc, 5)
        v = unit_tangent(p, rng)
        assert np.array_equal(R(p, v, 0.0).X, p.X)
        h = 1e-6
        fd = (R(p, v, h).X - p.X) / h
        assert np.linalg.norm(fd - v.Z) <= 1e-4

    @pytest.mark.parametrize("desc,R", RETRACTION_CASES, ids=lambda x: getattr(x, "__name__", str(x)))
    def test_lands_on_manifold(self, desc, R, rng):
        p = mf.random_point(desc, 6)
        v = unit_tangent(p, rng)
        for t in (0.1, 1.0, 7.5):
            assert mf.membership_error(desc, R(p, v, t).X) <= 1e-12


class TestNormalize:
    def test_hand_example(self):
        p = ManifoldPoint(ManifoldDescriptor.sphere(2), np.array([[1.0], [0.0]]))
        v = TangentVector(p, np.array([[0.0], [1.0]]))
        np.testing.assert_allclose(mf.retract_normalize(p, v, 1.0).X, [[2**-0.5], [2**-0.5]], atol=1e-15)

    def test_columnwise_not_global(self, rng):
        p = mf.random_point(ManifoldDescriptor.oblique(3, 4), 0)
        v = mf.project_tangent(p, cgauss(rng, 3, 4))
        Y = p.X + 0.7 * v.Z
        np.testing.assert_allclose(mf.retract_normalize(p, v, 0.7).X, Y / np.linalg.norm(Y, axis=0), atol=1e-15)

    def test_degenerate(self):
        # a genuine tangent keeps |x + a xi| >= 1, so only a non-finite step degenerates
        p = ManifoldPoint(ManifoldDescriptor.sphere(2), np.array([[1.0], [0.0]]))
        v = TangentVector(p, np.array([[0.0], [1.0]]))
        with pytest.raises(DegenerateStepError):
            mf.retract_normalize(p, v, np.inf)

    def test_anchor_checked(self, rng):
        d = ManifoldDescriptor.oblique(3, 2)
        p, q = mf.random_point(d, 0), mf.random_point(d, 1)
        with pytest.raises(UsageError):
            mf.retract_normalize(q, mf.project_tangent(p, cgauss(rng, 3, 2)), 0.1)

    def test_rejects_orthonormal_kinds(self, rng):
        p = mf.random_point(ManifoldDescriptor.stiefel(3, 2), 0)
        with pytest.raises(UsageError):
            mf.retract_normalize(p, mf.project_tangent(p, cgauss(rng, 3, 2)), 0.1)


class TestSkewGenerator:
    def test_rotation_block(self):
        A = mf.skew_generator(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
        np.testing.assert_array_equal(A, [[0, -1], [1, 0]])

    def test_zero_v(self):
        assert not np.any(mf.skew_generator(np.array([0.6, 0.8]), np.zeros(2)))

    @given(st.integers(1, 9), st.integers(0, 2**32 - 1), st.booleans())
    def test_identities(self, n, seed, with_phase):
        rng = np.random.default_rng(seed)
        x = cgauss(rng, n)
        x /= np.linalg.norm(x)
        v = cgauss(rng, n)
        v -= x * np.vdot(x, v)
        if with_phase:
            v += 1j * rng.standard_normal() * x
        A = mf.skew_generator(x, v)
        assert np.array_equal(A.conj().T, -A)
        assert np.max(np.abs(A @ x - v)) <= 1e-12 * max(1.0, np.linalg.norm(v))

    def test_preconditions(self):
        with pytest.raises(PreconditionError):
            mf.skew_generator(np.array([2.0, 0.0]), np.array([0.0, 1.0]))
        with pytest.raises(PreconditionError):
            mf.skew_generator(np.array([1.0, 0.0]), np.array([1.0, 1.0]))


class TestExpRetraction:
    def test_half_turn(self):
        p = ManifoldPoint(ManifoldDescriptor.sphere(2), np.array([[1.0], [0.0]]))
        v = TangentVector(p, np.array([[0.0], [1.0]]))
        np.testing.assert_allclose(mf.retract_exp(p, v, np.pi).X, [[-1], [0]], atol=1e-15)

    def test_zero_columns_fixed(self, rng):
        p = mf.random_point(ManifoldDescriptor.oblique(3, 2), 0)
        Z = mf.project_tangent(p, cgauss(rng, 3, 2)).Z.copy()
        Z[:, 1] = 0
        Y = mf.retract_exp(p, TangentVector(p, Z), 2.0).X
        assert np.array_equal(Y[:, 1], p.X[:, 1])

    @pytest.mark.parametrize("desc", [ManifoldDescriptor.oblique(5, 3), ManifoldDescriptor.torus(6),
                                      ManifoldDescriptor.sphere(4)], ids=str)
    def test_matches_matrix_exponential(self, desc, rng):
        # independent oracle: scipy expm of the generator applied column by column
        for seed in range(20):
            p = mf.random_point(desc, seed)
            v = mf.project_tangent(p, cgauss(rng, *desc.shape))
            t = rng.uniform(-3, 3)
            Y = mf.retract_exp(p, v, t).X
            for k in range(desc.d):
                A = mf.skew_generator(p.X[:, k], v.Z[:, k])
                np.testing.assert_allclose(Y[:, k], expm(t * A) @ p.X[:, k], atol=1e-10)

    def test_torus_is_phase_rotation(self):
        x = np.exp(1j * np.array([[0.2, -1.0, 2.5]]))
        p = ManifoldPoint(ManifoldDescriptor.torus(3), x)
        theta = np.array([[0.4, 30.0, -7.0]])
        Y = mf.retract_exp(p, TangentVector(p, 1j * theta * x), 1.0).X
        np.testing.assert_allclose(Y, x * np.exp(1j * theta), atol=1e-13)


class TestStiefelRetraction:
    def test_zero_direction(self):
        p = mf.random_point(ManifoldDescriptor.stiefel(4, 2), 0)
        z = TangentVector(p, np.zeros((4, 2)))
        assert np.allclose(mf.retract_stiefel(p, z, 5.0).X, p.X, atol=1e-15)

    def test_finite_difference(self, rng):
        p = mf.random_point(ManifoldDescriptor.stiefel(6, 3), 2)
        v = unit_tangent(p, rng)
        fd = (mf.retract_stiefel(p, v, 1e-6).X - mf.retract_stiefel(p, v, -1e-6).X) / 2e-6
        assert np.max(np.abs(fd - v.Z)) <= 1e-5

    def test_rejects_oblique(self, rng):
        p = mf.random_point(ManifoldDescriptor.oblique(3, 2), 0)
        with pytest.raises(UsageError):
            mf.retract_stiefel(p, mf.project_tangent(p, cgauss(rng, 3, 2)), 0.1)


# --- gradient and transport -------------------------------------------------


class TestRiemannianGrad:
    def test_trivial_cases(self, rng):
        p = mf.random_point(ManifoldDescriptor.oblique(4, 2), 0)
        assert not np.any(mf.riemannian_grad(p, np.zeros((4, 2))).Z)
        v = mf.project_tangent(p, cgauss(rng, 4, 2))
        np.testing.assert_allclose(mf.riemannian_grad(p, v.Z).Z, v.Z, atol=1e-15)

    def test_rayleigh_on_sphere(self, rng):
        A = cgauss(rng, 4, 4)
        H = A + A.conj().T
        lam, U = np.linalg.eigh(H)
        desc = ManifoldDescriptor.sphere(4)
        x = ManifoldPoint(desc, U[:, [1]])
        assert np.linalg.norm(mf.riemannian_grad(x, 2 * H @ x.X).Z) < 1e-12
        y = mf.random_point(desc, 1)
        g = mf.riemannian_grad(y, 2 * H @ y.X).Z
        expected = 2 * (H @ y.X - y.X * (y.X.conj().T @ H @ y.X))
        np.testing.assert_allclose(g, expected, atol=1e-13)
        assert np.linalg.norm(g) > 1e-3


class TestTransport:
    def test_same_point_and_zero(self, rng):
        d = ManifoldDescriptor.stiefel(5, 2)
        p, q = mf.random_point(d, 0), mf.random_point(d, 1)
        v = mf.project_tangent(p, cgauss(rng, 5, 2))
        np.testing.assert_allclose(mf.vector_transport(p, p, v).Z, v.Z, atol=1e-14)
        assert not np.any(np.abs(mf.vector_transport(p, q, TangentVector(p, np.zeros((5, 2)))).Z) > 0)

    @pytest.mark.parametrize("desc", ALL_DESCS, ids=str)
    def test_lands_in_target_tangent_space(self, desc, rng):
        p, q = mf.random_point(desc, 0), mf.random_point(desc, 1)
        v = mf.project_tangent(p, cgauss(rng, *desc.shape))
        w = mf.vector_transport(p, q, v)
        assert w.at is q
        assert mf.tangent_error(desc, q.X, w.Z) <= 1e-12 * max(1.0, v.norm)

    def test_descriptor_mismatch(self, rng):
        p = mf.random_point(ManifoldDescriptor.oblique(3, 2), 0)
        q = mf.random_point(ManifoldDescriptor.oblique(3, 3), 0)
        with pytest.raises(UsageError):
            mf.vector_transport(p, q, mf.project_tangent(p, cgauss(rng, 3, 2)))


class TestRandomPoint:
    @pytest.mark.parametrize("desc", ALL_DESCS, ids=str)
    def test_deterministic_and_feasible(self, desc):
        a, b = mf.random_point(desc, 11), mf.random_point(desc, 11)
        assert np.array_equal(a.X, b.X)
        assert mf.membership_error(desc, a.X) <= 1e-12
        if not (desc.kind is Kind.GRASSMANNIAN and desc.n == desc.d):
            assert np.linalg.norm(a.X - mf.random_point(desc, 12).X) > 1e-6

    def test_real_field(self):
        p = mf.random_point(ManifoldDescriptor.stiefel(4, 2, Field.REAL), 0)
        assert not np.any(p.X.imag)
