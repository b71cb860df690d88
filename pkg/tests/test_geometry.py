import numpy as np
import pytest

from lagreg.chart import ChartSpec
from lagreg.errors import (
    DimensionMismatchError,
    PreconditionError,
    ToleranceExceededError,
)
from lagreg.expr import parse
from lagreg.geometry import (
    SubspaceBasis,
    complete_lift,
    lagrangian_complement,
    lie_bracket,
    liouville_field,
    matrix_rank,
    null_space,
    two_form_at,
    vertical_endomorphism,
    vertical_lift,
    verify_tangent_structure,
)

LINE = ChartSpec(leaves=("q",))
PLANE = ChartSpec(leaves=("x",), fibers=("f",))
JET_LINE = ChartSpec(leaves=("q",), has_time=True)


class TestLifts:
    def test_vertical_lift_constant_field(self):
        lifted = vertical_lift(LINE, [1.0], [0.3, -0.2])
        assert np.allclose(lifted.components, [0.0, 1.0])

    def test_vertical_lift_zero(self):
        lifted = vertical_lift(LINE, [0.0], [1.0, 2.0])
        assert np.allclose(lifted.components, 0.0)

    def test_vertical_lift_linear_field(self):
        lifted = vertical_lift(LINE, [2.0], [2.0, 3.0])
        assert np.allclose(lifted.components, [0.0, 2.0])

    def test_vertical_lift_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            vertical_lift(LINE, [1.0, 2.0], [0.0, 0.0])

    def test_complete_lift_constant_field(self):
        lifted = complete_lift(LINE, [parse("1", LINE)], [5.0, -1.0])
        assert np.allclose(lifted.components, [1.0, 0.0])

    def test_complete_lift_linear_field(self):
        lifted = complete_lift(LINE, [parse("q", LINE)], [2.0, 3.0])
        assert np.allclose(lifted.components, [2.0, 3.0])

    def test_complete_lift_jet_time_term(self):
        lifted = complete_lift(JET_LINE, [parse("t", JET_LINE)], [0.7, 0.1, 4.0])
        assert np.allclose(lifted.components, [4.0, 1.0, 0.0])

    def test_s_of_complete_equals_vertical(self):
        rng = np.random.default_rng(3)
        field = [parse("x*f + sin(x)", PLANE), parse("f^2 - x", PLANE)]
        for _ in range(10):
            arr = rng.uniform(-1, 1, PLANE.dim)
            s = vertical_endomorphism(PLANE, arr).components
            complete = complete_lift(PLANE, field, arr).components
            base_values = [float(v) for v in complete[: PLANE.n_base]]
            vertical = vertical_lift(PLANE, base_values, arr).components
            assert np.allclose(s @ complete, vertical, atol=1e-12)


class TestCanonicalTensors:
    def test_vertical_endomorphism_line(self):
        s = vertical_endomorphism(LINE, [0.0, 0.0]).components
        assert np.allclose(s, [[0.0, 0.0], [1.0, 0.0]])

    def test_jet_time_column(self):
        s = vertical_endomorphism(JET_LINE, [0.0, 5.0, 1.0]).components
        e_t = np.zeros(3)
        e_t[JET_LINE.time_index] = 1.0
        assert np.allclose(s @ e_t, [0.0, -5.0, 0.0])

    def test_nilpotency_random_points(self):
        rng = np.random.default_rng(0)
        for chart in (PLANE, JET_LINE):
            for _ in range(5):
                arr = rng.uniform(-2, 2, chart.dim)
                s = vertical_endomorphism(chart, arr).components
                assert np.max(np.abs(s @ s)) == 0.0

    def test_liouville_zero_section(self):
        delta = liouville_field(LINE, [1.0, 0.0]).components
        assert np.allclose(delta, 0.0)

    def test_liouville_components(self):
        delta = liouville_field(PLANE, [0.0, 0.0, 2.0, -1.0]).components
        assert np.allclose(delta, [0.0, 0.0, 2.0, -1.0])

    def test_liouville_killed_by_s(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            arr = rng.uniform(-2, 2, PLANE.dim)
            s = vertical_endomorphism(PLANE, arr).components
            delta = liouville_field(PLANE, arr).components
            assert np.allclose(s @ delta, 0.0)


class TestTangentStructureAxioms:
    def test_canonical_plane(self):
        chart = ChartSpec(leaves=("q1", "q2"))
        rng = np.random.default_rng(7)
        samples = [rng.uniform(-1, 1, chart.dim) for _ in range(4)]
        report = verify_tangent_structure(chart, samples)
        assert report["passed"]
        assert report["s_squared_residual"] <= 1e-8
        assert report["lie_derivative_residual"] <= 1e-8
        assert report["nijenhuis_residual"] <= 1e-8

    def test_perturbed_structure_reports_residual(self):
        chart = ChartSpec(leaves=("q1", "q2"))

        def broken(point):
            s = vertical_endomorphism(chart, point).components
            s[1, 3] = 0.1  # feeds a velocity leg back into the base: S^2 != 0
            return s

        with pytest.raises(ToleranceExceededError) as err:
            verify_tangent_structure(chart, [np.zeros(chart.dim)], s_field=broken)
        assert err.value.detail["s_squared_residual"] == pytest.approx(0.1)

    def test_jet_axioms(self):
        rng = np.random.default_rng(9)
        samples = [rng.uniform(-2, 2, JET_LINE.dim) for _ in range(3)]
        report = verify_tangent_structure(JET_LINE, samples)
        assert report["passed"]
        assert report["dt_of_image_residual"] == 0.0

    def test_jet_dt_annihilates_image_directly(self):
        rng = np.random.default_rng(11)
        arr = rng.uniform(-2, 2, JET_LINE.dim)
        s = vertical_endomorphism(JET_LINE, arr).components
        for _ in range(20):
            v = rng.normal(size=JET_LINE.dim)
            assert (s @ v)[JET_LINE.time_index] == 0.0

    def test_image_equals_kernel(self):
        rng = np.random.default_rng(13)
        for _ in range(5):
            arr = rng.uniform(-1, 1, PLANE.dim)
            s = vertical_endomorphism(PLANE, arr).components
            assert matrix_rank(s) == PLANE.n_base
            kernel = null_space(s)
            assert np.allclose(s @ kernel, 0.0, atol=1e-12)


def canonical_symplectic(n):
    omega = np.zeros((2 * n, 2 * n))
    omega[:n, n:] = np.eye(n)
    omega[n:, :n] = -np.eye(n)
    return omega


class TestLagrangianComplement:
    def test_already_lagrangian_complement_unchanged(self):
        omega = canonical_symplectic(2)
        l_basis = np.eye(4)[:, :2]
        w_basis = np.eye(4)[:, 2:]
        out = lagrangian_complement(omega, l_basis, w_basis, np.zeros((4, 4)))
        assert np.allclose(out.matrix, w_basis)

    def test_worked_plane_instance(self):
        # basis order (q1, q2, p1, p2)
        omega = canonical_symplectic(2)
        l_basis = np.eye(4)[:, :2]
        w_basis = np.array([[0.0, 1.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        out = lagrangian_complement(omega, l_basis, w_basis, np.zeros((4, 4)))
        expected = np.array([[0.0, 0.5], [0.5, 0.0], [1.0, 0.0], [0.0, 1.0]])
        assert np.allclose(out.matrix, expected)
        assert np.max(np.abs(out.matrix.T @ omega @ out.matrix)) <= 1e-12

    def test_precondition_isotropy(self):
        omega = canonical_symplectic(2)
        bad_l = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        w_basis = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
        with pytest.raises(PreconditionError) as err:
            lagrangian_complement(omega, bad_l, w_basis, np.zeros((4, 4)))
        assert "isotropic" in err.value.hypothesis

    def test_precondition_nilpotent(self):
        omega = canonical_symplectic(2)
        l_basis = np.eye(4)[:, :2]
        w_basis = np.eye(4)[:, 2:]
        with pytest.raises(PreconditionError) as err:
            lagrangian_complement(omega, l_basis, w_basis, np.eye(4))
        assert "nilpotent" in err.value.hypothesis

    def test_random_instances(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            out, omega, j = random_complement_instance(rng)
            assert np.max(np.abs(out.matrix.T @ omega @ out.matrix)) <= 1e-10
            projector = out.matrix @ np.linalg.pinv(out.matrix)
            assert np.max(np.abs(j @ out.matrix - projector @ (j @ out.matrix))) <= 1e-10


def random_complement_instance(rng, pairs=2):
    """Random valid (omega, L, W, J) tuple in dimension 4*pairs.

    Basis blocks (f, fd, mu, mud): omega = dmu^df + dmud^dfd; J mimics a
    vertical endomorphism (f -> fd, mud -> -mu); W is a random J-invariant
    complement of L = span{f, fd}.
    """
    r = pairs
    dim = 4 * r
    f = slice(0, r)
    fd = slice(r, 2 * r)
    mu = slice(2 * r, 3 * r)
    mud = slice(3 * r, 4 * r)
    omega = np.zeros((dim, dim))
    omega[mu, f] = np.eye(r)
    omega[f, mu] = -np.eye(r)
    omega[mud, fd] = np.eye(r)
    omega[fd, mud] = -np.eye(r)

    j = np.zeros((dim, dim))
    j[fd, f] = np.eye(r)
    j[mu, mud] = -np.eye(r)

    l_basis = np.zeros((dim, 2 * r))
    l_basis[f, :r] = np.eye(r)
    l_basis[fd, r:] = np.eye(r)

    a = rng.normal(size=(r, r))
    b = rng.normal(size=(r, r))
    w_basis = np.zeros((dim, 2 * r))
    w_basis[mu, :r] = np.eye(r)
    w_basis[fd, :r] = -a.T
    w_basis[mud, r:] = np.eye(r)
    w_basis[f, r:] = a.T
    w_basis[fd, r:] = b.T
    out = lagrangian_complement(omega, l_basis, w_basis, j)
    return out, omega, j


class TestSubspaceBasis:
    def test_rejects_dependent_columns(self):
        with pytest.raises(PreconditionError):
            SubspaceBasis(np.array([[1.0, 2.0], [1.0, 2.0]]))

    def test_empty_basis_allowed(self):
        basis = SubspaceBasis(np.zeros((4, 0)))
        assert basis.dimension == 0

    def test_two_form_rejects_symmetric_part(self):
        with pytest.raises(ToleranceExceededError):
            two_form_at(np.array([[0.0, 1.0], [1.0, 0.0]]))


def test_lie_bracket_of_coordinate_rotations():
    # [x d/dy - y d/dx, d/dx] = d/dy
    def rotation(p):
        return np.array([-p[1], p[0]])

    def e_x(p):
        return np.array([1.0, 0.0])

    bracket = lie_bracket(rotation, e_x, np.array([0.3, -0.7]))
    assert np.allclose(bracket, [0.0, -1.0], atol=1e-9)
