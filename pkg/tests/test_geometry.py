import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invsde.errors import (
    DegenerateBasisError,
    DimensionError,
    ResidualError,
    SingularBasisError,
    ZeroGradientError,
)
from invsde.geometry import (
    GradientPoint,
    closed_form_determinant,
    coordinates_in_basis,
    default_kind,
    general_basis,
    projected_special_basis,
    special_basis,
    supplement_basis,
    time_extended_basis,
)

from oracles import chain_matrix, leibniz_det, quaternion_matrix

# determinants of hand-built chain matrices, frozen from the permutation expansion
DET_N2_34 = -25.0
DET_N3_123 = 28.0
DET_N4_ONES = -4.0


def test_oracle_values_are_frozen():
    assert leibniz_det(chain_matrix([3, 4])) == DET_N2_34
    assert leibniz_det(chain_matrix([1, 2, 3])) == DET_N3_123
    assert leibniz_det(chain_matrix([1, 1, 1, 1])) == DET_N4_ONES


def test_gradient_point_norm():
    p = GradientPoint(0.5, np.array([3.0, 4.0]))
    assert p.norm == 5.0
    assert np.array_equal(p.extended, [0.5, 3.0, 4.0])


class TestGeneralBasis:
    def test_catenoid_vectors(self):
        b = general_basis([2.0, 4.0, 0.0])
        assert np.array_equal(b.vectors[0], [4.0, -2.0, 0.0])
        assert np.array_equal(b.vectors[1], [0.0, 0.0, -4.0])
        assert not b.degenerate

    def test_iterated_integrals_at_origin(self):
        b = general_basis([0.0, 1.0, 0.0, 1.0])
        assert np.array_equal(b.vectors[0], [1, 0, 0, 0])
        assert np.array_equal(b.vectors[1], [0, 0, -1, 0])
        assert np.array_equal(b.vectors[2], [0, 0, 1, 0])
        assert b.degeneracy == (3,)

    def test_unit_gradient(self):
        b = general_basis([1.0, 0.0, 0.0])
        assert np.array_equal(b.vectors[0], [0, -1, 0])
        assert np.array_equal(b.vectors[1], [0, 0, 0])
        assert b.degeneracy == (2,)

    def test_dimension_error(self):
        with pytest.raises(DimensionError):
            general_basis([1.0])

    @pytest.mark.parametrize("lam,flag", [((0.5, 0.0, 0.5, 0.7), (2,)), ((0.5, 0.5, 0.0, 0.7), (3,)),
                                          ((0.5, 0.5, 0.5, 0.5), ())])
    def test_quaternion_sphere_degeneracy(self, lam, flag):
        assert general_basis(lam).degeneracy == flag

    def test_tridiagonal_gram(self):
        G = np.random.default_rng(2).normal(size=7)
        V = np.array(general_basis(G).vectors)
        gram = V @ V.T
        for j in range(6):
            for k in range(6):
                if abs(j - k) > 1:
                    assert gram[j, k] == 0.0


class TestTimeExtended:
    def test_dynamic_parabola(self):
        t, x2 = 0.4, 1.3
        b = time_extended_basis(-2 * math.sin(2 * t), [1.0, 2 * x2])
        assert b.n0 == pytest.approx([2 * math.sin(2 * t), 0.0])
        assert np.array_equal(b.vectors[0], [2 * x2, -1.0])

    def test_static_integral_has_zero_shift(self):
        b = time_extended_basis(0.0, [1.0, 2.0, 3.0])
        assert np.all(b.n0 == 0.0)

    def test_zero_pivot(self):
        with pytest.raises(DegenerateBasisError):
            time_extended_basis(1.0, [0.0, 2.0])


class TestClosedForm:
    def test_two_dimensional(self):
        assert closed_form_determinant("general", 0.0, [3.0, 4.0]) == DET_N2_34

    def test_three_dimensional(self):
        assert closed_form_determinant("general", 0.0, [1.0, 2.0, 3.0]) == DET_N3_123

    def test_four_dimensional(self):
        assert closed_form_determinant("general", 0.0, [1.0, 1.0, 1.0, 1.0]) == DET_N4_ONES

    @pytest.mark.parametrize("n", range(2, 6))
    def test_leibniz_matches_general(self, n):
        rs = np.random.default_rng(n)
        for _ in range(20):
            G = rs.normal(size=n)
            det = leibniz_det(general_basis(G).matrix())
            assert det == pytest.approx(closed_form_determinant("general", 0.0, G), rel=1e-9)

    @pytest.mark.parametrize("n", range(2, 6))
    def test_leibniz_matches_time_extended(self, n):
        rs = np.random.default_rng(10 + n)
        for _ in range(20):
            g0, G = rs.normal(), rs.normal(size=n)
            det = leibniz_det(time_extended_basis(g0, G).matrix())
            assert det == pytest.approx(closed_form_determinant("time_extended", g0, G), rel=1e-9)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            closed_form_determinant("projected", 0.0, [1.0, 2.0, 3.0])


class TestSpecial:
    def test_identity_quaternion(self):
        b = special_basis([1.0, 0.0, 0.0, 0.0])
        for v, e in zip(b.vectors, np.eye(4)[1:]):
            assert np.array_equal(v, e)

    def test_matches_quaternion_product(self):
        lam = np.array([0.3, -0.4, 0.8, 0.2])
        b = special_basis(lam)
        assert np.array_equal(np.array(b.vectors), quaternion_matrix(lam)[:, 1:].T)
        l0, l1, l2, l3 = lam
        assert np.array_equal(b.vectors[0], [-l1, l0, l3, -l2])
        assert np.array_equal(b.vectors[1], [-l2, -l3, l0, l1])
        assert np.array_equal(b.vectors[2], [-l3, l2, -l1, l0])

    def test_planar(self):
        b = special_basis([3.0, 4.0])
        assert np.array_equal(b.vectors[0], [-4.0, 3.0])
        assert np.linalg.det(b.matrix()) == pytest.approx(25.0)

    def test_zero_gradient(self):
        with pytest.raises(ZeroGradientError):
            special_basis([0.0, 0.0, 0.0, 0.0])

    def test_wrong_dimension(self):
        with pytest.raises(DimensionError):
            special_basis([1.0, 2.0, 3.0])

    @pytest.mark.parametrize("n", [2, 4, 8])
    def test_orthogonal_frame(self, n):
        rs = np.random.default_rng(n)
        for _ in range(50):
            G = rs.normal(size=n)
            A = special_basis(G).matrix()
            sq = G @ G
            assert np.max(np.abs(A.T @ A - sq * np.eye(n))) <= 1e-10 * sq
            assert np.linalg.det(A) == pytest.approx(sq ** (n / 2), rel=1e-9)


class TestProjected:
    def test_three_dimensional_listing(self):
        b = projected_special_basis([0.0, 1.0, 1.0])
        assert [list(v) for v in b.vectors] == [[-1.0, 0.0, 0.0], [0.0, 1.0, -1.0]]
        assert b.dropped == (1,)

    def test_three_dimensional_generic_vectors(self):
        g1, g2, g3 = 0.3, -0.5, 0.9
        b = projected_special_basis([g1, g2, g3])
        assert len(b.vectors) == 2
        assert np.array_equal(b.vectors[0], [-g2, g1, 0.0])
        assert np.array_equal(b.vectors[1], [-g3, 0.0, g1])

    @pytest.mark.parametrize("n", [3, 5, 6, 7])
    def test_rank_and_orthogonality(self, n):
        rs = np.random.default_rng(n)
        for _ in range(50):
            G = rs.normal(size=n)
            b = projected_special_basis(G)
            V = np.array(b.vectors)
            assert V.shape == (n - 1, n)
            assert np.linalg.matrix_rank(V) == n - 1
            assert np.max(np.abs(V @ G)) <= 1e-12 * np.linalg.norm(G) ** 2

    def test_zero_gradient(self):
        with pytest.raises(ZeroGradientError):
            projected_special_basis([0.0, 0.0, 0.0])


class TestSupplement:
    def test_no_zero_components(self):
        G = [0.5, 1.0, -0.3, 1.0]
        b = supplement_basis(G, [False] * 4)
        assert b.kind == "general"

    def test_independent_of_last_variable(self):
        b = supplement_basis([2.0, 3.0, 0.0], [False, False, True])
        assert b.kind == "supplemented"
        assert np.array_equal(b.vectors[0], [3.0, -2.0, 0.0])
        assert np.array_equal(b.vectors[1], [0.0, 0.0, 1.0])
        assert np.linalg.det(b.matrix()) == pytest.approx(
            closed_form_determinant("supplemented", 0.0, [2.0, 3.0, 0.0], [False, False, True]))

    def test_ends_only_keeps_chain_basis(self):
        b = supplement_basis([0.0, 1.0, 2.0, 0.0], [True, False, False, True])
        assert b.kind == "general"
        assert not b.degenerate

    def test_interior_zero_is_permuted(self):
        G = np.array([1.5, 0.0, -2.0, 0.7])
        mask = [False, True, False, False]
        b = supplement_basis(G, mask)
        assert b.permutation == (0, 2, 3, 1)
        V = np.array(b.vectors)
        assert np.max(np.abs(V @ G)) == 0.0
        assert np.linalg.matrix_rank(V) == 3
        assert np.linalg.det(b.matrix()) == pytest.approx(
            closed_form_determinant("supplemented", 0.0, G, mask), rel=1e-12)


class TestCoordinates:
    def test_quaternion_expansion(self):
        lam = np.array([0.5, 0.5, 0.5, 0.5])
        c = coordinates_in_basis(special_basis(lam).vectors[0], general_basis(lam))
        assert c == pytest.approx([-1.0, 0.0, 1.0], abs=1e-12)

    def test_member_gets_unit_coefficients(self):
        b = general_basis([1.0, 2.0, 3.0])
        assert coordinates_in_basis(b.vectors[0], b) == pytest.approx([1.0, 0.0], abs=1e-12)

    def test_vector_outside_span(self):
        G = np.array([1.0, 2.0, 3.0])
        with pytest.raises(ResidualError):
            coordinates_in_basis(G, general_basis(G))

    def test_degenerate_basis(self):
        with pytest.raises(SingularBasisError):
            coordinates_in_basis([0.0, 1.0, 0.0], general_basis([1.0, 0.0, 0.0]))


def test_default_kinds():
    assert [default_kind(n) for n in range(2, 11)] == [
        "special", "projected", "special", "projected", "projected", "projected", "special",
        "general", "general"]


_gradients = st.integers(2, 10).flatmap(
    lambda n: st.lists(st.floats(-10, 10, allow_nan=False).filter(lambda v: abs(v) > 1e-3),
                       min_size=n, max_size=n))


@settings(max_examples=300, deadline=None)
@given(_gradients)
def test_general_vectors_orthogonal(G):
    G = np.array(G)
    for v in general_basis(G).vectors:
        assert abs(v @ G) <= 1e-10 * np.linalg.norm(v) * np.linalg.norm(G)


@settings(max_examples=300, deadline=None)
@given(_gradients, st.floats(-5, 5))
def test_lu_determinant_matches_closed_forms(G, g0):
    G = np.array(G)
    assert np.linalg.det(general_basis(G).matrix()) == pytest.approx(
        closed_form_determinant("general", 0.0, G), rel=1e-9)
    assert np.linalg.det(time_extended_basis(g0, G).matrix()) == pytest.approx(
        closed_form_determinant("time_extended", g0, G), rel=1e-9)
