import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from curvlab import algebra as A
from curvlab.errors import DomainError, InputError

H = A.quaternions()
O = A.octonions()
O_RIGHT = A.octonions("right")

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def vec(n):
    return arrays(np.float64, n, elements=finite)


def unit(n):
    return vec(n).filter(lambda v: np.linalg.norm(v) > 1e-3).map(lambda v: v / np.linalg.norm(v))


def nonzero(n):
    return vec(n).filter(lambda v: np.linalg.norm(v) > 1e-2)


def test_quaternions_follow_hamilton():
    # i j = k, j k = i, k i = j, i^2 = j^2 = k^2 = -1
    one, i, j, k = np.eye(4)
    assert np.allclose(H.mul(i, j), k) and np.allclose(H.mul(j, k), i) and np.allclose(H.mul(k, i), j)
    for e in (i, j, k):
        assert np.allclose(H.mul(e, e), -one)


def test_octonion_low_products():
    e = np.eye(8)
    assert np.allclose(O.mul(e[1], e[2]), e[3])
    assert np.allclose(O.mul(e[1], e[4]), e[5])


@pytest.mark.parametrize("alg", [H, O, A.quaternions("right"), O_RIGHT])
def test_normed_and_alternative(alg):
    res = A.algebra_residuals(alg, samples=500)
    assert res["composition"] < 1e-12
    assert res["alternative"] < 1e-12


def test_octonions_are_not_associative_but_quaternions_are():
    assert A.algebra_residuals(H)["associator"] < 1e-12
    assert A.algebra_residuals(O)["associator"] > 0.1


def test_the_two_doubling_conventions_differ():
    assert not np.array_equal(A.cayley_dickson_table(8, "left"), A.cayley_dickson_table(8, "right"))


def test_shipped_tables_match_the_generator():
    tables = A.shipped_tables()
    for key, alg in tables.items():
        name, conv = key.split("-")
        assert np.array_equal(alg.table, A.cayley_dickson_table(alg.dim, conv))


def test_bad_table_arguments():
    with pytest.raises(InputError):
        A.cayley_dickson_table(8, "sideways")
    with pytest.raises(InputError):
        A.cayley_dickson_table(16)


@given(vec(8), vec(8), vec(8))
def test_moufang_identity(x, y, z):
    # z(x(zy)) = ((zx)z)y holds in every alternative algebra
    lhs = O.mul(z, O.mul(x, O.mul(z, y)))
    rhs = O.mul(O.mul(O.mul(z, x), z), y)
    assert np.allclose(lhs, rhs, atol=1e-9 * (1 + np.abs(lhs).max()))


@given(vec(8), vec(8))
def test_conjugation_reverses_products(x, y):
    assert np.allclose(O.conj(O.mul(x, y)), O.mul(O.conj(y), O.conj(x)), atol=1e-10)


@given(nonzero(8))
def test_inverse(x):
    assert np.allclose(O.mul(x, O.inverse(x)), O.one(), atol=1e-10)


@given(unit(8), st.integers(-3, 3), st.integers(-3, 3))
def test_powers_of_a_unit_are_units_and_add(w, m, n):
    assert abs(np.linalg.norm(O.power(w, m)) - 1) < 1e-10
    assert np.allclose(O.mul(O.power(w, m), O.power(w, n)), O.power(w, m + n), atol=1e-10)


@given(unit(16))
def test_hopf_lands_on_the_half_sphere(p):
    y = A.hopf(O, p[:8], p[8:])
    assert abs(np.linalg.norm(y) - 0.5) < 1e-12


def test_hopf_rejects_points_off_the_sphere():
    with pytest.raises(InputError):
        A.hopf(H, np.ones(4), np.ones(4))


@given(vec(8), unit(8))
def test_charts_parametrise_the_sphere_and_invert(u, q):
    p = A.chart_h1(O, u, q)
    assert abs(np.linalg.norm(p) - 1) < 1e-12
    u2, q2 = A.chart_h1_inverse(O, p)
    assert np.allclose(u2, u, atol=1e-9 * (1 + np.abs(u).max())) and np.allclose(q2, q, atol=1e-10)


@given(vec(8), unit(8))
def test_points_in_one_chart_have_the_same_hopf_image_along_the_fiber(u, q):
    # h1(u, .) sweeps one Hopf fiber
    p1 = A.chart_h1(O, u, q)
    p2 = A.chart_h1(O, u, np.eye(8)[0])
    assert np.allclose(A.hopf(O, p1[:8], p1[8:]), A.hopf(O, p2[:8], p2[8:]), atol=1e-10)


@given(nonzero(8), unit(8))
def test_transition_closed_form(u, q):
    a, b = A.chart_transition(O, u, q)
    c, d = A.transition_closed_form(O, u, q)
    assert np.allclose(a, c, atol=1e-10) and np.allclose(b, d, atol=1e-10)


def test_transition_undefined_at_origin():
    with pytest.raises(DomainError):
        A.chart_transition(O, np.zeros(8), np.eye(8)[0])
    with pytest.raises(DomainError):
        A.chart_h2_inverse(O, np.concatenate([np.zeros(8), np.eye(8)[0]]))


@given(nonzero(4), unit(4), st.integers(-3, 3), st.integers(-3, 3))
def test_bundle_transition_round_trip(u, v, m, n):
    pair = A.BundleChartPair(H, m, n)
    u2, v2 = pair.transition(u, v)
    u1, v1 = pair.inverse(u2, v2)
    assert np.allclose(u1, u, atol=1e-9) and np.allclose(v1, v, atol=1e-10)
    assert abs(np.linalg.norm(v2) - 1) < 1e-10


def test_homotopy_sphere_condition():
    assert A.BundleChartPair(H, 2, -1).is_homotopy_sphere
    assert A.BundleChartPair(H, 1, 0).is_homotopy_sphere
    assert not A.BundleChartPair(H, 1, 1).is_homotopy_sphere


def test_derivation_dimensions():
    assert len(A.derivation_algebra(H)) == 3
    assert len(A.derivation_algebra(O)) == 14
    assert len(A.derivation_algebra(O_RIGHT)) == 14


def test_derivations_close_and_exponentiate_to_automorphisms():
    ders = A.derivation_algebra(O)
    assert A.derivation_closure_residual(ders) < 1e-12
    rng = np.random.default_rng(0)
    for _ in range(5):
        g = A.random_automorphism(O, rng, derivations=ders)
        assert A.automorphism_residual(O, g) < 1e-12
        assert np.allclose(g.T @ g, np.eye(8), atol=1e-12)


@given(nonzero(4), unit(4), st.integers(0, 2**31 - 1))
def test_clutching_map_is_equivariant(u, v, seed):
    ders = A.derivation_algebra(H)
    g = A.random_automorphism(H, np.random.default_rng(seed), derivations=ders)
    for m, n in ((1, 0), (2, -1)):
        pair = A.BundleChartPair(H, m, n)
        gu, gv = A.davis_act(H, g, u, v)
        a, b = pair.transition(gu, gv)
        c, d = pair.transition(u, v)
        assert np.allclose(a, g @ c, atol=1e-10) and np.allclose(b, g @ d, atol=1e-10)


def test_davis_action_refuses_non_automorphisms():
    with pytest.raises(InputError):
        A.davis_act(H, np.diag([1.0, -1.0, 1.0, 1.0]), np.eye(4)[0], np.eye(4)[1])


@pytest.mark.parametrize("u, v, label", [
    (np.eye(4)[0], np.eye(4)[0], "SO(3)"),
    (np.eye(4)[1], np.eye(4)[1], "SO(2)"),
    (np.eye(4)[1], np.eye(4)[2], "trivial"),
])
def test_quaternionic_isotropy(u, v, label):
    assert A.isotropy_classify(H, u, v) == label
    assert A.isotropy_dimension(H, u, v) == {"SO(3)": 3, "SO(2)": 1, "trivial": 0}[label]


@pytest.mark.parametrize("u, v, dim", [
    (np.eye(8)[0], np.eye(8)[0], 14),
    (np.eye(8)[1], np.eye(8)[1], 8),
    (np.eye(8)[1], np.eye(8)[2], 3),
])
def test_octonionic_isotropy(u, v, dim):
    # G2, SU(3) and SU(2) have dimensions 14, 8 and 3
    assert A.isotropy_dimension(O, u, v) == dim
    assert A.isotropy_classify(O, u, v) == {14: "G2", 8: "SU(3)", 3: "SU(2)"}[dim]


def test_half_spin_representation_is_a_homomorphism():
    rho = A.half_spin_representation(O)
    basis = A._so_basis(8)
    rng = np.random.default_rng(1)
    for _ in range(5):
        X = sum(rng.standard_normal() * E for E in basis)
        Y = sum(rng.standard_normal() * E for E in basis)
        assert np.allclose(rho(X @ Y - Y @ X), rho(X) @ rho(Y) - rho(Y) @ rho(X), atol=1e-10)


def test_triality_partner_solves_the_defining_identity():
    rng = np.random.default_rng(2)
    Amat = sum(rng.standard_normal() * E for E in A._so_basis(8))
    B, C = A.triality_partner(O, Amat)
    x, y = rng.standard_normal(8), rng.standard_normal(8)
    assert np.allclose(Amat @ O.mul(x, y), O.mul(B @ x, y) + O.mul(x, C @ y), atol=1e-10)


def test_half_spin_stabilisers():
    # stabiliser of a unit vector: spin(7) (dim 21) for octonions, su(2) (dim 3) for quaternions
    for alg, dim in ((O, 21), (H, 3)):
        rho = A.half_spin_representation(alg)
        basis = A._so_basis(alg.dim)
        x = np.eye(alg.dim)[0]
        M = np.array([rho(E) @ x for E in basis]).T
        assert len(basis) - np.linalg.matrix_rank(M, tol=1e-10) == dim
