import math

import jax.numpy as jnp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from curvlab import geometry as G, models
from curvlab.errors import DomainError, InputError

S2 = models.round_sphere(2)
S3 = models.round_sphere(3)
PERT = models.perturbed_sphere(3)
NORTH, SOUTH, TRANS = models.sphere_atlas(3)

coords = st.floats(-1.5, 1.5, allow_nan=False)


def pt(n):
    return arrays(np.float64, n, elements=coords)


def independent(n):
    return st.tuples(pt(n), pt(n)).filter(lambda uv: np.linalg.norm(np.cross(*uv)) > 1e-2) if n == 3 else \
        st.tuples(pt(n), pt(n)).filter(lambda uv: abs(uv[0][0] * uv[1][1] - uv[0][1] * uv[1][0]) > 1e-2)


def test_flat_space_has_zero_curvature():
    _, gamma, R = models.flat(4).curvature(np.array([0.3, -1.0, 2.0, 0.5]))
    assert np.max(np.abs(R)) == 0.0 and np.max(np.abs(gamma)) == 0.0


@settings(max_examples=30)
@given(pt(3), independent(3))
def test_round_three_sphere_has_unit_sectional_curvature(x, uv):
    assert abs(G.sectional(S3, x, *uv) - 1.0) < 1e-9


@given(pt(2))
def test_round_two_sphere_ricci_is_the_metric(x):
    g = S2.metric_at(x)
    assert np.allclose(G.ricci(S2, x), g, atol=1e-10 * np.max(g))


def test_ricci_of_the_three_sphere_is_twice_the_metric():
    x = np.array([0.2, -0.4, 0.1])
    assert np.allclose(G.ricci(S3, x), 2 * S3.metric_at(x), atol=1e-10)
    assert np.allclose(G.ricci_eigenvalues(S3, x), 2.0, atol=1e-10)


@pytest.mark.parametrize("radius", [0.5, 2.0])
def test_sphere_radius_scales_curvature(radius):
    m = models.round_sphere(3, radius)
    assert abs(G.sectional(m, np.array([0.1, 0.2, 0.3]), np.eye(3)[0], np.eye(3)[2]) - radius ** -2) < 1e-9


def test_homothety_scales_curvature_and_distance():
    m = models.scaled(S2, 3.0)
    x, y = np.array([0.1, 0.2]), np.array([-0.5, 0.4])
    assert abs(G.sectional(m, x, np.eye(2)[0], np.eye(2)[1]) - 1 / 9) < 1e-10
    assert abs(float(m.point_distance(x, y)) - 3 * float(S2.point_distance(x, y))) < 1e-12


def test_product_of_circle_factors_has_flat_mixed_planes():
    m = models.product(S2, models.flat(1))
    x = np.array([0.3, 0.1, 0.0])
    e = np.eye(3)
    assert abs(G.sectional(m, x, e[0], e[2])) < 1e-12
    assert abs(G.sectional(m, x, e[0], e[1]) - 1.0) < 1e-9


@given(pt(3))
def test_curvature_tensor_symmetries_without_any_isometries(x):
    _, _, R = PERT.curvature(x)
    res = G.curvature_symmetry_residuals(R)
    assert max(res.values()) < 1e-12


def test_autodiff_and_finite_difference_jets_agree():
    x = np.array([0.3, -0.2, 0.5])
    _, _, Ra = PERT.curvature(x, method="autodiff")
    _, _, Rf = PERT.curvature(x, method="fd")
    assert np.max(np.abs(Ra - Rf)) < 1e-5 * np.max(np.abs(Ra))


def test_non_traceable_metric_falls_back_to_differences():
    m = G.MetricModel(2, lambda x: np.asarray(S2.metric_fn(jnp.asarray(x))), traceable=False)
    assert abs(G.sectional(m, np.array([0.2, 0.1]), np.eye(2)[0], np.eye(2)[1]) - 1.0) < 1e-6


@settings(max_examples=15)
@given(pt(3).filter(lambda x: np.linalg.norm(x) > 0.2), independent(3))
def test_sectional_curvature_is_chart_invariant(x, uv):
    # the north origin is the point at infinity of the south chart
    y, u2 = models.pushforward(TRANS, x, uv[0])
    _, v2 = models.pushforward(TRANS, x, uv[1])
    assert abs(G.sectional(NORTH, x, *uv) - G.sectional(SOUTH, y, u2, v2)) < 1e-9


def test_metric_is_an_isometry_across_the_atlas():
    north, south, trans = models.sphere_atlas(2)
    x, u = np.array([0.4, -0.7]), np.array([1.0, 2.0])
    y, w = models.pushforward(trans, x, u)
    assert abs(G.inner(north.metric_at(x), u, u) - G.inner(south.metric_at(y), w, w)) < 1e-12


def test_exp_travels_the_requested_distance_and_log_inverts_it():
    x = np.array([0.1, -0.3])
    v = np.array([0.4, 0.25])
    y = G.exp_map(S2, x, v)
    assert abs(float(S2.point_distance(x, y)) - G.norm(S2.metric_at(x), v)) < 1e-8
    assert np.allclose(G.log_map(S2, x, y), v, atol=1e-7)


def test_geodesic_needs_a_unit_velocity():
    with pytest.raises(InputError):
        G.geodesic(S2, np.zeros(2), np.array([1.0, 0.0]), 1.0)


def test_points_outside_the_chart_are_refused():
    with pytest.raises(DomainError):
        S2.metric_at(np.array([100.0, 0.0]))
    with pytest.raises(DomainError):
        PERT.curvature(np.zeros(2))


def test_jacobi_field_on_the_unit_sphere_is_a_sine():
    v = np.array([0.5, 0.0])           # unit at the chart origin
    e = np.array([0.0, 0.5])
    ts = np.linspace(0, 2.5, 11)
    geo = G.geodesic(S2, np.zeros(2), v, ts[-1], samples=ts)
    sol = G.jacobi_transport(S2, geo, np.zeros(2), e)
    lens = [G.norm(S2.metric_at(p), J) for p, J in zip(sol.geodesic.points, sol.J[0])]
    assert np.allclose(lens, np.sin(ts), atol=1e-7)
    assert sol.residual < 1e-5


def test_distance_to_a_point_by_search_matches_the_closed_form():
    S = G.SubmanifoldSpec.point(np.zeros(3), 3)
    x = np.array([0.3, -0.2, 0.4])
    res = G.dist_to_submanifold(S3, S, x)
    assert abs(res.t - 2 * math.atan(np.linalg.norm(x))) < 1e-9
    assert abs(G.norm(S3.metric_at(x), res.X.components) - 1.0) < 1e-9


@pytest.mark.parametrize("x", [np.array([0.3, 0.1, -0.2]), np.array([0.05, 0.0, 0.02])])
def test_hessian_of_distance_to_a_point_is_cot_times_the_transverse_metric(x):
    S = G.SubmanifoldSpec.point(np.zeros(3), 3, distance_fn=lambda y: 2 * jnp.arctan(jnp.linalg.norm(y)))
    d = 2 * math.atan(np.linalg.norm(x))
    hr = G.hess_distance(S3, S, x, method="both")
    g = S3.metric_at(x)
    X = hr.X / G.norm(g, hr.X)
    gX = g @ X
    expected = (g - np.outer(gX, gX)) / math.tan(d)
    assert np.allclose(hr.form, expected, atol=1e-6 * np.max(np.abs(expected)))
    assert hr.consistent


def test_min_sectional_search_on_the_round_sphere():
    g, _, R = S3.curvature(np.array([0.2, 0.3, 0.1]))
    assert abs(G.min_sectional(g, R, rng=np.random.default_rng(0)) - 1.0) < 1e-8


def test_gram_schmidt_and_complement_are_orthonormal():
    g = PERT.metric_at(np.array([0.2, 0.4, -0.1]))
    basis = G.gram_schmidt(g, [np.array([1.0, 1, 0]), np.array([0.0, 1, 1])])
    comp = G.orthonormal_complement(g, basis)
    B = np.array(basis + comp)
    assert np.allclose(B @ g @ B.T, np.eye(3), atol=1e-12)
