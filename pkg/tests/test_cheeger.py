import math

import jax.numpy as jnp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from curvlab import actions, cheeger as CH, geometry as G, lie, models
from curvlab.errors import ConfigurationError, InputError, ParameterError
from curvlab.submersion import ricci_split

HOPF = actions.hopf_action()
S3 = HOPF.base
TORUS = actions.torus_action()
X0 = np.array([0.2, -0.3, 0.4])

vec3 = arrays(np.float64, 3, elements=st.floats(-2, 2))


def _so3():
    return [lie.elementary_rotation(3, i, j) for i, j in ((1, 2), (2, 0), (0, 1))]


def test_structure_constants_satisfy_jacobi():
    C = CH.structure_constants_from(_so3())
    assert np.allclose(C, -np.swapaxes(C, 0, 1))
    e = np.eye(3)
    for a in range(3):
        for b in range(3):
            for c in range(3):
                jac = (CH.bracket(C, e[a], CH.bracket(C, e[b], e[c])) + CH.bracket(C, e[b], CH.bracket(C, e[c], e[a]))
                       + CH.bracket(C, e[c], CH.bracket(C, e[a], e[b])))
                assert np.allclose(jac, 0)


def test_bases_not_closed_under_commutator_are_refused():
    with pytest.raises(InputError):
        CH.structure_constants_from(_so3()[:2])


def test_gram_matrix_must_be_ad_invariant():
    C = CH.structure_constants_from(_so3())
    with pytest.raises(InputError):
        CH.GroupActionModel(3, C, np.diag([1.0, 2.0, 3.0]), lambda x: jnp.zeros((3, 3)))


@pytest.mark.parametrize("action", [HOPF, TORUS, actions.davis_action()], ids=lambda a: a.label)
def test_catalog_actions_are_isometric(action):
    x = 0.1 * np.arange(1, action.base.dim + 1) / action.base.dim
    assert action.killing_identity_residual(action.base, x) < 1e-10


@pytest.mark.parametrize("l", [0.25, 1.0, 3.0])
def test_hopf_fiber_shrinks_to_the_closed_form_length(l):
    cm = CH.cheeger_metric(HOPF, S3, l)
    k = HOPF.killing(X0)[:, 0]
    assert abs(G.norm(cm.metric_at(X0), k) ** 2 - l * l / (1 + l * l)) < 1e-13


@pytest.mark.parametrize("l", [0.25, 1.0, 3.0])
def test_berger_horizontal_planes_and_a_tensor(l):
    cm = CH.cheeger_metric(HOPF, S3, l)
    g = S3.metric_at(X0)
    k = HOPF.killing(X0)[:, 0]
    h1, h2 = G.orthonormal_complement(g, [k])
    tau2 = l * l / (1 + l * l)
    assert abs(G.sectional(cm, X0, h1, h2) - (4 - 3 * tau2)) < 1e-9
    # O'Neill: the curvature gain is 3|A^Ch|^2, and A^Ch -> A^reg (of unit size) as l -> 0
    a_ch, _ = CH.a_cheeger_norm(HOPF, S3, l, X0, h1, h2)
    assert abs(a_ch ** 2 - 1 / (1 + l * l)) < 1e-9
    assert abs(CH.a_reg_norm(HOPF, S3, X0, h1, h2) - 1.0) < 1e-10


@settings(max_examples=20)
@given(vec3, vec3)
def test_reparametrisation_turns_the_deformed_metric_into_the_original(v, w):
    # g_l(Ch_l v, w) = g(v, w)
    l = 0.7
    gl = CH.cheeger_metric(HOPF, S3, l).metric_at(X0)
    ch = CH.cheeger_reparam(HOPF, S3, l, v, X0).components
    assert abs(ch @ gl @ w - v @ S3.metric_at(X0) @ w) < 1e-10 * (1 + np.abs(v).max() * np.abs(w).max())


@settings(max_examples=10)
@given(vec3, vec3, st.floats(-2, 2), st.floats(-2, 2))
def test_reparametrisation_is_linear(v, w, a, b):
    ch = lambda u: CH.cheeger_reparam(TORUS, TORUS.base, 0.5, u, X0).components
    assert np.allclose(ch(a * v + b * w), a * ch(v) + b * ch(w), atol=1e-9 * (1 + np.abs(v).max() + np.abs(w).max()))


def test_two_deformations_compose_into_one():
    l0, l1 = 0.8, 1.5
    twice = CH.cheeger_metric(TORUS, CH.cheeger_metric(TORUS, TORUS.base, l0), l1)
    once = CH.cheeger_metric(TORUS, TORUS.base, CH.iterated_parameter(l0, l1))
    assert np.allclose(twice.metric_at(X0), once.metric_at(X0), atol=1e-13)


def test_planar_rotation_closed_form():
    rot = actions.planar_rotation()
    l, r = 0.6, 1.7
    gl = CH.cheeger_metric(rot, rot.base, l).metric_at(np.array([r, 0.0]))
    assert np.allclose(gl, np.diag([1.0, l * l / (l * l + r * r)]), atol=1e-14)


def test_cheeger_parameter_must_be_positive():
    with pytest.raises(ParameterError):
        CH.cheeger_metric(HOPF, S3, 0.0)


def test_kappa_solves_its_defining_equation():
    v = np.array([0.3, -1.0, 0.5])
    res = CH.kappa(TORUS, TORUS.base, X0, v)
    K = TORUS.killing(X0)
    assert np.allclose(TORUS.B @ res.kappa, K.T @ TORUS.base.metric_at(X0) @ v, atol=1e-12)
    assert res.isotropy_dim == 0


def test_isotropy_on_a_singular_circle():
    S = TORUS.stratum("circle z2=0").S
    q = np.asarray(S.parametrization(jnp.array([0.3])))
    assert CH.isotropy_split(TORUS, TORUS.base, q).isotropy_dim == 1
    with pytest.raises(ConfigurationError):
        TORUS.stratum("nowhere")


def test_orbital_estimates_hold_on_the_hopf_action():
    rng = np.random.default_rng(0)
    pts = [rng.uniform(-1, 1, 3) for _ in range(4)]
    rep = CH.orbital_estimate_check(HOPF, S3, 0.5, pts, planes_per_point=4)
    assert rep.bound_margin >= -1e-9 and rep.lift_margin >= -1e-9 and rep.horizontal_margin >= -1e-9
    assert rep.samples == 16 and rep.horizontal_samples == 16


def test_kappa_bounds_for_unit_speed_hopf():
    c1, c2 = CH.kappa_bounds(HOPF, S3, [X0, -X0])
    assert abs(c1 - 1.0) < 1e-12 and abs(c2 - 1.0) < 1e-12


def _u2():
    i = np.array([[0, -1], [1, 0]], dtype=complex) * 1j
    mats = [1j * np.eye(2), 1j * np.diag([1, -1]), np.array([[0, 1], [-1, 0]]), np.array([[0, 1j], [1j, 0]])]
    # realify 2x2 complex as 4x4 real
    real = [np.block([[m.real, -m.imag], [m.imag, m.real]]) for m in map(np.asarray, mats)]
    return CH.structure_constants_from(real)


@pytest.mark.parametrize("C, B, h, dim", [
    (CH.structure_constants_from(_so3()), np.eye(3), np.zeros((3, 0)), 0),
    (np.zeros((2, 2, 2)), np.eye(2), np.zeros((2, 0)), 2),
    (_u2(), np.eye(4), np.zeros((4, 0)), 1),
    (_u2(), np.eye(4), np.eye(4)[:, :1], 0),
])
def test_centralizer_dimensions(C, B, h, dim):
    res = CH.berestovskii_centralizer(C, B, h)
    assert res.exact and res.dim == dim


def test_centralizer_floating_point_route_agrees():
    res = CH.berestovskii_centralizer(_u2(), math.sqrt(2) * np.eye(4), np.zeros((4, 0)))
    assert not res.exact and res.dim == 1


def test_centralizer_refuses_a_non_subalgebra():
    with pytest.raises(InputError):
        CH.berestovskii_centralizer(CH.structure_constants_from(_so3()), np.eye(3), np.eye(3)[:, :2])


def test_vertical_ricci_blows_up_like_inverse_square_for_so3():
    davis = actions.davis_action()
    x = np.full(7, 0.15)
    rep = CH.vertical_ricci_probe(davis, davis.base, [1.0, 0.25, 0.0625, 0.015625], [x])
    assert rep.diverges and abs(rep.exponent + 2) < 0.2


def test_vertical_ricci_of_a_circle_does_not_blow_up():
    # a circle carries a flat bi-invariant metric
    rep = CH.vertical_ricci_probe(HOPF, S3, [1.0, 0.5, 0.25, 0.125], [X0, -X0])
    assert not rep.diverges
    with pytest.raises(InputError):
        CH.vertical_ricci_probe(HOPF, S3, [0.5, 1.0], [X0])


def test_product_submersion_satisfies_gray_oneill():
    spec = CH.product_submersion(TORUS, TORUS.base, 0.7)
    z = np.concatenate([[0.1, -0.2], X0])
    assert ricci_split(spec, z).residual < 1e-9
    with pytest.raises(ConfigurationError):
        CH.product_submersion(actions.davis_action(), actions.davis_action().base, 0.5)


def test_torus_tube_diagnostics():
    st_ = TORUS.declared_strata[0]
    rep = CH.singular_tube_diagnostics(TORUS, TORUS.base, st_, np.geomspace(0.02, 0.3, 5), cone_samples=60)
    assert np.max(rep.orphan_angle) < 1e-8 and rep.kappa_C > 0
