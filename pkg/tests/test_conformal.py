import math

import jax.numpy as jnp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from curvlab import conformal as C, geometry as G, models
from curvlab.errors import ConfigurationError, CoverageError, DomainError, FeasibilityError, InputError, ParameterError
from curvlab.profile import BumpProfile, build_profile

S3 = models.round_sphere(3)
PERT = models.perturbed_sphere(3)
POINT = G.SubmanifoldSpec.point(np.zeros(3), 3, label="p", distance_fn=lambda y: 2 * jnp.arctan(jnp.linalg.norm(y)))


@pytest.fixture(scope="module")
def prof():
    return build_profile(10.0, 0.5, 1.0, math.pi)


# ---------------------------------------------------------------- profile
def test_profile_meets_all_conditions(prof):
    margins = prof.conditions()
    assert all(m > 0 for m in margins.values()), margins
    assert prof.sigma1 < prof.sigma2 < prof.sigma3


@pytest.mark.parametrize("order", [0, 1, 2, 3])
def test_profile_derivatives_are_continuous_at_the_knots(prof, order):
    for k in prof.knots[1:]:
        left = prof.derivative(k * (1 - 1e-12), order)
        right = prof.derivative(k, order)
        scale = max(1.0, abs(prof.derivative(prof.sigma1 / 2, order)))
        assert abs(left - right) <= 1e-6 * scale / prof.sigma1 ** order


def test_profile_is_exactly_zero_beyond_its_support(prof):
    t = np.linspace(prof.sigma3, 3 * prof.sigma3, 50)
    assert np.all(prof.derivative(t) == 0.0)
    rho = prof.traced()
    assert all(float(rho(jnp.asarray(s))) == 0.0 for s in t)


def test_traced_profile_matches_the_numpy_evaluation(prof):
    t = np.linspace(0, prof.sigma3 * 1.1, 200)
    assert np.allclose(np.asarray(prof.traced()(jnp.asarray(t))), prof.derivative(t), atol=1e-14)


def test_profile_serialisation_round_trip(prof):
    back = BumpProfile.from_dict(prof.to_dict())
    t = np.linspace(0, prof.sigma3, 97)
    assert np.allclose(back.derivative(t, 2), prof.derivative(t, 2), rtol=1e-12, atol=1e-12)


@settings(max_examples=15)
@given(st.floats(1.0, 50.0), st.floats(0.05, 1.0), st.floats(-1.0, 1.0))
def test_built_profiles_are_certified_or_refused(K, eps, minsec):
    try:
        p = build_profile(K, eps, minsec, math.pi)
    except FeasibilityError:
        return
    assert all(p.check(4001).values())


def test_already_curved_base_needs_no_profile():
    p = build_profile(1.0, 0.5, 5.0, math.pi)
    assert p.trivial and p.derivative(0.0) == 0.0 and all(p.check(2001).values())


def test_profile_parameter_errors():
    with pytest.raises(ParameterError):
        build_profile(-1.0, 0.5, 1.0, math.pi)
    with pytest.raises(ParameterError):
        build_profile(10.0, 0.5, 1.0, math.pi, sigma1=10.0)
    with pytest.raises(FeasibilityError):
        build_profile(10.0, 0.5, 1.0, math.pi, sigma1=0.1)


# ---------------------------------------------------------------- conformal curvature
def test_smooth_step_shape():
    u = jnp.linspace(-0.5, 1.5, 401)
    s = np.asarray(C.smooth_step(u))
    assert s[0] == 0.0 and s[-1] == 1.0 and np.all(np.diff(s) >= 0)
    assert np.max(np.diff(s) / float(u[1] - u[0])) <= C.STEP_SLOPE_MAX + 1e-3


def test_constant_factor_divides_curvature():
    m = C.constant_conformal(S3, 0.4)
    x = np.array([0.1, 0.3, -0.2])
    assert abs(G.sectional(m, x, np.eye(3)[0], np.eye(3)[1]) - math.exp(-0.8)) < 1e-10


@pytest.mark.parametrize("x", [np.array([0.2, -0.1, 0.4]), np.array([-0.5, 0.3, 0.1])])
def test_curvature_formula_agrees_with_direct_differentiation(x):
    f = lambda y: 0.3 * jnp.sin(y[0] + 2 * y[1]) * jnp.exp(-jnp.dot(y, y)) + 0.1 * y[2] ** 3
    cm = C.ConformalMetricModel(PERT, f)
    Rf = C.conformal_curvature(PERT, cm.f_data(x), x)
    _, _, Rd = cm.curvature(x)
    assert np.max(np.abs(Rf - Rd)) <= 1e-10 * np.max(np.abs(Rd))


def test_asymmetric_hessian_data_is_refused():
    with pytest.raises(InputError):
        C.conformal_curvature(S3, (0.0, np.zeros(3), np.triu(np.ones((3, 3)))), np.zeros(3))


def test_hessian_of_the_factor_from_jacobi_fields_matches_autodiff(prof):
    cm = C.conformal_metric(S3, POINT, prof)
    rng = np.random.default_rng(0)
    for t in (0.5 * prof.sigma1, 1.5 * prof.sigma1, 0.5 * (prof.sigma2 + prof.sigma3)):
        x = C.tube_point(S3, POINT, t, rng)
        f0, df, H, tt, _ = C.hess_f(S3, POINT, prof, x)
        f1, df1, H1 = cm.f_data(x)
        assert abs(tt - t) < 1e-8 and abs(f0 - f1) < 1e-12
        assert np.allclose(df, df1, atol=1e-8 * max(1.0, np.abs(df1).max()))
        assert np.allclose(H, H1, atol=1e-6 * max(1.0, np.abs(H1).max()))


def test_conformal_model_is_bit_identical_outside_the_tube(prof):
    cm = C.conformal_metric(S3, POINT, prof)
    x = C.tube_point(S3, POINT, 1.3 * prof.sigma3, np.random.default_rng(1))
    assert cm.f(x) == 0.0 and np.array_equal(cm.metric_at(x), S3.metric_at(x))


def test_conformal_factor_needs_a_closed_form_distance(prof):
    with pytest.raises(InputError):
        C.conformal_metric(S3, G.SubmanifoldSpec.point(np.zeros(3), 3), prof)


def test_sample_plan_must_cover_every_region(prof):
    with pytest.raises(CoverageError):
        C.tube_samples(S3, POINT, prof, C.TubeSamplePlan(outer=0))


def test_exclusion_mask_is_symmetric():
    mask = C.curv_type_exclusions(3, [0])
    assert mask[0, 1, 1, 0] and mask[1, 0, 0, 1] and mask[0, 1, 0, 1] and not mask[1, 2, 2, 1]
    assert np.array_equal(mask, mask.transpose(2, 3, 0, 1))


def test_key_lemma_on_a_small_sample(prof):
    rep = C.verify_key_lemma(S3, POINT, prof, C.TubeSamplePlan(inner=4, shell=4, outer=2, planes=2))
    assert rep.passed, rep.flags
    assert rep.conclusion1_min > prof.K


# ---------------------------------------------------------------- several strata
def test_strata_configuration_errors(prof):
    tube = C.StratumTube(POINT, prof.sigma3, level=1)
    lower = C.StratumTube(POINT, prof.sigma3, level=0)
    with pytest.raises(ConfigurationError):
        C.multi_stratum_conformal(S3, [tube, lower], [prof, prof])
    with pytest.raises(ConfigurationError):
        C.multi_stratum_conformal(S3, [lower, lower], [prof, prof])      # the same point overlaps itself
    with pytest.raises(DomainError):
        C.multi_stratum_conformal(S3, [C.StratumTube(POINT, 1.0, normal_inj=1.0)], [prof])
    with pytest.raises(InputError):
        C.multi_stratum_conformal(S3, [lower], [prof, prof])


def test_two_separated_points_give_an_invariant_sum(prof):
    far = np.array([1.0, 0.0, 0.0])       # the equator, at distance pi/2 from the origin
    other = G.SubmanifoldSpec.point(far, 3, label="q",
                                    distance_fn=lambda y: S3.point_distance(y, jnp.asarray(far)))
    cm = C.multi_stratum_conformal(S3, [C.StratumTube(POINT, prof.sigma3), C.StratumTube(other, prof.sigma3)],
                                   [prof, prof])
    assert abs(cm.f(np.zeros(3)) - prof(0.0)) < 1e-14
    assert abs(cm.f(far) - prof(0.0)) < 1e-14
