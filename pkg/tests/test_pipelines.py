import math

import numpy as np
import pytest

from curvlab import actions, geometry as G, pipelines as P
from curvlab.errors import ConfigurationError, InputError, SearchExhaustedError

HOPF = actions.hopf_action()
TORUS = actions.torus_action()


def test_config_validation():
    with pytest.raises(InputError):
        P.PipelineConfig("m", l_grid=(0.5, 1.0))
    with pytest.raises(InputError):
        P.PipelineConfig("m", lambda_grid=(1.0, -0.5))
    with pytest.raises(InputError):
        P.PipelineConfig("m", samples=2)


def test_stratified_samples_meet_their_quotas():
    out = P.stratified_samples(TORUS, TORUS.base, 20, seed=1)
    regions = [r for r, _ in out]
    assert regions.count("near") == 8 and regions.count("far") == 4 and regions.count("bulk") == 8
    for r, x in out:
        d = P._strata_distance(TORUS, x)
        if r == "near":
            assert 0.03 - 1e-9 <= d <= 0.2 + 1e-9
        elif r == "bulk":
            assert d > 0.2


def test_actions_without_strata_sample_only_the_bulk():
    regions = [r for r, _ in P.stratified_samples(HOPF, HOPF.base, 10)]
    assert "near" not in regions and regions.count("far") == 2


def test_hopf_quotient_is_the_sphere_of_radius_one_half():
    x = np.array([0.3, -0.1, 0.2])
    g = HOPF.base.metric_at(x)
    Y, Z = G.orthonormal_complement(g, [HOPF.killing(x)[:, 0]])
    assert abs(P.quotient_sectional(HOPF, HOPF.base, x, Y, Z) - 4.0) < 1e-9
    assert abs(P.quotient_ricci_min(HOPF, HOPF.base, x) - 4.0) < 1e-9


def test_first_step_picks_the_largest_parameter_that_clears_the_budget():
    # horizontal planes of the Hopf deformation have sec 4 - 3 tau^2 against 4 on the quotient
    eps = 0.2
    model, cert = P.step1(HOPF, HOPF.base, eps, P.PipelineConfig("hopf", eps=eps, samples=5, planes=2))
    tau2 = lambda l: l * l / (1 + l * l)
    expected = max(l for l in P.DEFAULT_GRID if 3 * tau2(l) < eps / 2)
    assert model.l == expected and cert.passed
    assert abs(cert.find("step1").get("discrepancy_sup").value - 3 * tau2(expected)) < 1e-8


def test_first_step_reports_an_exhausted_grid():
    with pytest.raises(SearchExhaustedError):
        P.step1(HOPF, HOPF.base, 0.01, P.PipelineConfig("hopf", eps=0.01, samples=5, planes=2))


def test_ricci_lift_needs_a_declared_fundamental_group():
    act = actions.hopf_action()
    act.pi1_finite = None
    with pytest.raises(ConfigurationError):
        P.ricci_lift(act, 5.0, 0.2)


def test_ricci_lift_refuses_an_infinite_fundamental_group():
    model, cert = P.ricci_lift(HOPF, 5.0, 0.2, config=P.PipelineConfig("hopf", samples=5))
    assert model is None and not cert.passed
    assert cert.find("hypotheses").get("hypothesis_violation").passed is False
