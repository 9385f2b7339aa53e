import numpy as np
import pytest

from curvlab import actions, suites
from curvlab.errors import InputError
from curvlab.submersion import a_tensor, ricci_split


def test_every_suite_has_defaults_and_models():
    assert set(suites.SUITES) == set(suites.DEFAULTS) == set(suites.MODELS)


def test_tolerance_scaling_touches_only_tolerances():
    base = suites.resolve_params("exotic-op2")
    scaled = suites.resolve_params("exotic-op2", tol_scale=10.0)
    for k, v in base.items():
        if k.startswith("tol_"):
            assert scaled[k] == pytest.approx(10 * v)
        else:
            assert scaled[k] == v


def test_unknown_parameter_and_model():
    with pytest.raises(InputError):
        suites.resolve_params("core-curvature", {"bogus": 1})
    with pytest.raises(InputError):
        suites.SuiteRequest("cheeger-estimates", "round-S2", {}, 0).validate()


def test_hopf_fibration_a_tensor_two_routes():
    spec = actions.hopf_submersion()
    x = np.array([0.2, 0.5, -0.3])
    Aa, _, _ = a_tensor(spec, x, "autodiff")
    Af, _, tol = a_tensor(spec, x, "fd")
    assert np.max(np.abs(Aa - Af)) <= 10 * tol + 1e-9
    rs = ricci_split(spec, x)
    assert rs.residual < 1e-9
    # |A_X Y| = 1 for orthonormal horizontal X, Y of the unit-speed Hopf circle
    assert np.allclose(rs.ric_a, np.eye(2), atol=1e-9)
