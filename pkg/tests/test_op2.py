import math

import numpy as np
import pytest

from curvlab import algebra, lie, op2
from curvlab.errors import DegeneratePlaneError, DomainError, InputError, OrderingError

O = algebra.octonions()
H = algebra.quaternions()


@pytest.fixture(scope="module")
def split8():
    return lie.spin9_split()


@pytest.mark.parametrize("t", [0.3, math.pi / 2, 2.8])
def test_horizontal_frame_is_orthogonal_to_the_orbit(split8, t):
    frame = op2.q_horizontal_frame(t=t, split=split8)
    assert frame.dim == 16            # dim S^8 + dim m_9 - dim m_8 ... = 1 + 8 + 7
    assert frame.residual < 1e-10
    assert op2.taut_residual(frame) < 1e-10
    assert np.linalg.matrix_rank(frame.vectors) == 16


def test_pole_frame(split8):
    frame = op2.q_horizontal_frame(pole=1, split=split8)
    assert frame.residual < 1e-10 and frame.dim == 16


def test_frame_needs_an_interior_t(split8):
    with pytest.raises(DomainError):
        op2.q_horizontal_frame(t=0.0, split=split8)
    with pytest.raises(InputError):
        op2.q_horizontal_frame(pole=2, split=split8)


def test_fiber_scale_is_uniform(split8):
    lam, spread = op2.fiber_scale(split8)
    assert spread < 1e-12 and abs(lam - 1.0) < 1e-12
    lam4, spread4 = op2.fiber_scale(lie.hopf_split(4))
    assert spread4 < 1e-12 and abs(lam4 - 0.5) < 1e-12


def test_product_curvature_on_a_known_plane(split8):
    # (0, X) and (k, 0) with k in m_9: flat in both factors
    frame = op2.q_horizontal_frame(t=1.0, split=split8)
    assert op2.product_curvature(split8, frame.radial[0], frame.base[0]) < 1e-14
    with pytest.raises(DegeneratePlaneError):
        op2.product_curvature(split8, frame.radial[0], 2 * frame.radial[0])


def test_zero_planes_have_the_predicted_form(split8):
    rep = op2.zero_plane_search(t=1.1, restarts=6, frame=op2.q_horizontal_frame(t=1.1, split=split8))
    assert rep.min_sec <= 1e-8 and rep.form_angle <= 1e-3 and rep.accepted


def test_zero_planes_at_a_pole(split8):
    rep = op2.zero_plane_search(restarts=6, frame=op2.q_horizontal_frame(pole=-1, split=split8))
    assert rep.min_sec <= 1e-8 and rep.form_angle <= 1e-3


def test_base_and_fiber_family_has_no_zero_planes():
    rep = op2.zero_plane_search(t=1.1, restarts=6, within="P")
    assert rep.min_sec > 1e-3


def test_quaternionic_zero_planes():
    rep = op2.zero_plane_search(t=0.7, b=4, restarts=6)
    assert rep.accepted


def test_berger_family_is_t_independent_for_hopf_horizontal_vectors():
    rng = np.random.default_rng(0)
    Z = op2.LiftData(rng.standard_normal(8), np.zeros(7))
    W = op2.LiftData(rng.standard_normal(8), rng.standard_normal(7))
    ts = np.linspace(0.2, 2.9, 7)
    rep = op2.berger_family_check(Z, W, ts)
    assert rep.variation <= 1e-10 and rep.horizontal_residual < 1e-10 and rep.z_hopf_horizontal
    assert op2.berger_family_check(W, W, ts).variation > 1e-3


def test_davis_hopf_witness_at_a_simple_point():
    res = op2.davis_hopf_angle(H, np.eye(4)[1], np.zeros(4))
    assert res.orbit_residual < 1e-12
    assert abs(res.angle_to_horizontal - math.pi / 2) < 1e-6


def test_davis_hopf_grid_is_positive():
    rep = op2.davis_hopf_grid(O, 60, seed=3)
    assert rep.count == 60 and rep.alpha > 0 and rep.max_fiber_crosscheck < 1e-6


def test_fiber_tangent_matches_the_right_action():
    rng = np.random.default_rng(4)
    p = np.concatenate(algebra.chart_h1(H, rng.standard_normal(4), H.random_unit(rng)).reshape(1, -1))
    rows, gap = op2.hopf_fiber_tangent(H, p)
    assert rows.shape[0] == 3 and gap > 1e-3


def test_quotient_ricci_requires_its_prerequisites():
    with pytest.raises(OrderingError):
        op2.quotient_ricci_certificate(H, None, None)


def test_quotient_ricci_quaternionic():
    zero = op2.zero_plane_search(t=1.0, b=4, restarts=4)
    grid = op2.davis_hopf_grid(H, 40, seed=1)
    rep = op2.quotient_ricci_certificate(H, zero, grid, count=4, seed=1)
    assert rep.passed and rep.beta_min > 0 and rep.control_refused
