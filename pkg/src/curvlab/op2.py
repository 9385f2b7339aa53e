"""Curvature of F P^2 # -F P^2 through its biquotient presentation
(Spin(b+1) x S^b)/Spin(b), b = 8 for octonions and b = 4 for quaternions.

Everything is evaluated at a point (A, y) with A = identity, which loses nothing
because the metric is left invariant.  A tangent vector of Spin(b+1) x S^b is a
flat array: coordinates in the orthonormal basis of the split Lie algebra,
followed by an ambient vector in R^{b+1} tangent to the unit sphere at y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import jax
import jax.numpy as jnp
import numpy as np
from scipy.linalg import null_space, subspace_angles
from scipy.optimize import minimize

from . import algebra as alg_mod
from .errors import DegeneratePlaneError, DomainError, InputError, OrderingError
from .lie import LieAlgebraMatrixModel, hopf_split, sphere_action
from .parallel import thread_map

FRAME_TOL = 1e-10
ACCEPT_MIN = 1e-8
WARN_MIN = 1e-6
FORM_ANGLE_TOL = 1e-3


def sphere_point(x, t):
    """The point at distance t from the north pole e_{b+1}, in the direction x in S^{b-1}."""
    x = np.asarray(x, dtype=float)
    return np.concatenate([math.sin(t) * x, [math.cos(t)]])


def radial_field(x, t):
    """Gradient of the distance from the north pole."""
    return np.concatenate([math.cos(t) * np.asarray(x, dtype=float), [-math.sin(t)]])


def _killing_on_sphere(split: LieAlgebraMatrixModel, coords, y):
    """k_{S^b}(y) for k in so(b), acting on the first b coordinates."""
    return sphere_action(split, coords) @ y


def fiber_scale(split: LieAlgebraMatrixModel):
    """lam with |k_{S^b}(x)|^2 = lam |k|^2 on m_fiber at the equator, plus the spread over the basis."""
    eye = np.eye(split.dim)
    xe = np.concatenate([split.x, [0.0]])
    vals = [float(np.sum(_killing_on_sphere(split, eye[k], xe) ** 2)) for k in split.summands["m_fiber"]]
    return float(np.mean(vals)), float(np.max(vals) - np.min(vals))


@dataclass
class HorizontalFrame:
    x: np.ndarray
    t: float
    pole: Optional[int]
    y: np.ndarray
    split: LieAlgebraMatrixModel
    radial: np.ndarray       # rows (0, X); one row, or b rows at a pole
    base: np.ndarray         # rows (k, 0), k in m_base
    fiber: np.ndarray        # rows (sin^2 t k, k_{S^b}), k in m_fiber; empty at a pole
    iota: np.ndarray         # columns: k_{S^b}(y) for the m_fiber basis
    vertical: np.ndarray     # rows (-k, k_{S^b}) for k in so(b)
    residual: float

    @property
    def vectors(self):
        return np.vstack([self.radial, self.base, self.fiber])

    @property
    def dim(self):
        return self.vectors.shape[0]

    @property
    def lie_dim(self):
        return self.split.dim

    def orthonormal(self, rows=None):
        V = self.vectors if rows is None else rows
        Q, _ = np.linalg.qr(V.T)
        return Q.T

    def family_P(self):
        """The base and fiber families together, i.e. the frame without X."""
        return np.vstack([self.base, self.fiber])

    def zero_form(self):
        """Rows spanning span{X} + (m_base, 0), the subspace that holds every zero plane."""
        return np.vstack([self.radial, self.base])


def q_horizontal_frame(x=None, t=None, pole=None, b=8, split=None) -> HorizontalFrame:
    """Horizontal space of q at (identity, (x, t)), or at (identity, +-e_{b+1}) with ``pole``."""
    if split is None:
        split = hopf_split(b, x)
    b = split.size - 1
    x = split.x if x is None else np.asarray(x, dtype=float)
    if np.max(np.abs(x - split.x)) > 1e-12:
        raise InputError("x differs from the point the splitting was built at")
    dimG = split.dim
    eye = np.eye(dimG)
    so_b = split.summands["so_b"]
    if pole is not None:
        if pole not in (1, -1):
            raise InputError("pole must be +1 or -1")
        t = 0.0 if pole == 1 else math.pi
        y = np.zeros(b + 1)
        y[b] = float(pole)
        radial = np.hstack([np.zeros((b, dimG)), np.eye(b + 1)[:b]])
    else:
        if t is None or not (0.0 < t < math.pi):
            raise DomainError("t must lie in (0, pi) unless a pole is requested")
        y = sphere_point(x, t)
        radial = np.concatenate([np.zeros(dimG), radial_field(x, t)])[None, :]
    base = np.hstack([eye[split.summands["m_base"]], np.zeros((b, b + 1))])
    iota = np.array([_killing_on_sphere(split, eye[k], y) for k in split.summands["m_fiber"]]).T
    if pole is None:
        s2 = fiber_scale(split)[0] * math.sin(t) ** 2
        fiber = np.hstack([s2 * eye[split.summands["m_fiber"]], iota.T])
    else:
        fiber = np.zeros((0, dimG + b + 1))
    vertical = np.array([np.concatenate([-eye[k], _killing_on_sphere(split, eye[k], y)]) for k in so_b])
    frame = np.vstack([radial, base, fiber])
    residual = float(np.max(np.abs(frame @ vertical.T)))
    tangent = float(np.max(np.abs(frame[:, dimG:] @ y)))
    residual = max(residual, tangent)
    return HorizontalFrame(x, float(t), pole, y, split, radial, base, fiber, iota, vertical, residual)


def taut_residual(frame: HorizontalFrame):
    """max |-sin^2 t <k8, k> + <k8_S, k_S>| over k8 in m_fiber and k in so(b)."""
    if frame.pole is not None:
        return 0.0
    split = frame.split
    s2 = fiber_scale(split)[0] * math.sin(frame.t) ** 2
    eye = np.eye(split.dim)
    worst = 0.0
    for k8 in split.summands["m_fiber"]:
        for k in split.summands["so_b"]:
            val = -s2 * (eye[k8] @ eye[k]) + _killing_on_sphere(split, eye[k8], frame.y) @ _killing_on_sphere(split, eye[k], frame.y)
            worst = max(worst, abs(val))
    return worst


# ---------------------------------------------------------------- curvature of the product
def _curv_parts(C, dimG, U, W):
    br = jnp.einsum("abc,a,b->c", C, U[:dimG], W[:dimG])
    lie_part = 0.25 * jnp.dot(br, br)
    u2, w2 = U[dimG:], W[dimG:]
    sphere_part = jnp.dot(u2, u2) * jnp.dot(w2, w2) - jnp.dot(u2, w2) ** 2
    area = jnp.dot(U, U) * jnp.dot(W, W) - jnp.dot(U, W) ** 2
    return lie_part, sphere_part, area


def product_curvature(split: LieAlgebraMatrixModel, U, W, normalise=True):
    """Curvature of span{U, W} in g_bi + round S^b: 1/4|[U1, W1]|^2 + |U2 ^ W2|^2 over the area."""
    C = jnp.asarray(split.structure_constants())
    lie_part, sphere_part, area = (float(v) for v in _curv_parts(C, split.dim, jnp.asarray(U, dtype=float), jnp.asarray(W, dtype=float)))
    if area <= 1e-24 * max(1.0, float(np.dot(U, U) * np.dot(W, W))):
        raise DegeneratePlaneError("vectors do not span a plane")
    total = lie_part + sphere_part
    return total / area if normalise else total


def product_plane_curvature(frame: HorizontalFrame, a, c, normalise=True):
    """Curvature of the plane spanned by the frame combinations a . frame and c . frame."""
    V = frame.vectors
    return product_curvature(frame.split, np.asarray(a) @ V, np.asarray(c) @ V, normalise)


def _sec_objective(C, dimG, Q):
    Qj = jnp.asarray(Q)
    m = Q.shape[0]

    def f(z):
        U = z[:m] @ Qj
        W = z[m:] @ Qj
        lie_part, sphere_part, area = _curv_parts(C, dimG, U, W)
        return (lie_part + sphere_part) / area

    return jax.jit(f), jax.jit(jax.grad(f))


@dataclass
class ZeroPlaneReport:
    x: np.ndarray
    t: float
    pole: Optional[int]
    subspace: str
    min_sec: float
    plane: np.ndarray           # 2 x (dimG + b + 1), orthonormal rows
    form_angle: float           # deviation from the span{X} + m_base form, radians
    restart_values: list
    warning: str = ""

    @property
    def accepted(self):
        return self.min_sec <= ACCEPT_MIN and self.form_angle <= FORM_ANGLE_TOL


def _orthonormal_plane(U, W):
    Q, _ = np.linalg.qr(np.vstack([U, W]).T)
    return Q.T


def classify_plane(frame: HorizontalFrame, plane):
    """Angle by which a plane misses the zero-plane form at this point.

    Away from the poles the form is span{(0, X), (k, 0)} with k in m_base: the
    plane must sit in span{X} + m_base and contain X.  At a pole the form is a
    line in T S^b plus a line in m_base, so each factor sees a one-dimensional
    projection.
    """
    P = _orthonormal_plane(*plane)
    dimG = frame.lie_dim
    if frame.pole is None:
        target = frame.orthonormal(frame.zero_form())
        inside = float(np.max(subspace_angles(P.T, target.T)))
        X = frame.radial[0] / np.linalg.norm(frame.radial[0])
        proj = P.T @ (P @ X)
        contains = float(math.asin(min(1.0, np.linalg.norm(X - proj))))
        return max(inside, contains)
    pieces = []
    target = frame.orthonormal(frame.zero_form())
    pieces.append(float(np.max(subspace_angles(P.T, target.T))))
    for block in (P[:, :dimG], P[:, dimG:]):
        s = np.linalg.svd(block, compute_uv=False)
        pieces.append(float(math.asin(min(1.0, s[1]))))
    return max(pieces)


def zero_plane_search(x=None, t=None, restarts=20, pole=None, b=8, within="horizontal", seed=0,
                      threads=None, frame: HorizontalFrame = None) -> ZeroPlaneReport:
    """Multistart minimisation of the product curvature over planes of a horizontal subspace.

    ``within`` is 'horizontal' (the whole horizontal space) or 'P' (the base and
    fiber families, a control that should stay strictly positive).
    """
    if frame is None:
        frame = q_horizontal_frame(x, t, pole=pole, b=b)
    if within == "horizontal":
        Q = frame.orthonormal()
    elif within == "P":
        if frame.pole is not None:
            raise InputError("the P family is defined away from the poles")
        Q = frame.orthonormal(frame.family_P())
    else:
        raise InputError(f"unknown search subspace {within!r}")
    C = jnp.asarray(frame.split.structure_constants())
    f, grad = _sec_objective(C, frame.lie_dim, Q)
    m = Q.shape[0]
    seeds = np.random.SeedSequence(seed).spawn(restarts)

    def run(ss):
        rng = np.random.default_rng(ss)
        z0 = rng.standard_normal(2 * m)
        res = minimize(lambda z: float(f(z)), z0, jac=lambda z: np.asarray(grad(z)), method="BFGS",
                       options={"gtol": 1e-14, "maxiter": 4000})
        z = res.x
        return float(f(z)), z

    results = thread_map(run, seeds, threads)
    values = [v for v, _ in results]
    best = int(np.argmin(values))
    z = results[best][1]
    U, W = z[:m] @ Q, z[m:] @ Q
    plane = _orthonormal_plane(U, W)
    min_sec = values[best]
    warning = ""
    if min_sec > WARN_MIN:
        warning = f"search stagnated at {min_sec:.3e} after {restarts} restarts"
    form = classify_plane(frame, plane) if within == "horizontal" else float("nan")
    return ZeroPlaneReport(frame.x, frame.t, frame.pole, within, min_sec, plane, form, values, warning)


# ---------------------------------------------------------------- Berger family on the levels
@dataclass
class LiftData:
    """A tangent vector of a level t x S^{2b-1}, given by its m_base and m_fiber parts."""

    base: np.ndarray
    fiber: np.ndarray

    @property
    def hopf_horizontal(self):
        return bool(np.all(self.fiber == 0))


def level_lift(frame_split: LieAlgebraMatrixModel, x, t, data: LiftData):
    """Horizontal lift (k_base, 0) + (sin^2 t k_fiber, k_fiber acting on y)."""
    split = frame_split
    dimG = split.dim
    kb = np.zeros(dimG)
    kb[split.summands["m_base"]] = data.base
    kf = np.zeros(dimG)
    kf[split.summands["m_fiber"]] = data.fiber
    y = sphere_point(x, t)
    s2 = fiber_scale(split)[0] * math.sin(t) ** 2
    return np.concatenate([kb + s2 * kf, _killing_on_sphere(split, kf, y)])


@dataclass
class BergerReport:
    t_grid: np.ndarray
    values: np.ndarray
    variation: float
    horizontal_residual: float
    z_hopf_horizontal: bool


def berger_family_check(Z: LiftData, W: LiftData, t_grid, b=8, x=None) -> BergerReport:
    """g_q(Z, W) on the levels t x S^{2b-1}, evaluated through horizontal lifts."""
    split = hopf_split(b, x)
    x = split.x
    t_grid = np.asarray(t_grid, dtype=float)
    vals, hres = [], 0.0
    for t in t_grid:
        frame = q_horizontal_frame(x, t, split=split)
        LZ = level_lift(split, x, t, Z)
        LW = level_lift(split, x, t, W)
        hres = max(hres, float(np.max(np.abs(frame.vertical @ LZ))), float(np.max(np.abs(frame.vertical @ LW))))
        vals.append(float(LZ @ LW))
    vals = np.array(vals)
    return BergerReport(t_grid, vals, float(np.max(vals) - np.min(vals)), hres, Z.hopf_horizontal)


# ---------------------------------------------------------------- Davis action versus Hopf fibers
def hopf_fiber_tangent(alg, p, h=1e-6):
    """Orthonormal basis (rows) of the Hopf fiber tangent at p, from a central-difference differential."""
    p = np.asarray(p, dtype=float)
    n = p.size
    eye = np.eye(n)
    J = np.array([(alg_mod._hopf_raw(alg, p + h * eye[i]) - alg_mod._hopf_raw(alg, p - h * eye[i])) / (2 * h)
                  for i in range(n)]).T
    T = null_space(p[None, :]).T                      # tangent space of the sphere
    _, s, Vt = np.linalg.svd(J @ T.T)
    fiber_dim = alg.dim - 1
    kernel = Vt[-fiber_dim:] @ T
    gap = float(s[-fiber_dim - 1]) if s.size > fiber_dim else float("inf")
    return kernel, gap


@dataclass
class DavisHopfResult:
    point: np.ndarray
    fixed_point: bool
    witness: Optional[np.ndarray]        # unit vector normal to the orbit
    orbit_residual: float                # |<witness, orbit tangent>|
    vertical_component: float            # |Hopf-vertical part of the unit witness|
    angle_to_horizontal: float           # arcsin of the vertical component
    fiber_crosscheck: float              # |horizontal part| of the associativity fiber tangent
    side: str = ""
    note: str = ""
    side_components: dict = field(default_factory=dict)

    @property
    def first_side_component(self):
        """Vertical component of the witness built from a whenever Im a != 0."""
        comps = self.side_components
        return comps.get("a", comps.get("c", float("nan")))


def orbit_tangent(alg, p, derivations):
    b = alg.dim
    a, c = p[:b], p[b:]
    return np.array([np.concatenate([D @ a, D @ c]) for D in derivations])


def davis_hopf_angle(alg, a, c, derivations=None) -> DavisHopfResult:
    """Witness (a alpha, 0), alpha = Im a/|Im a|, normal to the automorphism orbit, and its Hopf angle.

    When both imaginary parts are nonzero the witness from the side with the
    larger vertical component is kept; (0, c alpha_c) is the mirror construction.
    """
    a = np.asarray(a, dtype=float)
    c = np.asarray(c, dtype=float)
    p = np.concatenate([a, c])
    if abs(float(p @ p) - 1.0) > alg_mod.UNIT_TOL:
        raise InputError("(a, c) must be a unit vector")
    ders = alg_mod.derivation_algebra(alg) if derivations is None else derivations
    ima, imc = alg.im(a), alg.im(c)
    na, nc = float(np.linalg.norm(ima)), float(np.linalg.norm(imc))
    if na <= alg_mod.ISOTROPY_TOL and nc <= alg_mod.ISOTROPY_TOL:
        return DavisHopfResult(p, True, None, 0.0, float("nan"), float("nan"), float("nan"),
                               note="fixed point: every vector is normal to the orbit")
    fiber, _ = hopf_fiber_tangent(alg, p)
    O = orbit_tangent(alg, p, ders)
    zeros = np.zeros(alg.dim)
    candidates = []
    if na > alg_mod.ISOTROPY_TOL:
        alpha = ima / na
        candidates.append(("a", np.concatenate([alg.mul(a, alpha), zeros]), np.concatenate([alg.mul(a, alpha), alg.mul(c, alpha)])))
    if nc > alg_mod.ISOTROPY_TOL:
        alpha = imc / nc
        candidates.append(("c", np.concatenate([zeros, alg.mul(c, alpha)]), np.concatenate([alg.mul(a, alpha), alg.mul(c, alpha)])))
    best = None
    comps = {}
    for side, w, fiber_curve in candidates:
        w = w / np.linalg.norm(w)
        vert = float(np.linalg.norm(fiber @ w))
        cross = float(np.linalg.norm(fiber_curve - fiber.T @ (fiber @ fiber_curve)))
        orth = float(np.max(np.abs(O @ w))) if O.size else 0.0
        comps[side] = vert
        if best is None or vert > best[2]:
            best = (side, w, vert, cross, orth)
    side, w, vert, cross, orth = best
    return DavisHopfResult(p, False, w, orth, vert, float(math.asin(min(1.0, vert))), cross, side,
                           side_components=comps)


def regular_points(alg, count, rng, derivations=None):
    """Random points of S^{2b-1} with principal isotropy."""
    label = alg_mod.ISOTROPY_LABELS[alg.dim][0]
    out = []
    while len(out) < count:
        p = rng.standard_normal(2 * alg.dim)
        p /= np.linalg.norm(p)
        if alg_mod.isotropy_classify(alg, p[:alg.dim], p[alg.dim:]) == label:
            out.append(p)
    return np.array(out)


@dataclass
class AngleGridReport:
    count: int
    alpha: float                  # grid minimum of the vertical component
    min_angle: float
    max_orbit_residual: float
    max_fiber_crosscheck: float
    alpha_first_side: float       # same minimum using the a-witness whenever it exists
    results: list = field(repr=False, default_factory=list)


def davis_hopf_grid(alg, count=1000, seed=0, threads=None) -> AngleGridReport:
    ders = alg_mod.derivation_algebra(alg)
    pts = regular_points(alg, count, np.random.default_rng(seed))
    res = thread_map(lambda p: davis_hopf_angle(alg, p[:alg.dim], p[alg.dim:], ders), pts, threads)
    vert = np.array([r.vertical_component for r in res])
    return AngleGridReport(count, float(vert.min()), float(min(r.angle_to_horizontal for r in res)),
                           float(max(r.orbit_residual for r in res)),
                           float(max(r.fiber_crosscheck for r in res)),
                           float(min(r.first_side_component for r in res)), res)


# ---------------------------------------------------------------- Ricci on the regular quotient
@dataclass
class RicciSample:
    t: float
    point: np.ndarray
    beta: float                 # sectional curvature of the lifted span{X, Y}
    horizontal_residual: float
    orbit_residual: float
    control_beta: float         # same with a Hopf-horizontal Y


@dataclass
class QuotientRicciReport:
    algebra: str
    samples: list
    beta_min: float
    control_max: float
    control_refused: bool
    passed: bool


def _level_isometry(alg, p):
    """Orthonormal bases (rows) of the Hopf-vertical and Hopf-horizontal parts of T_p S^{2b-1}."""
    fiber, _ = hopf_fiber_tangent(alg, p)
    T = null_space(np.vstack([p[None, :], fiber])).T
    return fiber, T


def split_on_level(alg, p, Y):
    """(m_base, m_fiber) data of Y, identifying orthonormal bases isometrically (a convention)."""
    fiber, horiz = _level_isometry(alg, p)
    return LiftData(horiz @ Y, fiber @ Y)


def quotient_ricci_certificate(alg, zero_report: ZeroPlaneReport = None, angle_report: AngleGridReport = None,
                               count=8, t_values=(math.pi / 4, math.pi / 2, 3 * math.pi / 4), seed=0,
                               beta_floor=0.0) -> QuotientRicciReport:
    """Lower bound for sec(X, Y) on the regular quotient, with Y normal to the automorphism orbit.

    Each sample lifts span{X, Y} to the product through q; the product curvature
    of that lift bounds the quotient curvature from below.  A Hopf-horizontal Y
    is run alongside as a control and must give zero.
    """
    if zero_report is None or angle_report is None:
        raise OrderingError("the zero-plane classification and the angle grid must be computed first")
    if not zero_report.accepted:
        raise OrderingError("the zero-plane classification did not pass")
    if not angle_report.alpha > 0:
        raise OrderingError("the angle grid did not give a positive lower bound")
    b = alg.dim
    ders = alg_mod.derivation_algebra(alg)
    split = hopf_split(b)
    x = split.x
    rng = np.random.default_rng(seed)
    pts = regular_points(alg, count, rng, ders)
    samples = []
    for i, p in enumerate(pts):
        t = float(t_values[i % len(t_values)])
        dh = davis_hopf_angle(alg, p[:b], p[b:], ders)
        frame = q_horizontal_frame(x, t, split=split)
        X = frame.radial[0]
        lift = level_lift(split, x, t, split_on_level(alg, p, dh.witness))
        hres = float(np.max(np.abs(frame.vertical @ lift)))
        beta = product_curvature(split, X, lift)
        fiber, horiz = _level_isometry(alg, p)
        control = level_lift(split, x, t, split_on_level(alg, p, horiz[0]))
        samples.append(RicciSample(t, p, beta, hres, dh.orbit_residual, product_curvature(split, X, control)))
    beta_min = min(s.beta for s in samples)
    control_max = max(abs(s.control_beta) for s in samples)
    refused = control_max <= 1e-12
    return QuotientRicciReport(alg.name, samples, beta_min, control_max, refused,
                               bool(beta_min > beta_floor and refused))
