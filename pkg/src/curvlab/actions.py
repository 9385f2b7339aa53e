"""Catalog group actions: Hopf circle and torus on S^3, Davis SO(3) on S^7, and
small flat examples.  Linear actions on a sphere are pulled back to a
stereographic chart, so their action fields are pushforwards of A y."""

from __future__ import annotations

import math

import jax
import jax.numpy as jnp
import numpy as np
from jax.scipy.linalg import expm

from .cheeger import GroupActionModel, StratumDecl, structure_constants_from
from .geometry import SubmanifoldSpec
from .models import SphereChart, flat, round_sphere


def _pushforward_fields(chart: SphereChart, generators):
    gens = jnp.asarray(np.array(generators, dtype=float))

    def killing(x):
        y = chart.to_ambient(x)

        def one(A):
            return jax.jvp(chart.from_ambient, (y,), (A @ y,))[1]

        return jax.vmap(one)(gens).T

    def act(a, x):
        M = expm(jnp.einsum("a,aij->ij", a, gens))
        return chart.from_ambient(M @ chart.to_ambient(x))

    return killing, act


def linear_sphere_action(base, generators, label, bi_gram=None, **kw) -> GroupActionModel:
    """Action of a matrix group on the round sphere of ``base`` (which carries its chart)."""
    gens = [np.asarray(A, dtype=float) for A in generators]
    for A in gens:
        if np.max(np.abs(A + A.T)) > 1e-14:
            raise ValueError("generators of an isometric linear action must be antisymmetric")
    C = structure_constants_from(gens)
    B = np.eye(len(gens)) if bi_gram is None else bi_gram
    killing, act = _pushforward_fields(base.chart, gens)
    return GroupActionModel(len(gens), C, B, killing, act, label=label, generators=gens, **kw)


def _plane_rotation(N, i, j):
    A = np.zeros((N, N))
    A[j, i], A[i, j] = 1.0, -1.0
    return A


def _frame_with_last(v):
    """Orthogonal matrix whose last column is the unit vector v."""
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    M = np.column_stack([v, np.eye(v.size)])
    Q, _ = np.linalg.qr(M)
    Q = Q[:, : v.size]
    if Q[:, 0] @ v < 0:
        Q[:, 0] *= -1
    return np.column_stack([Q[:, 1:], Q[:, 0]])


# ---------------------------------------------------------------- Hopf circle
HOPF_J = np.array([[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]], dtype=float)


def hopf_action(base=None) -> GroupActionModel:
    """Unit-speed Hopf circle z -> e^{i s} z on the round S^3 (|k_M| = 1, |k|_bi = 1)."""
    base = base or round_sphere(3)
    act = linear_sphere_action(base, [HOPF_J], "hopf-S1", pi1_finite=False)
    act.base = base
    return act


def hopf_map(y):
    """(z1, z2) -> (z1 conj(z2), (|z1|^2 - |z2|^2)/2) in R^3, onto the sphere of radius 1/2."""
    z1r, z1i, z2r, z2i = y[0], y[1], y[2], y[3]
    re = z1r * z2r + z1i * z2i
    im = z1i * z2r - z1r * z2i
    return jnp.stack([re, im, 0.5 * (z1r ** 2 + z1i ** 2 - z2r ** 2 - z2i ** 2)])


def hopf_submersion():
    """Hopf fibration S^3 -> S^2(1/2) as a SubmersionSpec with the base in a chart."""
    from .models import sphere_to_stereo
    from .submersion import SubmersionSpec

    total = round_sphere(3)
    base = round_sphere(2, 0.5)
    action = hopf_action(total)
    chart = total.chart
    proj = lambda x: sphere_to_stereo(2.0 * hopf_map(chart.to_ambient(x)))
    return SubmersionSpec(total, action.killing_fn, base, proj, label="hopf S3->S2(1/2)")


# ---------------------------------------------------------------- torus on S^3
def torus_action() -> GroupActionModel:
    """T^2 rotating the two complex coordinates of S^3 independently.

    The chart is centred at (1,1,1,1)/2 so that both singular circles lie in it.
    """
    frame = _frame_with_last(np.ones(4))
    base = round_sphere(3, frame=frame, label="round-S3")
    chart = base.chart
    gens = [_plane_rotation(4, 0, 1), _plane_rotation(4, 2, 3)]

    strata = []
    for label, (i, j), (k, l), iso in (("circle z2=0", (0, 1), (2, 3), "S1 (second factor)"),
                                       ("circle z1=0", (2, 3), (0, 1), "S1 (first factor)")):
        def par(th, i=i, j=j):
            y = jnp.zeros(4).at[i].set(jnp.cos(th[0])).at[j].set(jnp.sin(th[0]))
            return chart.from_ambient(y)

        def dist(x, i=i, j=j, k=k, l=l):
            y = chart.to_ambient(x)
            return jnp.arctan2(jnp.sqrt(y[k] ** 2 + y[l] ** 2 + 1e-300), jnp.sqrt(y[i] ** 2 + y[j] ** 2))

        def foot(x, i=i, j=j):
            y = np.asarray(chart.to_ambient(jnp.asarray(x)))
            return np.array([math.atan2(y[j], y[i])])

        S = SubmanifoldSpec(par, np.array([-math.pi]), np.array([math.pi]), 2, distance_fn=dist,
                            periodic=[True], label=label, footpoint_fn=foot)
        strata.append(StratumDecl(label, S, iso, level=0, compact=True, normal_inj=math.pi / 2))
    act = linear_sphere_action(base, gens, "torus-T2", declared_strata=strata, pi1_finite=False)
    act.base = base
    return act


# ---------------------------------------------------------------- Davis SO(3) on S^7
DAVIS_FIXED_POINT = np.array([1, 0, 0, 0, 1, 0, 0, 0], dtype=float) / math.sqrt(2)
DAVIS_FIXED_INJ = math.pi / 2
DAVIS_SO2_INJ = 0.3
DAVIS_CUTOFF = (0.3, 0.6)


def davis_generators():
    """so(3) acting on Im u and Im v of (u, v) in H^2 = R^8 by the same rotation."""
    gens = []
    for i, j in ((2, 3), (3, 1), (1, 2)):
        A = _plane_rotation(8, i, j) + _plane_rotation(8, 4 + i, 4 + j)
        gens.append(A)
    return gens


def _davis_parts(y):
    u0, a, v0, b = y[0], y[1:4], y[4], y[5:8]
    return u0, a, v0, b


def davis_fixed_distance(y):
    u0, a, v0, b = _davis_parts(y)
    return jnp.arctan2(jnp.sqrt(a @ a + b @ b + 1e-300), jnp.sqrt(u0 ** 2 + v0 ** 2))


def davis_so2_distance(y):
    """Distance from y in S^7 to {Im u parallel to Im v} via the best rank-one fit of [a b]."""
    u0, a, v0, b = _davis_parts(y)
    caa, cbb, cab = a @ a, b @ b, a @ b
    tr = caa + cbb
    cross = jnp.cross(a, b)
    c2 = cross @ cross
    lam = 0.5 * (tr + jnp.sqrt(jnp.maximum(tr * tr - 4.0 * c2, 0.0) + 1e-300))
    smin = jnp.sqrt(c2 + 1e-300) / jnp.sqrt(lam + 1e-300)
    return jnp.arctan2(smin, jnp.sqrt(u0 ** 2 + v0 ** 2 + lam))


def davis_action() -> GroupActionModel:
    """The Davis SO(3) action on S^7 with its fixed circle and SO(2) stratum declared."""
    frame = _frame_with_last(DAVIS_FIXED_POINT)
    base = round_sphere(7, frame=frame, label="round-S7")
    chart = base.chart

    # fixed circle: (cos s, 0, sin s, 0) in (u0, Im u, v0, Im v); chart excludes s = 5 pi/4
    def fixed_par(th):
        y = jnp.zeros(8).at[0].set(jnp.cos(th[0])).at[4].set(jnp.sin(th[0]))
        return chart.from_ambient(y)

    def fixed_foot(x):
        y = np.asarray(chart.to_ambient(jnp.asarray(x)))
        s = math.atan2(y[4], y[0])
        return np.array([s + 2 * math.pi if s < -3 * math.pi / 4 else s])

    fixed = SubmanifoldSpec(fixed_par, np.array([math.pi / 4 - 2.5]), np.array([math.pi / 4 + 2.5]), 6,
                            distance_fn=lambda x: davis_fixed_distance(chart.to_ambient(x)),
                            label="fixed circle", footpoint_fn=fixed_foot)

    # SO(2) stratum: (w0 cos.., w1 n, w2, w3 n) with w in S^3 and n in S^2
    def so2_par(th):
        n = jnp.stack([jnp.cos(th[0]) * jnp.cos(th[1]), jnp.cos(th[0]) * jnp.sin(th[1]), jnp.sin(th[0])])
        r2 = th[2] ** 2 + th[3] ** 2 + th[4] ** 2
        w = jnp.concatenate([2.0 * th[2:5], jnp.array([1.0 - r2])]) / (1.0 + r2)
        y = jnp.concatenate([jnp.array([w[3]]), w[0] * n, jnp.array([w[2]]), w[1] * n])
        return chart.from_ambient(y)

    def so2_foot(x):
        y = np.asarray(chart.to_ambient(jnp.asarray(x)))
        u0, a, v0, b = y[0], y[1:4], y[4], y[5:8]
        U, s, Vt = np.linalg.svd(np.column_stack([a, b]), full_matrices=False)
        n = U[:, 0]
        if n[2] < 0 or (n[2] == 0 and n[0] < 0):
            n = -n
        coef = np.column_stack([a, b]).T @ n
        w = np.array([coef[0], coef[1], v0, u0])
        w = w / np.linalg.norm(w)
        st = w[:3] / (1.0 + w[3])
        return np.array([math.asin(np.clip(n[2], -1, 1)), math.atan2(n[1], n[0]), *st])

    so2 = SubmanifoldSpec(so2_par, np.array([-1.4, -math.pi, -1.0, -1.0, -1.0]),
                          np.array([1.4, math.pi, 1.0, 1.0, 1.0]), 2,
                          distance_fn=lambda x: davis_so2_distance(chart.to_ambient(x)),
                          label="SO(2) stratum", footpoint_fn=so2_foot)
    strata = [StratumDecl("fixed circle", fixed, "SO(3)", level=0, compact=True, normal_inj=DAVIS_FIXED_INJ),
              StratumDecl("SO(2) stratum", so2, "SO(2)", level=1, compact=False, normal_inj=DAVIS_SO2_INJ,
                          lower="fixed circle", probe=(0.3, 0.5, 0.4, 0.2, 0.1))]
    act = linear_sphere_action(base, davis_generators(), "davis-SO3", declared_strata=strata, pi1_finite=True)
    act.base = base
    return act


# ---------------------------------------------------------------- flat examples
def flat_torus_translation() -> GroupActionModel:
    """Diagonal unit-speed translation on flat R^2 (the universal cover of a flat T^2)."""
    base = flat(2, label="flat-T2")
    k = jnp.array([[1.0], [1.0]]) / math.sqrt(2)
    act = GroupActionModel(1, np.zeros((1, 1, 1)), np.eye(1), lambda x: k + 0.0 * x[0],
                           lambda a, x: x + a[0] * k[:, 0], label="diagonal-T1", pi1_finite=False)
    act.base = base
    return act


def planar_rotation() -> GroupActionModel:
    """SO(2) rotating flat R^2 about its isolated fixed point at the origin."""
    base = flat(2, label="flat-R2")
    J = jnp.array([[0.0, -1.0], [1.0, 0.0]])

    def act_fn(a, x):
        c, s = jnp.cos(a[0]), jnp.sin(a[0])
        return jnp.array([[c, -s], [s, c]]) @ x

    origin = SubmanifoldSpec.point(np.zeros(2), 2, label="origin", distance_fn=lambda x: jnp.linalg.norm(x))
    strata = [StratumDecl("origin", origin, "SO(2)", level=0, normal_inj=math.inf)]
    act = GroupActionModel(1, np.zeros((1, 1, 1)), np.eye(1), lambda x: (J @ x)[:, None], act_fn,
                           label="rotation-SO2", declared_strata=strata, pi1_finite=False)
    act.base = base
    return act


def trivial_action(base) -> GroupActionModel:
    n = base.dim
    act = GroupActionModel(0, np.zeros((0, 0, 0)), np.zeros((0, 0)), lambda x: jnp.zeros((n, 0)),
                           lambda a, x: x, label="trivial", pi1_finite=True)
    act.base = base
    return act
