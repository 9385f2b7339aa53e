"""Conformal changes e^{2f} g with f built from radial profiles around submanifolds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import jax
import jax.numpy as jnp
import numpy as np
from scipy.linalg import eigh

from . import geometry as G
from .certificates import Certificate
from .errors import ConfigurationError, CoverageError, DomainError, InputError
from .geometry import MetricModel, SubmanifoldSpec
from .profile import BumpProfile, build_profile


# ---------------------------------------------------------------- cutoffs
def _smooth_half(u):
    # exp(-1/u) for u > 0, exactly 0 otherwise; the inner where keeps gradients finite
    safe = jnp.where(u > 0, u, 1.0)
    return jnp.where(u > 0, jnp.exp(-1.0 / safe), 0.0)


def smooth_step(u):
    """C-infinity step: 0 for u <= 0, 1 for u >= 1."""
    a = _smooth_half(u)
    b = _smooth_half(1.0 - u)
    return a / (a + b)


STEP_SLOPE_MAX = 2.0  # sup of smooth_step' (attained at u = 1/2)


@dataclass
class Cutoff:
    """phi = smooth_step((d(x) - inner) / (outer - inner)) for a lower-stratum distance d."""

    distance_fn: Callable
    inner: float
    outer: float

    def traced(self):
        d, a, b = self.distance_fn, self.inner, self.outer
        return lambda x: smooth_step((d(x) - a) / (b - a))

    @property
    def slope_bound(self):
        return STEP_SLOPE_MAX / (self.outer - self.inner)


@dataclass
class StratumTube:
    """One stratum entering the conformal change.

    ``level`` is the descendant number used for ordering; ``normal_inj`` is the
    declared normal injectivity bound of the compact part.
    """

    S: SubmanifoldSpec
    radius: float
    level: int = 0
    normal_inj: float = math.pi
    cutoff: Optional[Cutoff] = None


# ---------------------------------------------------------------- model
class ConformalMetricModel(MetricModel):
    """e^{2f} g for a traceable f; f is identically zero away from its tubes."""

    def __init__(self, base: MetricModel, f_fn: Callable, S_list: Sequence[StratumTube] = (),
                 profiles: Sequence[BumpProfile] = (), label=None):
        self.base = base
        self.f_fn = f_fn
        self.S_list = list(S_list)
        self.profiles = list(profiles)
        base_fn = base.metric_fn

        def metric(x):
            return jnp.exp(2.0 * f_fn(x)) * base_fn(x)

        super().__init__(base.dim, metric, label=label or f"conf({base.label})", domain=base.domain,
                         traceable=True, scale=base.scale)

    def metric_at(self, x) -> np.ndarray:
        # Where f vanishes exactly, e^{2f} g is g; returning the base evaluation keeps the
        # two bit-identical instead of exposing the compiler's freedom to reassociate.
        x = self.check_point(x)
        if self.f(x) == 0.0:
            return self.base.metric_at(x)
        return super().metric_at(x)

    def f(self, x) -> float:
        fn = self._jitted("f", lambda: jax.jit(self.f_fn))
        return float(fn(jnp.asarray(x, dtype=float)))

    def f_data(self, x):
        """(f, df, covariant Hess f) at x from autodiff of f."""
        x = self.check_point(x)
        fn = self._jitted("fjet", lambda: jax.jit(lambda y: (self.f_fn(y), jax.grad(self.f_fn)(y),
                                                             jax.hessian(self.f_fn)(y))))
        f, df, d2f = (np.asarray(a) for a in fn(jnp.asarray(x)))
        gamma = G.christoffel(self.base, x)
        H = d2f - np.einsum("kij,k->ij", gamma, df)
        return float(f), df, 0.5 * (H + H.T)


def conformal_metric(base: MetricModel, S: SubmanifoldSpec, profile: BumpProfile, label=None):
    """Single-stratum change f = rho(dist(S, .))."""
    if S.distance_fn is None:
        raise InputError("a traceable closed-form distance is required for the conformal factor")
    rho = profile.traced()
    d = S.distance_fn
    tube = StratumTube(S, profile.sigma3)
    return ConformalMetricModel(base, lambda x: rho(d(x)), [tube], [profile],
                                label=label or f"conf({base.label};{S.label})")


def constant_conformal(base: MetricModel, c: float):
    return ConformalMetricModel(base, lambda x: c + 0.0 * x[0], label=f"e^{2 * c:g}*{base.label}")


# ---------------------------------------------------------------- curvature formula
def conformal_curvature(base: MetricModel, f_data, x, frame=None):
    """Curvature of e^{2f} g from (f, df, Hess f) and the curvature of g.

    ``df`` is the coordinate differential and ``Hess f`` the covariant Hessian of
    g, both as coordinate arrays.  With ``frame`` (rows are vectors) the tensor is
    returned on that frame, otherwise in coordinates.
    """
    f, df, H = f_data
    df = np.asarray(df, dtype=float)
    H = np.asarray(H, dtype=float)
    asym = float(np.max(np.abs(H - H.T))) if H.size else 0.0
    if asym > 1e-8 * max(1.0, float(np.max(np.abs(H)))):
        raise InputError(f"Hessian data not symmetric (asymmetry {asym:.2e})")
    g, _, R = base.curvature(x)
    ginv = np.linalg.inv(g)
    grad2 = float(df @ ginv @ df)
    ein = np.einsum
    T = (R
         - ein("il,jk->ijkl", g, H) - ein("jk,il->ijkl", g, H)
         + ein("ik,jl->ijkl", g, H) + ein("jl,ik->ijkl", g, H)
         + ein("il,j,k->ijkl", g, df, df) + ein("jk,i,l->ijkl", g, df, df)
         - ein("jl,i,k->ijkl", g, df, df) - ein("ik,j,l->ijkl", g, df, df)
         + grad2 * (ein("ik,jl->ijkl", g, g) - ein("jk,il->ijkl", g, g)))
    Rt = math.exp(2.0 * f) * T
    if frame is not None:
        E = np.asarray(frame, dtype=float)
        Rt = ein("ijkl,ai,bj,ck,dl->abcd", Rt, E, E, E, E)
    return Rt


def hess_f(base: MetricModel, S: SubmanifoldSpec, profile: BumpProfile, x, split=None):
    """Hess of rho(dist(S, .)) from the Jacobi Hessian of the distance.

    Returns (f, df, Hess f, t, X).
    """
    split = split or G.tube_splitting(base, S, x)
    hd = G.hess_distance(base, S, x, method="jacobi", split=split)
    t = split.t
    g = base.metric_at(x)
    Xf = g @ hd.X
    r0, r1, r2 = (profile.derivative(t, k) for k in range(3))
    H = r2 * np.outer(Xf, Xf) + r1 * hd.form
    return float(r0), r1 * Xf, 0.5 * (H + H.T), t, hd.X


# ---------------------------------------------------------------- sampling
@dataclass
class TubeSamplePlan:
    inner: int = 6
    shell: int = 6
    outer: int = 3
    planes: int = 6
    seed: int = 0
    inner_range: tuple = (0.05, 0.95)     # fractions of sigma1
    outer_range: tuple = (1.05, 1.6)      # fractions of sigma3


def _unit_normal(model, S, theta, q, rng):
    g = model.metric_at(q)
    n = model.dim
    if S.dim:
        T = G.submanifold_tangent(S, theta)
        tangent = G.gram_schmidt(g, list(T.T))
    else:
        tangent = []
    normals = G.orthonormal_complement(g, tangent)
    w = sum(rng.standard_normal() * e for e in normals)
    return w / G.norm(g, w)


def tube_point(model: MetricModel, S: SubmanifoldSpec, t, rng, theta=None):
    """exp_q(t nu) for a random footpoint q (or the given parameter) and random unit normal."""
    if S.dim:
        if theta is None:
            theta = rng.uniform(np.asarray(S.param_lo, float), np.asarray(S.param_hi, float))
    else:
        theta = np.zeros(0)
    q = np.asarray(jax.jit(S.parametrization)(jnp.asarray(theta, dtype=float)))
    nu = _unit_normal(model, S, theta, q, rng)
    return G.exp_map(model, q, t * nu)


def tube_samples(model, S, profile, plan: TubeSamplePlan):
    """Points tagged with region: 'inner' (< sigma1), 'shell', 'outer' (> sigma3)."""
    if min(plan.inner, plan.shell, plan.outer) <= 0:
        raise CoverageError("sample plan must cover the inner ball, the shell and the outside")
    rng = np.random.default_rng(plan.seed)
    out = []
    s1, s3 = profile.sigma1, profile.sigma3
    for region, count, lo, hi in (
        ("inner", plan.inner, plan.inner_range[0] * s1, plan.inner_range[1] * s1),
        ("shell", plan.shell, s1, s3),
        ("outer", plan.outer, plan.outer_range[0] * s3, plan.outer_range[1] * s3),
    ):
        if region == "shell":
            # log-spaced so both ends of a very wide shell are visited
            ts = np.exp(rng.uniform(math.log(1.02 * lo), math.log(0.98 * hi), count))
        else:
            ts = rng.uniform(lo, hi, count)
        for t in ts:
            out.append((region, float(t), tube_point(model, S, t, rng)))
    return out


# ---------------------------------------------------------------- curvature gain near S
@dataclass
class KeyLemmaReport:
    hypothesis_margin: float
    conclusion1_min: float
    conclusion2_max: float
    conclusion3_min: float
    sample_count: int
    K: float
    eps: float
    conclusion2_bound: float
    two_path_max: float = 0.0
    support_identical: bool = True
    ricci_min: float = float("inf")
    flags: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(self.flags.values())


def curv_type_exclusions(n, special):
    """Frame quadruples equal, up to the 8 curvature symmetries, to (i,j,j,i) with i or j special."""
    mask = np.zeros((n,) * 4, dtype=bool)
    special = set(special)
    for i in range(n):
        for j in range(n):
            if i == j or not ({i, j} & special):
                continue
            seed = (i, j, j, i)
            orbit = {seed}
            frontier = [seed]
            while frontier:
                a, b, c, d = frontier.pop()
                for q in ((b, a, c, d), (a, b, d, c), (c, d, a, b)):
                    if q not in orbit:
                        orbit.add(q)
                        frontier.append(q)
            for q in orbit:
                mask[q] = True
    return mask


def _min_sec_with(g, R, v):
    """min over Z of curv(v, Z)/|v ^ Z|^2, exactly, via a generalized eigenproblem on v-perp."""
    comp = G.orthonormal_complement(g, [v])
    E = np.array(comp)
    vv = G.inner(g, v, v)
    Q = np.einsum("ijkl,ai,j,k,bl->ab", R, E, v, v, E)
    M = vv * (E @ g @ E.T)
    return float(eigh(0.5 * (Q + Q.T), M, eigvals_only=True)[0])


def _adapted_vectors(ts: G.TubeSplitting, rng, count):
    basis = [ts.X.components] + [v.components for v in ts.V_basis]
    out = list(basis)
    for _ in range(count):
        out.append(sum(rng.standard_normal() * b for b in basis))
    return out


def verify_key_lemma(base: MetricModel, S: SubmanifoldSpec, profile: BumpProfile,
                     sample_plan: TubeSamplePlan = None, conformal: ConformalMetricModel = None,
                     samples=None) -> KeyLemmaReport:
    """Evaluate the hypothesis inequality and the three conclusions on a tube sample."""
    plan = sample_plan or TubeSamplePlan()
    cm = conformal or conformal_metric(base, S, profile)
    samples = samples if samples is not None else tube_samples(base, S, profile, plan)
    regions = {r for r, _, _ in samples}
    if regions != {"inner", "shell", "outer"}:
        raise CoverageError(f"sample regions {sorted(regions)} do not cover inner/shell/outer")
    rng = np.random.default_rng(plan.seed + 1)
    n = base.dim
    K, eps, delta = profile.K, profile.eps, profile.delta
    hyp = c1 = math.inf
    c2 = 0.0
    c3 = math.inf
    two_path = 0.0
    identical = True
    ric_min = math.inf
    for region, _, x in samples:
        g, _, R = base.curvature(x)
        gt, _, Rt = cm.curvature(x)
        ric_min = min(ric_min, float(G.ricci_eigs_from(gt, Rt)[0]))
        # conclusion 3 on random planes plus coordinate planes
        for _ in range(plan.planes):
            z, w = rng.standard_normal(n), rng.standard_normal(n)
            c3 = min(c3, G.sectional_from(gt, Rt, z, w) - G.sectional_from(g, R, z, w))
        if region == "outer":
            identical &= cm.f(x) == 0.0 and bool(np.array_equal(cm.metric_at(x), base.metric_at(x)))
            continue
        ts = G.tube_splitting(base, S, x)
        f0, df, H, t, Xc = hess_f(base, S, profile, x, split=ts)
        Rf = conformal_curvature(base, (f0, df, H), x)
        scale = max(1.0, float(np.max(np.abs(Rt))))
        two_path = max(two_path, float(np.max(np.abs(Rf - Rt))) / scale)
        frame = np.array(G.gram_schmidt(g, [ts.X.components] + [v.components for v in ts.V_basis]
                                        + [h.components for h in ts.Hbar_basis]))
        nv = len(ts.V_basis)
        mask = curv_type_exclusions(n, range(nv + 1))
        diff = np.abs(np.einsum("ijkl,ai,bj,ck,dl->abcd", Rt - R, frame, frame, frame, frame))
        if np.any(~mask):
            c2 = max(c2, float(np.max(diff[~mask])))
        if region == "inner":
            r1, r2 = profile.derivative(t, 1), profile.derivative(t, 2)
            for v in _adapted_vectors(ts, rng, plan.planes):
                v = v / G.norm(g, v)
                vx = G.inner(g, v, frame[0])
                vV = 1.0 - vx * vx
                # hypothesis: min over unit Z perpendicular to v
                shift = -r2 * vx * vx - (r1 / t) * vV
                hyp = min(hyp, _min_sec_with(g, R, v) + shift - (K + 1))
                c1 = min(c1, _min_sec_with(gt, Rt, v))
    c2_bound = 10.0 * delta
    flags = {
        "hypothesis": hyp > 0,
        "conclusion1": c1 > K,
        "conclusion2": c2 <= c2_bound,
        "conclusion3": c3 >= -eps,
        "two_path": two_path <= 1e-5,
        "support": identical,
    }
    return KeyLemmaReport(hyp, c1, c2, c3, len(samples), K, eps, c2_bound, two_path, identical, ric_min, flags)


# ---------------------------------------------------------------- several strata
def _stratum_points(S: SubmanifoldSpec, count=64, seed=0):
    if S.dim == 0:
        return np.asarray(S.parametrization(jnp.zeros(0)))[None]
    rng = np.random.default_rng(seed)
    th = rng.uniform(np.asarray(S.param_lo, float), np.asarray(S.param_hi, float), (count, S.dim))
    par = jax.jit(jax.vmap(S.parametrization))
    return np.asarray(par(jnp.asarray(th)))


def multi_stratum_conformal(base: MetricModel, strata: Sequence[StratumTube], profiles: Sequence[BumpProfile],
                            action=None, label=None) -> ConformalMetricModel:
    """f = sum_i phi_i * rho_i(dist(S_i, .)) with strata in descendant order."""
    if len(strata) != len(profiles):
        raise InputError("one profile per stratum is required")
    levels = [s.level for s in strata]
    if levels != sorted(levels):
        raise ConfigurationError("strata must be listed in nondecreasing descendant number")
    for st, pr in zip(strata, profiles):
        if st.S.distance_fn is None:
            raise InputError(f"stratum {st.S.label} lacks a traceable distance")
        if st.radius > st.normal_inj / 2:
            raise DomainError(f"tube radius {st.radius:.3g} exceeds half the normal injectivity bound of {st.S.label}")
        if pr.sigma3 > st.radius * (1 + 1e-12):
            raise DomainError(f"profile support {pr.sigma3:.3g} exceeds tube radius of {st.S.label}")
    for i, a in enumerate(strata):
        for b in strata[i + 1:]:
            if a.level != b.level:
                continue
            pts = _stratum_points(a.S)
            if a.cutoff is not None:
                keep = np.array([float(a.cutoff.traced()(jnp.asarray(p))) > 0 for p in pts])
                pts = pts[keep]
            if not len(pts):
                continue
            dist = np.asarray(jax.vmap(b.S.distance_fn)(jnp.asarray(pts)))
            if float(np.min(dist)) < a.radius + b.radius:
                raise ConfigurationError(f"tubes of {a.S.label} and {b.S.label} overlap")

    pieces = []
    for st, pr in zip(strata, profiles):
        rho, d = pr.traced(), st.S.distance_fn
        if st.cutoff is None:
            pieces.append(lambda x, rho=rho, d=d: rho(d(x)))
        else:
            phi = st.cutoff.traced()
            pieces.append(lambda x, rho=rho, d=d, phi=phi: phi(x) * rho(d(x)))

    def f(x):
        total = 0.0
        for p in pieces:
            total = total + p(x)
        return total

    cm = ConformalMetricModel(base, f, strata, profiles, label=label or f"conf({base.label};{len(strata)} strata)")
    cm.action = action
    return cm


def invariance_residual(cm: ConformalMetricModel, action, points, elements=4, seed=0):
    """max |f(a x) - f(x)| over sampled group elements a and points x."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for x in points:
        fx = cm.f(x)
        for _ in range(elements):
            y = action.act(action.random_element(rng), x)
            if cm.contains(y):
                worst = max(worst, abs(cm.f(y) - fx))
    return worst


def cutoff_report(cm: ConformalMetricModel, index: int, points):
    """Gradient and Hessian-correction sizes of a cut-off stratum term at transition points.

    The correction is Hess(phi rho) - phi Hess(rho); both it and |grad f| are
    O(delta).  Returns (max |grad f|, grad bound, max correction, fitted constant).
    """
    st, pr = cm.S_list[index], cm.profiles[index]
    if st.cutoff is None:
        raise InputError("stratum has no cutoff")
    rho, d, phi = pr.traced(), st.S.distance_fn, st.cutoff.traced()
    term = lambda y: phi(y) * rho(d(y))
    full = jax.jit(lambda x: (jax.grad(term)(x), jax.hessian(term)(x),
                              phi(x) * jax.hessian(lambda y: rho(d(y)))(x),
                              rho(d(x)) * jax.grad(phi)(x)))
    gmax = corr = 0.0
    for x in points:
        gr, h_full, h_part, rho_dphi = (np.asarray(a) for a in full(jnp.asarray(x)))
        g, gamma, _ = cm.base.curvature(x)
        ginv = np.linalg.inv(g)
        gmax = max(gmax, float(np.sqrt(gr @ ginv @ gr)))
        # covariant difference: the connection term survives only through rho * dphi
        diff = h_full - h_part - np.einsum("kij,k->ij", gamma, rho_dphi)
        L = np.linalg.cholesky(ginv)
        corr = max(corr, float(np.linalg.norm(L.T @ diff @ L, 2)))
    bound = pr.delta * (1.0 + st.cutoff.slope_bound)
    return gmax, bound, corr, corr / pr.delta


# ---------------------------------------------------------------- pipeline
def sampled_minsec(model: MetricModel, points, restarts=4):
    worst = math.inf
    rng = np.random.default_rng(0)
    for x in points:
        g, _, R = model.curvature(x)
        worst = min(worst, G.min_sectional(g, R, restarts=restarts, rng=rng))
    return worst


def quasi_positive_pipeline(base: MetricModel, p, K, eps, inj_bound=math.pi, plan: TubeSamplePlan = None,
                            distance_fn=None, seed=0):
    """Raise sectional curvature at p above K while keeping Ric >= n - 1 - eps.

    Returns (conformal model, certificate, KeyLemmaReport).
    """
    plan = plan or TubeSamplePlan(seed=seed)
    n = base.dim
    p = np.asarray(p, dtype=float)
    if distance_fn is None:
        if base.point_distance is None:
            raise InputError("a closed-form point distance is required")
        pj = jnp.asarray(p)
        distance_fn = lambda x: base.point_distance(x, pj)
    S = SubmanifoldSpec.point(p, n, label="p", distance_fn=distance_fn)
    rng = np.random.default_rng(seed)
    probe = [G.exp_map(base, p, 0.3 * rng.standard_normal(n)) for _ in range(6)] + [p]
    minsec = sampled_minsec(base, probe)
    base_ric = min(float(G.ricci_eigenvalues(base, x)[0]) for x in probe)
    profile = build_profile(K, eps, minsec, inj_bound)
    cm = conformal_metric(base, S, profile)
    samples = tube_samples(base, S, profile, plan)
    rep = verify_key_lemma(base, S, profile, plan, cm, samples)
    # sectional curvature "at p": the factor is smooth at p but its autodiff through the
    # distance is not, so evaluate a hair away from p along a random direction
    x_p = tube_point(base, S, 1e-3 * profile.sigma1, rng)
    gt, _, Rt = cm.curvature(x_p)
    sec_p = sampled_min_plane(gt, Rt, rng)
    cert = Certificate("conformal-keylemma", base.label,
                       {"K": K, "eps": eps, "inj_bound": inj_bound, "plan": plan.__dict__,
                        "profile": profile.to_dict()}, seed)
    st = cert.stage("base")
    st.at_least("ricci_min", base_ric, n - 1 - 1e-6)
    st.info("minsec", minsec)
    st = cert.stage("profile")
    for name, margin in profile.conditions().items():
        st.add(f"condition_{name}", margin, 0.0, margin > 0)
    st = cert.stage("key_lemma")
    st.at_least("hypothesis_margin", rep.hypothesis_margin, 0.0)
    st.at_least("conclusion1_min", rep.conclusion1_min, K)
    st.at_most("conclusion2_max", rep.conclusion2_max, rep.conclusion2_bound)
    st.at_least("conclusion3_min", rep.conclusion3_min, -eps)
    st.at_most("two_path_rel", rep.two_path_max, 1e-5)
    st.add("support_identical", float(rep.support_identical), 1.0, rep.support_identical)
    st = cert.stage("quasi_positive")
    st.at_least("sec_min_at_p", sec_p, K)
    st.at_least("ricci_min", rep.ricci_min, n - 1 - eps)
    return cm, cert, rep


def sampled_min_plane(g, R, rng=None):
    n = g.shape[0]
    if n == 3:
        return G.curvature_operator_min(g, R)[0]
    return G.min_sectional(g, R, rng=rng)
