"""Verification suites: each turns a catalog model and a parameter set into certificates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import jax
import numpy as np

from . import actions, algebra, catalog, cheeger as CH, geometry as G, lie, models, op2, pipelines
from .certificates import Certificate
from .conformal import quasi_positive_pipeline
from .errors import InputError

SUITES = ("core-curvature", "conformal-keylemma", "cheeger-estimates", "singular-tubes",
          "ricci-lift", "almost-nonneg", "exotic-op2")

# Parameters per suite.  Keys starting with "tol_" are tolerances and scale with --tol-scale.
DEFAULTS = {
    "core-curvature": {"samples": 20, "tol_flat": 1e-9, "tol_constant": 1e-6, "tol_symmetry": 1e-10,
                       "tol_berger": 1e-4, "tol_atlas": 1e-8},
    "conformal-keylemma": {"K": 10.0, "eps": 0.5},
    "cheeger-estimates": {"l_grid": [1.0, 0.5, 0.25], "points": 5, "planes": 4, "tol_closed_form": 1e-10,
                          "tol_berger": 1e-4, "tol_orbital": 1e-5},
    "singular-tubes": {"t_grid": [0.01, 0.02, 0.05, 0.1, 0.2], "tol_orphan": 1e-6, "min_a_slope": 0.8,
                       "a_gap_l_grid": [1.0, 0.5, 0.25, 0.125], "a_gap_ratio": 1.0 / 3.0, "points": 3},
    "ricci-lift": {"K": 20.0, "eps": 0.3, "samples": 10, "lambda_grid": [1.0, 0.5, 0.25, 0.125]},
    "almost-nonneg": {"eps_grid": [0.5, 0.25, 0.125], "K": 5.0, "samples": 10,
                      "l_grid": [1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125]},
    "exotic-op2": {"sample_points": [[0.7853981633974483], [1.5707963267948966], [2.356194490192345],
                                     [0.3], [2.8]],
                   "restarts": 20, "grid": 1000, "ricci_samples": 8, "tol_algebra": 1e-10, "tol_frame": 1e-10,
                   "tol_zero": 1e-8, "tol_form": 1e-3, "tol_berger": 1e-10, "tol_transition": 1e-10},
}

MODELS = {
    "core-curvature": ("flat-R3", "round-S2", "round-S3", "berger-S3"),
    "conformal-keylemma": ("round-S2", "round-S3"),
    "cheeger-estimates": ("hopf-S1-on-S3", "torus-T2-on-S3", "davis-SO3-on-S7"),
    "singular-tubes": ("torus-T2-on-S3", "davis-SO3-on-S7"),
    "ricci-lift": ("davis-SO3-on-S7", "torus-T2-on-S3"),
    "almost-nonneg": ("torus-T2-on-S3", "davis-SO3-on-S7"),
    "exotic-op2": ("spin9xS8", "milnor-E-m-n"),
}


@dataclass
class SuiteRequest:
    suite: str
    model: str
    params: dict
    seed: int = 0
    threads: int = None

    def validate(self):
        if self.suite not in SUITES:
            raise InputError(f"unknown suite {self.suite!r}; known: {', '.join(SUITES)}")
        catalog.entry(self.model)
        if self.model not in MODELS[self.suite]:
            raise InputError(f"suite {self.suite} does not run on {self.model}; "
                             f"supported: {', '.join(MODELS[self.suite])}")


def resolve_params(suite, overrides=None, tol_scale=1.0):
    if suite not in DEFAULTS:
        raise InputError(f"unknown suite {suite!r}")
    params = {k: (list(v) if isinstance(v, (list, tuple)) else v) for k, v in DEFAULTS[suite].items()}
    for k, v in (overrides or {}).items():
        if k not in params:
            raise InputError(f"suite {suite} has no parameter {k!r}")
        params[k] = v
    if tol_scale != 1.0:
        for k in params:
            if k.startswith("tol_"):
                params[k] = params[k] * tol_scale
    return params


def run(req: SuiteRequest):
    """Certificates for one suite on one model; each carries enough to be replayed."""
    req.validate()
    certs = _RUNNERS[req.suite](req.model, req.params, req.seed, req.threads)
    for k, cert in enumerate(certs):
        detail = cert.config
        cert.config = {"suite": req.suite, "model_id": req.model, "params": req.params, "part": k,
                       "detail": detail}
        cert.model = req.model
        cert.suite = req.suite
    return certs


# ---------------------------------------------------------------- core curvature
def _chart_points(dim, count, rng, radius=1.2):
    pts = rng.standard_normal((count, dim))
    pts *= (radius * rng.uniform(0, 1, count) ** (1 / dim) / np.linalg.norm(pts, axis=1))[:, None]
    return pts


def _run_core(model_id, p, seed, threads):
    rng = np.random.default_rng(seed)
    model = catalog.build(model_id)
    cert = Certificate("core-curvature", model_id, {}, seed)
    pts = _chart_points(model.dim, p["samples"], rng)
    sym = cert.stage("tensor_identities")
    worst = {"bianchi": 0.0, "skew_first": 0.0, "skew_last": 0.0, "pair": 0.0}
    secs, berger_err, max_R = [], 0.0, 0.0
    act = actions.hopf_action() if model_id == "berger-S3" else None
    for x in pts:
        g, _, R = model.curvature(x)
        for k, v in G.curvature_symmetry_residuals(R).items():
            worst[k] = max(worst[k], v)
        max_R = max(max_R, float(np.max(np.abs(R))))
        u, w = CH.sample_orthonormal_pair(g, rng)
        sec = G.sectional_from(g, R, u, w)
        secs.append(sec)
        if act is not None:
            berger_err = max(berger_err, abs(sec - _berger_oracle(act, model.l, x, g, u, w)))
    sym.at_most("max_bianchi_residual", worst["bianchi"], p["tol_symmetry"])
    for k in ("skew_first", "skew_last", "pair"):
        sym.at_most(f"max_{k}_residual", worst[k], p["tol_symmetry"])
    st = cert.stage("sectional")
    if model_id == "flat-R3":
        st.at_most("max_abs_riemann", max_R, p["tol_flat"])
    elif model_id in ("round-S2", "round-S3"):
        st.at_most("max_abs_sec_minus_1", max(abs(s - 1.0) for s in secs), p["tol_constant"])
    else:
        st.at_most("max_berger_oracle_gap", berger_err, p["tol_berger"])
    st.info("sec_min", min(secs))
    st.info("sec_max", max(secs))
    if model_id in ("round-S2", "round-S3"):
        # the catalog model is the north chart of the atlas
        _, south, trans = models.sphere_atlas(model.dim)
        at = cert.stage("atlas")
        gap = 0.0
        move, jac = jax.jit(trans), jax.jit(jax.jacfwd(trans))
        for x in pts[:5]:
            u, w = CH.sample_orthonormal_pair(model.metric_at(x), rng)
            y, J = np.asarray(move(x)), np.asarray(jac(x))
            du, dw = J @ u, J @ w
            gap = max(gap, abs(G.sectional(model, x, u, w) - G.sectional(south, y, du, dw)))
        at.at_most("chart_transition_sec_gap", gap, p["tol_atlas"])
    return [cert]


def _berger_oracle(hopf, l, x, gl, u, w):
    # unit Hopf fibers, so the round complement of the fiber stays orthonormal for g_l
    K = hopf.killing(x)[:, 0]
    h1, h2 = G.orthonormal_complement(hopf.base.metric_at(x), [K])
    return CH.berger_sectional(l, K / math.sqrt(K @ gl @ K), h1, h2, gl, u, w)


# ---------------------------------------------------------------- conformal curvature gain
def _run_keylemma(model_id, p, seed, threads):
    base = catalog.build(model_id)
    _, cert, _ = quasi_positive_pipeline(base, np.zeros(base.dim), p["K"], p["eps"], seed=seed)
    return [cert]


# ---------------------------------------------------------------- Cheeger estimates
def _regular_points(action, count, rng):
    pts = []
    while len(pts) < count:
        x = _chart_points(action.base.dim, 1, rng, radius=1.0)[0]
        if pipelines._regular(action, action.base, x):
            pts.append(x)
    return pts


def _run_cheeger(model_id, p, seed, threads):
    rng = np.random.default_rng(seed)
    action = catalog.build(model_id)
    base = action.base
    cert = Certificate("cheeger-estimates", model_id, {}, seed)
    pts = _regular_points(action, p["points"], rng)
    if model_id == "hopf-S1-on-S3":
        st = cert.stage("closed_form")
        gap = berger_gap = 0.0
        for l in p["l_grid"]:
            cm = CH.cheeger_metric(action, base, l)
            for x in pts:
                K = action.killing(x)[:, 0]
                gap = max(gap, abs(K @ cm.metric_at(x) @ K - l * l / (1 + l * l)))
                gl, _, Rl = cm.curvature(x)
                for _ in range(p["planes"]):
                    u, w = CH.sample_orthonormal_pair(gl, rng)
                    berger_gap = max(berger_gap, abs(G.sectional_from(gl, Rl, u, w)
                                                     - _berger_oracle(action, l, x, gl, u, w)))
        st.at_most("fiber_length_gap", gap, p["tol_closed_form"])
        st.at_most("berger_sectional_gap", berger_gap, p["tol_berger"])
    st = cert.stage("orbital_estimate")
    for l in p["l_grid"]:
        rep = CH.orbital_estimate_check(action, base, l, pts, p["planes"], seed)
        st.at_least(f"lower_bound_margin@l={l:g}", rep.bound_margin, -p["tol_orbital"])
        if rep.horizontal_samples:
            st.at_least(f"horizontal_margin@l={l:g}", rep.horizontal_margin, -p["tol_orbital"])
        else:
            st.info(f"horizontal_planes@l={l:g}", 0)
    c1, c2 = CH.kappa_bounds(action, base, pts)
    kb = cert.stage("kappa_bounds")
    kb.info("sup_kappa", c1)
    kb.at_least("inf_kappa_orbit", c2, 1e-12)
    br = cert.stage("berestovskii")
    split = CH.isotropy_split(action, base, pts[0])
    h = np.asarray(split.g_x).reshape(action.lie_dim, -1)
    res = CH.berestovskii_centralizer(action.C, action.B, h)
    br.info("centralizer_dim", res.dim)
    consistent = (res.dim == 0) == bool(action.pi1_finite)
    br.add("consistent_with_declared_pi1", float(consistent), 1.0, consistent)
    return [cert]


# ---------------------------------------------------------------- singular tubes
def _run_tubes(model_id, p, seed, threads):
    action = catalog.build(model_id)
    base = action.base
    cert = Certificate("singular-tubes", model_id, {}, seed)
    for stratum in action.declared_strata:
        rep = CH.singular_tube_diagnostics(action, base, stratum, p["t_grid"], seed=seed)
        st = cert.stage(f"stratum {stratum.label}")
        st.add("angle_slope_finite", rep.angle_slope_C, float("inf"), bool(np.isfinite(rep.angle_slope_C)))
        st.at_least("kappa_lower_min", float(np.min(rep.kappa_lower)), 1e-12)
        st.at_most("orphan_angle_max", float(np.max(rep.orphan_angle)), p["tol_orphan"])
        if rep.a_vacuous or not np.isfinite(rep.a_slope):
            st.info("a_isotropy_max", float(np.max(rep.a_isotropy)) if len(rep.a_isotropy) else 0.0)
        else:
            st.at_least("a_isotropy_slope", rep.a_slope, p["min_a_slope"])
    rng = np.random.default_rng(seed)
    st = cert.stage("a_tensor_gap")
    if base.dim - (action.lie_dim - action.principal_isotropy_dim) < 2:
        # principal orbits of codimension one leave no horizontal planes to compare
        st.info("horizontal_planes", 0)
        return [cert]
    gap = CH.cheeger_a_gap(action, base, _regular_points(action, p["points"], rng), p["a_gap_l_grid"], seed=seed)
    st.add("monotone", float(gap.monotone), 1.0, gap.monotone)
    st.at_most("final_ratio", gap.final_ratio, p["a_gap_ratio"])
    return [cert]


# ---------------------------------------------------------------- pipelines
def _run_ricci(model_id, p, seed, threads):
    action = catalog.build(model_id)
    cfg = pipelines.PipelineConfig(model_id, eps=p["eps"], K=p["K"], lambda_grid=p["lambda_grid"],
                                   samples=p["samples"], seed=seed)
    _, cert = pipelines.ricci_lift(action, p["K"], p["eps"], p["lambda_grid"], cfg)
    return [cert]


def _run_almost(model_id, p, seed, threads):
    action = catalog.build(model_id)
    certs, chosen = [], []
    for eps in p["eps_grid"]:
        cfg = pipelines.PipelineConfig(model_id, eps=eps, K=p["K"], samples=p["samples"], l_grid=p["l_grid"],
                                       seed=seed)
        _, cs = pipelines.almost_nonnegative(action, eps, p["K"], cfg)
        certs += cs
        chosen.append(cs[-1].find("search").get("chosen_lambda").value)
    trend = Certificate("almost-nonneg", model_id, {}, seed)
    st = trend.stage("trend")
    for eps, lam in zip(p["eps_grid"], chosen):
        st.info(f"chosen_lambda@eps={eps:g}", lam)
    ok = bool(np.all(np.diff(chosen) <= 0))
    st.add("chosen_lambda_nonincreasing", float(ok), 1.0, ok)
    return certs + [trend]


# ---------------------------------------------------------------- exotic spheres
def _run_op2(model_id, p, seed, threads):
    if model_id == "milnor-E-m-n":
        return [_milnor_certificate(p, seed)]
    rng = np.random.default_rng(seed)
    O = algebra.octonions()
    cert = Certificate("exotic-op2", model_id, {}, seed)
    st = cert.stage("algebra")
    res = algebra.algebra_residuals(O, seed=seed)
    st.at_most("composition_residual", res["composition"], p["tol_algebra"])
    st.at_most("alternative_residual", res["alternative"], p["tol_algebra"])
    ders = algebra.derivation_algebra(O)
    st.add("der_dim", len(ders), 14, len(ders) == 14)
    worst = 0.0
    for _ in range(100):
        u = rng.standard_normal(8)
        q = O.random_unit(rng)
        a = np.concatenate(algebra.chart_transition(O, u, q))
        b = np.concatenate(algebra.transition_closed_form(O, u, q))
        worst = max(worst, float(np.max(np.abs(a - b))))
    st.at_most("chart_transition_gap", worst, p["tol_transition"])
    split = lie.spin9_split()
    ls = cert.stage("splitting")
    for name, d, want in zip(("spin9", "spin8", "spin7", "m8", "m9"), lie.split_dimensions(split), (36, 28, 21, 7, 8)):
        ls.add(f"dim_{name}", d, want, d == want)
    ls.at_most("m9_bracket_outside_spin8", split.bracket_in("m_base", "m_base", "so_b"), 1e-12)
    zs = cert.stage("zero_planes")
    best = None
    for (t,) in p["sample_points"]:
        frame = op2.q_horizontal_frame(t=t, split=split)
        zs.at_most(f"frame_residual@t={t:.4g}", frame.residual, p["tol_frame"])
        rep = op2.zero_plane_search(frame=frame, restarts=p["restarts"], seed=seed, threads=threads)
        zs.at_most(f"min_sec@t={t:.4g}", rep.min_sec, p["tol_zero"])
        zs.at_most(f"form_angle@t={t:.4g}", rep.form_angle, p["tol_form"])
        if best is None or rep.min_sec > best.min_sec:
            best = rep
    ctrl = op2.zero_plane_search(t=p["sample_points"][0][0], restarts=p["restarts"], within="P", seed=seed,
                                 threads=threads)
    zs.at_least("P_family_min_sec", ctrl.min_sec, 1e-6)
    bs = cert.stage("berger_family")
    t_grid = np.linspace(0.1, math.pi - 0.1, 9)
    Z = op2.LiftData(rng.standard_normal(8), np.zeros(7))
    W = op2.LiftData(rng.standard_normal(8), rng.standard_normal(7))
    rep = op2.berger_family_check(Z, W, t_grid)
    bs.at_most("variation_hopf_horizontal_Z", rep.variation, p["tol_berger"])
    ctrl = op2.berger_family_check(W, W, t_grid)
    bs.at_least("variation_control", ctrl.variation, 1e-3)
    grid = op2.davis_hopf_grid(O, p["grid"], seed=seed, threads=threads)
    ds = cert.stage("davis_hopf")
    ds.at_least("alpha", grid.alpha, 1e-12)
    ds.info("alpha_first_side", grid.alpha_first_side)
    ds.at_most("orbit_residual", grid.max_orbit_residual, 1e-8)
    ds.at_most("fiber_crosscheck", grid.max_fiber_crosscheck, 1e-6)
    q = op2.quotient_ricci_certificate(O, best, grid, count=p["ricci_samples"], seed=seed)
    qs = cert.stage("quotient_ricci")
    qs.at_least("beta_min", q.beta_min, 1e-12)
    qs.add("hopf_horizontal_control_refused", q.control_max, 1e-12, q.control_refused)
    return [cert]


def _milnor_certificate(p, seed):
    rng = np.random.default_rng(seed)
    H = algebra.quaternions()
    pair = catalog.build("milnor-E-m-n")
    cert = Certificate("exotic-op2", "milnor-E-m-n", {}, seed)
    ders = algebra.derivation_algebra(H)
    st = cert.stage("bundle")
    st.add("der_dim", len(ders), 3, len(ders) == 3)
    rt = eq = 0.0
    for _ in range(200):
        u = rng.standard_normal(4)
        v = H.random_unit(rng)
        g = algebra.random_automorphism(H, rng, derivations=ders)
        u2, v2 = pair.transition(u, v)
        u1, v1 = pair.inverse(u2, v2)
        rt = max(rt, float(np.max(np.abs(u1 - u))), float(np.max(np.abs(v1 - v))))
        gu, gv = algebra.davis_act(H, g, u, v)
        a2, b2 = pair.transition(gu, gv)
        eq = max(eq, float(np.max(np.abs(a2 - g @ u2))), float(np.max(np.abs(b2 - g @ v2))))
    st.at_most("round_trip", rt, p["tol_transition"])
    st.at_most("equivariance", eq, p["tol_transition"])
    grid = op2.davis_hopf_grid(H, min(p["grid"], 300), seed=seed)
    z = op2.zero_plane_search(t=math.pi / 2, b=4, restarts=p["restarts"], seed=seed)
    q = op2.quotient_ricci_certificate(H, z, grid, count=p["ricci_samples"], seed=seed)
    qs = cert.stage("quaternionic_analog")
    qs.at_most("zero_plane_min", z.min_sec, p["tol_zero"])
    qs.at_least("alpha", grid.alpha, 1e-12)
    qs.at_least("beta_min", q.beta_min, 1e-12)
    return cert


_RUNNERS = {
    "core-curvature": _run_core,
    "conformal-keylemma": _run_keylemma,
    "cheeger-estimates": _run_cheeger,
    "singular-tubes": _run_tubes,
    "ricci-lift": _run_ricci,
    "almost-nonneg": _run_almost,
    "exotic-op2": _run_op2,
}
