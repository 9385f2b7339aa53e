"""End-to-end deformation procedures: Cheeger step, conformal step near strata, second
Cheeger step, and the Ricci lift, each producing a certificate."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import jax
import jax.numpy as jnp
import numpy as np

from . import cheeger as CH
from . import conformal as CF
from . import geometry as G
from .certificates import Certificate, emit_certificate  # noqa: F401  (re-exported)
from .cheeger import CheegerMetricModel, GroupActionModel
from .conformal import ConformalMetricModel, Cutoff, StratumTube
from .errors import ConfigurationError, InputError, SearchExhaustedError
from .geometry import MetricModel
from .profile import build_profile
from .submersion import a_apply, a_tensor

DEFAULT_GRID = (1.0, 0.5, 0.25, 0.125)
REGION_QUOTA = {"near": 0.4, "bulk": 0.4, "far": 0.2}
CHART_RADIUS = 2.0


@dataclass
class PipelineConfig:
    model: str
    eps: float = 0.2
    K: float = 5.0
    l_grid: Sequence[float] = DEFAULT_GRID
    lambda_grid: Sequence[float] = DEFAULT_GRID
    samples: int = 10
    planes: int = 4
    shell: tuple = (0.03, 0.2)
    seed: int = 0

    def __post_init__(self):
        for name in ("l_grid", "lambda_grid"):
            grid = np.asarray(getattr(self, name), dtype=float)
            if grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) >= 0):
                raise InputError(f"{name} must be positive and strictly decreasing")
            setattr(self, name, tuple(float(v) for v in grid))
        if self.samples < 3:
            raise InputError("a sample plan needs at least one point per region")

    def as_dict(self):
        return asdict(self)


# ---------------------------------------------------------------- sample plans
def _ambient_sample(base, rng):
    chart = getattr(base, "chart", None)
    if chart is None:
        return rng.standard_normal(base.dim)
    y = rng.standard_normal(chart.n + 1)
    return np.asarray(chart.from_ambient(jnp.asarray(y / np.linalg.norm(y))))


def _strata_distance(action, x):
    ds = [float(s.S.distance_fn(jnp.asarray(x))) for s in action.declared_strata]
    return min(ds) if ds else math.inf


def stratified_samples(action: GroupActionModel, base: MetricModel, count, seed=0, shell=(0.03, 0.2)):
    """Points tagged 'near' (strata shell), 'bulk' (regular) and 'far' with 40/40/20 quotas.

    Models without strata put the near quota into the bulk.
    """
    rng = np.random.default_rng(seed)
    strata = list(action.declared_strata)
    n_near = int(round(REGION_QUOTA["near"] * count)) if strata else 0
    n_far = max(1, int(round(REGION_QUOTA["far"] * count)))
    n_bulk = count - n_near - n_far
    out = []
    i = 0
    tries = 0
    while len(out) < n_near:
        tries += 1
        if tries > 200 * count:
            raise ConfigurationError("could not place near-stratum samples")
        st = strata[i % len(strata)]
        t = rng.uniform(*shell)
        try:
            x = CF.tube_point(base, st.S, min(t, 0.9 * st.normal_inj / 2), rng)
        except Exception:
            continue
        if np.linalg.norm(x) > CHART_RADIUS:
            continue
        if st.lower is not None:
            low = action.stratum(st.lower)
            if float(low.S.distance_fn(jnp.asarray(x))) < DAVIS_LIKE_CLEARANCE:
                continue
        out.append(("near", x))
        i += 1
    pool = []
    while len(pool) < 8 * (n_bulk + n_far):
        x = _ambient_sample(base, rng)
        if np.linalg.norm(x) <= CHART_RADIUS:
            pool.append(x)
    dists = np.array([_strata_distance(action, x) for x in pool])
    order = np.argsort(-dists, kind="stable")
    far_idx = list(order[:n_far])
    out += [("far", pool[j]) for j in far_idx]
    bulk = [pool[j] for j in range(len(pool)) if j not in far_idx and dists[j] > shell[1]]
    out += [("bulk", x) for x in bulk[:n_bulk]]
    if len([r for r, _ in out if r == "bulk"]) < n_bulk:
        raise ConfigurationError("regular region too small for the requested bulk quota")
    return out


DAVIS_LIKE_CLEARANCE = 0.6   # non-compact strata are sampled where their cutoff is 1


def _regular(action, base, x):
    return CH.isotropy_split(action, base, x).isotropy_dim == action.principal_isotropy_dim


# ---------------------------------------------------------------- quotient oracle
def _horizontal_basis(action, g, x):
    K = action.killing(x)
    return G.orthonormal_complement(g, list(K.T)) if action.lie_dim else G.gram_schmidt(g, list(np.eye(len(x))))


def quotient_sectional(action, base, x, Y, Z, A=None):
    """sec of the quotient plane d pi(Y), d pi(Z) for g-orthonormal horizontal Y, Z."""
    g, _, R = base.curvature(x)
    if A is None:
        A = a_tensor(CH.orbit_submersion(action, base), x)[0]
    return G.sectional_from(g, R, Y, Z) + 3.0 * float(G.norm(g, a_apply(A, Y, Z)) ** 2)


def quotient_ricci_min(action, base, x):
    """Smallest quotient Ricci curvature at the orbit through a regular x."""
    g, _, R = base.curvature(x)
    H = np.array(_horizontal_basis(action, g, x))
    m = len(H)
    if m < 2:
        return math.nan
    A = a_tensor(CH.orbit_submersion(action, base), x)[0] if action.lie_dim else np.zeros((len(x),) * 3)
    Q = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            s = 0.0
            for e in H:
                s += float(np.einsum("ijkl,i,j,k,l->", R, H[i], e, e, H[j]))
                s += 3.0 * float(a_apply(A, H[i], e) @ g @ a_apply(A, H[j], e))
            Q[i, j] = s
    return float(np.linalg.eigvalsh(0.5 * (Q + Q.T))[0])


# ---------------------------------------------------------------- step 1
def step1_discrepancy(action, base, l, samples, planes, seed):
    """sup |sec_{g_l}(Y, Z) - sec_quotient(Y, Z)| over horizontal g-orthonormal pairs."""
    rng = np.random.default_rng(seed)
    cm = CheegerMetricModel(action, base, l)
    worst = 0.0
    count = 0
    for x in samples:
        g = base.metric_at(x)
        H = _horizontal_basis(action, g, x)
        if len(H) < 2:
            continue
        P = np.array(H).T
        A = a_tensor(CH.orbit_submersion(action, base), x)[0]
        gl, _, Rl = cm.curvature(x)
        for _ in range(planes):
            Y, Z = CH.sample_orthonormal_pair(g, rng, P)
            worst = max(worst, abs(G.sectional_from(gl, Rl, Y, Z) - quotient_sectional(action, base, x, Y, Z, A)))
            count += 1
    return worst, count


def step1(action: GroupActionModel, base: MetricModel, eps, config: PipelineConfig = None):
    """Pick the largest l whose horizontal-curvature discrepancy stays below eps / 2."""
    config = config or PipelineConfig(action.label, eps=eps)
    pts = [x for r, x in stratified_samples(action, base, config.samples, config.seed, config.shell)
           if r != "near" and _regular(action, base, x)]
    cert = Certificate("step1", f"{action.label} on {base.label}", _config_dict(config, eps=eps), config.seed)
    st = cert.stage("step1")
    trend = []
    chosen = None
    for l in config.l_grid:
        d, count = step1_discrepancy(action, base, l, pts, config.planes, config.seed)
        trend.append(d)
        st.info(f"discrepancy@l={l:g}", d)
        if d < eps / 2:
            chosen = l
            break
    if chosen is None:
        raise SearchExhaustedError(f"no l in {config.l_grid} brings the discrepancy under {eps / 2:g}",
                                   dict(zip(config.l_grid, trend)))
    st.info("horizontal_planes", count)
    st.info("chosen_l", chosen)
    st.add("discrepancy_sup", trend[-1], eps / 2, trend[-1] < eps / 2)
    model = CheegerMetricModel(action, base, chosen)
    model.stage = "step1"
    return model, cert


# ---------------------------------------------------------------- step 2
def _tubes_for(action, model, profiles_eps, K, eps, minsec_points=6, seed=0):
    strata = sorted(action.declared_strata, key=lambda s: s.level)
    tubes, profiles = [], []
    rng = np.random.default_rng(seed)
    for st in strata:
        radius = min(st.normal_inj / 2, 0.25)
        cutoff = None
        if st.lower is not None:
            low = action.stratum(st.lower)
            cutoff = Cutoff(low.S.distance_fn, 0.3, 0.6)
        pts = [CF.tube_point(model, st.S, 0.5 * radius * rng.uniform(0.2, 1.0), rng) for _ in range(minsec_points)]
        if st.lower is not None:
            pts = [p for p in pts if float(cutoff.traced()(jnp.asarray(p))) > 0] or pts
        minsec = CF.sampled_minsec(model, pts, restarts=2)
        prof = build_profile(K, profiles_eps, minsec, st.normal_inj)
        tubes.append(StratumTube(st.S, radius, st.level, st.normal_inj, cutoff))
        profiles.append(prof)
    return tubes, profiles


def _inner_points(model, tube, profile, count, rng):
    pts = []
    while len(pts) < count:
        t = rng.uniform(0.2, 0.9) * profile.sigma1
        x = CF.tube_point(model, tube.S, t, rng)
        if tube.cutoff is not None and float(tube.cutoff.traced()(jnp.asarray(x))) < 1.0:
            continue
        pts.append(x)
    return pts


def step2(cheeger_model: MetricModel, K, eps, action: GroupActionModel = None, config: PipelineConfig = None):
    """Conformal change near every declared stratum of the Step-1 metric.

    Certifies min adapted sec >= K on Omega_1 = B(strata, sigma_1) and
    sec~ - sec >= -eps / 2 on the stratified sample.
    """
    action = action or getattr(cheeger_model, "action", None)
    if action is None or not action.declared_strata:
        raise ConfigurationError("step 2 needs an action with declared strata")
    config = config or PipelineConfig(action.label, eps=eps, K=K)
    tubes, profiles = _tubes_for(action, cheeger_model, eps / 2, K, eps, seed=config.seed)
    cm = CF.multi_stratum_conformal(cheeger_model, tubes, profiles, action=action)
    cm.stage = "step2"
    cm.previous = cheeger_model
    cm.target_K = K
    cert = Certificate("step2", cheeger_model.label, _config_dict(config, eps=eps, K=K), config.seed)
    rng = np.random.default_rng(config.seed + 7)
    st = cert.stage("profiles")
    for i, prof in enumerate(profiles):
        st.info(f"sigma1@{i}", prof.sigma1)
        st.info(f"sigma3@{i}", prof.sigma3)
        for name, margin in prof.conditions().items():
            st.add(f"condition_{name}@{i}", margin, 0.0, margin > 0)
    st = cert.stage("omega1")
    adapted = math.inf
    for tube, prof in zip(tubes, profiles):
        for x in _inner_points(cheeger_model, tube, prof, 2, rng):
            ts = G.tube_splitting(cheeger_model, tube.S, x)
            gt, _, Rt = cm.curvature(x)
            for v in CF._adapted_vectors(ts, rng, config.planes):
                v = v / G.norm(gt, v)
                adapted = min(adapted, CF._min_sec_with(gt, Rt, v))
    st.at_least("adapted_sec_min", adapted, K)
    st = cert.stage("global")
    worst = math.inf
    identical = True
    samples = stratified_samples(action, action.base if hasattr(action, "base") else cheeger_model,
                                 config.samples, config.seed, config.shell)
    for _, x in samples:
        g, _, R = cheeger_model.curvature(x)
        gt, _, Rt = cm.curvature(x)
        for _ in range(config.planes):
            z, w = rng.standard_normal(len(x)), rng.standard_normal(len(x))
            worst = min(worst, G.sectional_from(gt, Rt, z, w) - G.sectional_from(g, R, z, w))
        if cm.f(x) == 0.0:
            identical &= bool(np.array_equal(cm.metric_at(x), cheeger_model.metric_at(x)))
    st.at_least("sec_change_min", worst, -eps / 2)
    st.add("support_identical", float(identical), 1.0, identical)
    return cm, cert


# ---------------------------------------------------------------- step 3
def _min_sec(model, x, rng):
    g, _, R = model.curvature(x)
    return CF.sampled_min_plane(g, R, rng)


def step3(conformal_model: MetricModel, eps, action: GroupActionModel = None, config: PipelineConfig = None,
          K_target: Optional[float] = None):
    """Cheeger-deform the Step-2 metric, choosing the largest lambda with min sec >= -eps.

    With ``K_target`` the certificate also demands that the input came out of the
    conformal step, whose Omega_1 bound the second deformation inherits.
    """
    action = action or getattr(conformal_model, "action", None)
    if action is None:
        raise ConfigurationError("step 3 needs the group action")
    config = config or PipelineConfig(action.label, eps=eps)
    cert = Certificate("step3", conformal_model.label,
                       _config_dict(config, eps=eps, K_target=K_target), config.seed)
    st = cert.stage("input")
    is_conformal = isinstance(conformal_model, ConformalMetricModel)
    st.add("input_is_step2_output", float(is_conformal), 1.0, is_conformal or K_target is None)
    if K_target is not None:
        have = getattr(conformal_model, "target_K", -math.inf) if is_conformal else -math.inf
        st.at_least("conformal_target_K", have, K_target)
    samples = stratified_samples(action, getattr(action, "base", conformal_model), config.samples,
                                 config.seed, config.shell)
    complement = [x for r, x in samples if r != "near"]
    near = [x for r, x in samples if r == "near"]
    rng = np.random.default_rng(config.seed + 11)
    st = cert.stage("search")
    trend = []
    chosen = None
    mins = {}
    for lam in config.lambda_grid:
        model = CheegerMetricModel(action, conformal_model, lam) if action.lie_dim else conformal_model
        comp_min = min(_min_sec(model, x, rng) for x in complement)
        near_min = min((_min_sec(model, x, rng) for x in near), default=math.inf)
        trend.append(comp_min)
        mins[lam] = min(comp_min, near_min)
        st.info(f"complement_min@lambda={lam:g}", comp_min)
        st.info(f"near_min@lambda={lam:g}", near_min)
        if mins[lam] >= -eps:
            chosen = lam
            break
    if chosen is None:
        raise SearchExhaustedError(f"no lambda in {config.lambda_grid} reaches sec >= {-eps:g}",
                                   {"complement_min": trend})
    st.info("chosen_lambda", chosen)
    st.at_least("sec_min", mins[chosen], -eps)
    monotone = bool(np.all(np.diff(trend) >= -1e-6))
    st.add("complement_trend_nondecreasing", float(monotone), 1.0, monotone)
    if action.lie_dim:
        pts = [x for x in complement if _regular(action, conformal_model, x)]
        if pts:
            _, c2 = CH.kappa_bounds(action, conformal_model, pts)
            st.info("kappa_floor_c", c2 ** 2)
    out = CheegerMetricModel(action, conformal_model, chosen) if action.lie_dim else conformal_model
    out.stage = "step3"
    out.previous = conformal_model
    out.lam = chosen
    return out, cert


def almost_nonnegative(action: GroupActionModel, eps, K=5.0, config: PipelineConfig = None):
    """Steps 1 to 3 in sequence; returns (final model, [certificates])."""
    base = action.base
    config = config or PipelineConfig(action.label, eps=eps, K=K)
    m1, c1 = step1(action, base, eps, config)
    m2, c2 = step2(m1, K, eps, action, config)
    m3, c3 = step3(m2, eps, action, config)
    return m3, [c1, c2, c3]


# ---------------------------------------------------------------- Ricci lift
def _ricci_min(model, x):
    g, _, R = model.curvature(x)
    return float(G.ricci_eigs_from(g, R)[0])


def ricci_lift(action: GroupActionModel, K, eps, lambda_grid=DEFAULT_GRID, config: PipelineConfig = None,
               probe_lambdas=DEFAULT_GRID):
    """Conformal change over all strata, then Cheeger deformation; certify Ric > 0.

    Omega_1 samples are checked for every lambda in the grid, the complement at
    the largest lambda that clears it.  A missing finiteness declaration is a
    configuration error; a declared infinite fundamental group is recorded as a
    hypothesis violation and the lift is not attempted.
    """
    base = action.base
    config = config or PipelineConfig(action.label, eps=eps, K=K, lambda_grid=lambda_grid)
    if action.pi1_finite is None:
        raise ConfigurationError(f"{action.label} does not declare whether principal orbits have finite pi_1")
    cert = Certificate("ricci-lift", f"{action.label} on {base.label}",
                       _config_dict(config, eps=eps, K=K), config.seed)
    samples = stratified_samples(action, base, config.samples, config.seed, config.shell)
    regular = [x for r, x in samples if r != "near" and _regular(action, base, x)]
    st = cert.stage("hypotheses")
    st.add("principal_orbit_pi1_finite", float(bool(action.pi1_finite)), 1.0, bool(action.pi1_finite))
    probe = CH.vertical_ricci_probe(action, base, probe_lambdas, regular[:5])
    pt = cert.stage("ricci_split_probe")
    for lam, v, m, h in zip(probe.lambdas, probe.vertical_min, probe.mixed_max, probe.horizontal_min):
        pt.info(f"vertical_min@lambda={lam:g}", v)
        pt.info(f"mixed_max@lambda={lam:g}", m)
        pt.info(f"horizontal_min@lambda={lam:g}", h)
    pt.info("vertical_exponent", probe.exponent)
    if not action.pi1_finite:
        # the negative control: record that the vertical term does not blow up
        st.add("hypothesis_violation", 1.0, 0.0, False)
        pt.info("vertical_diverges", float(probe.diverges))
        return None, cert
    pt.add("vertical_diverges", float(probe.diverges), 1.0, probe.diverges)
    pt.at_most("mixed_decay_ratio", probe.mixed_ratio, 0.25)
    qmin = min(quotient_ricci_min(action, base, x) for x in regular)
    scale = 1.0 if qmin >= 2.0 else math.sqrt(qmin / 2.0)
    st.at_least("quotient_ricci_min", qmin, 0.0)
    st.info("rescale_factor", scale)
    if scale != 1.0:
        from .models import scaled
        base = scaled(base, 1.0 / scale)
    tubes, profiles = _tubes_for(action, base, eps, K, eps, seed=config.seed)
    cm = CF.multi_stratum_conformal(base, tubes, profiles, action=action)
    rng = np.random.default_rng(config.seed + 3)
    omega1 = []
    for tube, prof in zip(tubes, profiles):
        omega1 += _inner_points(base, tube, prof, 2, rng)
    complement = [x for _, x in samples]
    cs = cert.stage("conformal")
    cs.info("omega1_points", len(omega1))
    cs.info("complement_points", len(complement))
    cs.at_least("ricci_min_conformal", min(_ricci_min(cm, x) for x in omega1 + complement), 0.0)
    ls = cert.stage("lift")
    chosen = None
    omega_ok = True
    for lam in config.lambda_grid:
        model = CheegerMetricModel(action, cm, lam)
        om = min(_ricci_min(model, x) for x in omega1)
        omega_ok &= ls.at_least(f"omega1_ricci_min@lambda={lam:g}", om, 1e-12)
        if chosen is None:
            co = min(_ricci_min(model, x) for x in complement)
            ls.info(f"complement_ricci_min@lambda={lam:g}", co)
            if co > 0:
                chosen = (lam, co, model)
    if chosen is None:
        ls.add("complement_ricci_positive", 0.0, 0.0, False)
        return None, cert
    lam, co, model = chosen
    ls.info("chosen_lambda", lam)
    ls.at_least("complement_ricci_min", co, 1e-12)
    model.stage = "ricci-lift"
    model.lam = lam
    return model, cert


def _config_dict(config: PipelineConfig, **extra):
    d = config.as_dict()
    d.update(extra)
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}
