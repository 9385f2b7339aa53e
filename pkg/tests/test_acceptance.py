"""The ten acceptance criteria, each at its stated tolerance and with a runtime budget."""

import math
import time

import jax.numpy as jnp
import numpy as np

from curvlab import actions, algebra, catalog, cheeger as CH, geometry as G, lie, models, op2, suites
from curvlab.conformal import TubeSamplePlan, quasi_positive_pipeline
from curvlab.submersion import ricci_split


def _run(suite, model, **overrides):
    params = suites.resolve_params(suite, overrides)
    return suites.run(suites.SuiteRequest(suite, model, params, seed=0))


def _great_circle():
    # {z2 = 0} in the north stereographic chart of the unit 3-sphere
    return G.SubmanifoldSpec(
        lambda th: jnp.array([jnp.cos(th[0]), jnp.sin(th[0]), 0.0]), np.array([0.0]), np.array([2 * np.pi]), 2,
        distance_fn=lambda y: (lambda z: jnp.arctan2(jnp.linalg.norm(z[2:]), jnp.linalg.norm(z[:2])))(
            models.stereo_to_sphere(y)),
        periodic=[True], label="great circle")


def _loglog_slope(ts, vals):
    return float(np.polyfit(np.log(ts), np.log(vals), 1)[0])


def test_criterion_01_constant_curvature_oracles(acceptance_line):
    start = time.perf_counter()
    certs = {m: _run("core-curvature", m, samples=20)[0] for m in ("flat-R3", "round-S2", "round-S3")}
    elapsed = time.perf_counter() - start
    flat = certs["flat-R3"].find("sectional").get("max_abs_riemann").value
    s2 = certs["round-S2"].find("sectional").get("max_abs_sec_minus_1").value
    s3 = certs["round-S3"].find("sectional").get("max_abs_sec_minus_1").value
    ok = flat <= 1e-9 and s2 <= 1e-6 and s3 <= 1e-6 and elapsed < 5.0
    acceptance_line(1, "flat and round oracles", ok,
                    f"|R|={flat:.1e} S2={s2:.1e} S3={s3:.1e} {elapsed:.1f}s")
    assert ok


def test_criterion_02_conformal_two_path(acceptance_line):
    start = time.perf_counter()
    plan = TubeSamplePlan(inner=25, shell=25, outer=10, planes=3)
    _, _, rep = quasi_positive_pipeline(models.round_sphere(3), np.zeros(3), 10.0, 0.5, plan=plan)
    elapsed = time.perf_counter() - start
    ok = rep.two_path_max <= 1e-5 and rep.support_identical and elapsed < 60.0
    acceptance_line(2, "conformal curvature, formula vs direct", ok,
                    f"rel={rep.two_path_max:.1e} identical_outside={rep.support_identical} {elapsed:.1f}s")
    assert ok


def test_criterion_03_key_lemma_certificate(acceptance_line):
    start = time.perf_counter()
    cert = _run("conformal-keylemma", "round-S3", K=10.0, eps=0.5)[0]
    elapsed = time.perf_counter() - start
    c1 = cert.find("key_lemma").get("conclusion1_min").value
    c3 = cert.find("key_lemma").get("conclusion3_min").value
    ric = cert.find("quasi_positive").get("ricci_min").value
    ok = cert.passed and c1 > 10.0 and c3 >= -0.5 and ric >= 1.5 and elapsed < 120.0
    acceptance_line(3, "quasi-positive deformation of S^3", ok,
                    f"sec_inner={c1:.2f} sec_change={c3:.2e} ric={ric:.3f} {elapsed:.1f}s")
    assert ok


def test_criterion_04_hessian_asymptotics(acceptance_line):
    s3 = models.round_sphere(3)
    point = G.SubmanifoldSpec.point(np.zeros(3), 3, distance_fn=lambda y: 2 * jnp.arctan(jnp.linalg.norm(y)))
    ts = np.geomspace(1e-2, 0.2, 8)
    slopes, hx = {}, 0.0
    for S, q, u in ((point, np.zeros(3), np.array([0.6, 0.0, 0.8])),
                    (_great_circle(), np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0]))):
        u = u / G.norm(s3.metric_at(q), u)
        res = []
        for t in ts:
            x = G.geodesic(s3, q, u, t, samples=[0.0, t]).points[-1]
            split = G.tube_splitting(s3, S, x)
            H = G.hess_distance(s3, S, x, split=split)
            v = split.V_basis[0].components
            v = v / G.norm(split.metric, v)
            res.append(abs(v @ H.form @ v - 1.0 / t))
            hx = max(hx, float(np.max(np.abs(H.form @ split.X.components))))
        slopes[S.label] = _loglog_slope(ts, res)
    # cross term of the two Jacobi fields on a metric without symmetry
    ps = models.perturbed_sphere(3)
    circle = G.SubmanifoldSpec(lambda th: jnp.array([jnp.cos(th[0]), jnp.sin(th[0]), 0.0]),
                               np.array([0.0]), np.array([2 * np.pi]), 2, periodic=[True])
    th0 = np.array([0.4])
    q = np.asarray(circle.parametrization(jnp.asarray(th0)))
    nu = G.orthonormal_complement(ps.metric_at(q), [G.submanifold_tangent(circle, th0)[:, 0]])[0]
    dres = G.DistanceResult(0.1, q, th0, G.TangentVector(q, nu), G.TangentVector(q, nu))
    V0, V0p, H0, H0p = G.tube_initial_data(ps, circle, dres)
    tc = np.geomspace(1e-3, 1e-1, 9)
    sol = G.jacobi_transport(ps, G.start_of_geodesic(q, nu), np.array(V0 + H0), np.array(V0p + H0p),
                             samples=np.concatenate([[0.0], tc]))
    cross = [abs(sol.J[0, k + 1] @ ps.metric_at(sol.geodesic.points[k + 1]) @ sol.J[1, k + 1])
             for k in range(len(tc))]
    cross_slope = _loglog_slope(tc, cross)
    ok = min(slopes.values()) >= 0.8 and cross_slope >= 2.8 and hx <= 1e-6
    acceptance_line(4, "distance Hessian and Jacobi asymptotics", ok,
                    f"slopes={', '.join(f'{k}:{v:.2f}' for k, v in slopes.items())} "
                    f"cross={cross_slope:.2f} |Hess(X,.)|={hx:.1e}")
    assert ok


def test_criterion_05_berger_closed_form(acceptance_line):
    hopf = actions.hopf_action()
    base = hopf.base
    rng = np.random.default_rng(5)
    points = [rng.uniform(-0.8, 0.8, 3) for _ in range(20)]
    fiber_gap = berger_gap = 0.0
    for l in (1.0, 0.5, 0.25):
        cm = CH.cheeger_metric(hopf, base, l)
        for x in points:
            K = hopf.killing(x)[:, 0]
            gl, _, Rl = cm.curvature(x)
            fiber_gap = max(fiber_gap, abs(K @ gl @ K - l * l / (1 + l * l)))
            u, w = CH.sample_orthonormal_pair(gl, rng)
            h1, h2 = G.orthonormal_complement(base.metric_at(x), [K])
            oracle = CH.berger_sectional(l, K / math.sqrt(K @ gl @ K), h1, h2, gl, u, w)
            berger_gap = max(berger_gap, abs(G.sectional_from(gl, Rl, u, w) - oracle))
    margin = min(CH.orbital_estimate_check(hopf, base, l, points, 5, seed=5).bound_margin for l in (1.0, 0.5, 0.25))
    ok = fiber_gap <= 1e-10 and berger_gap <= 1e-4 and margin >= -1e-5
    acceptance_line(5, "Cheeger deformation of the Hopf action", ok,
                    f"fiber={fiber_gap:.1e} berger={berger_gap:.1e} orbital_margin={margin:.3f}")
    assert ok


def test_criterion_06_gray_oneill(acceptance_line):
    spec = actions.hopf_submersion()
    rng = np.random.default_rng(6)
    worst, ric_a_min = 0.0, math.inf
    for _ in range(10):
        split = ricci_split(spec, rng.uniform(-0.8, 0.8, 3))
        worst = max(worst, split.residual)
        ric_a_min = min(ric_a_min, float(np.linalg.eigvalsh(split.ric_a)[0]))
    ok = worst <= 1e-4 and ric_a_min >= -1e-12
    acceptance_line(6, "Ricci of the Hopf base from horizontal and A terms", ok,
                    f"residual={worst:.1e} min Ric^A={ric_a_min:.3f}")
    assert ok


def test_criterion_07_berestovskii(acceptance_line):
    su2 = lie.so(3)
    C = su2.structure_constants()
    sphere = CH.berestovskii_centralizer(C, np.eye(3), np.eye(3)[:, [2]])
    C4 = np.zeros((4, 4, 4))
    C4[:3, :3, :3] = C
    diagonal = np.array([[0.0], [0.0], [1.0], [1.0]])
    product = CH.berestovskii_centralizer(C4, np.eye(4), diagonal)
    torus = CH.berestovskii_centralizer(np.zeros((2, 2, 2)), np.eye(2), np.zeros((2, 0)))
    ok = (sphere.dim, product.dim, torus.dim) == (0, 0, 2) and sphere.exact and product.exact and torus.exact
    acceptance_line(7, "centralizer of the isotropy complement", ok,
                    f"su2/u1={sphere.dim} (S3xS1)/S1={product.dim} torus={torus.dim}")
    assert ok


def test_criterion_08_ricci_lift(acceptance_line):
    start = time.perf_counter()
    cert = _run("ricci-lift", "davis-SO3-on-S7", lambda_grid=[1.0, 0.5, 0.25, 0.125])[0]
    elapsed = time.perf_counter() - start
    lift = cert.find("lift")
    omega = [q for q in lift.quantities if q.key.startswith("omega1_ricci_min@")]
    conf = cert.find("conformal")
    points = conf.get("omega1_points").value + conf.get("complement_points").value
    control = _run("ricci-lift", "torus-T2-on-S3")[0]
    refused = (not control.passed) and control.find("hypotheses").get("hypothesis_violation").value == 1
    ok = (cert.passed and len(omega) == 4 and all(q.passed and q.value > 0 for q in omega)
          and lift.get("complement_ricci_min").value > 0 and points >= 8 and refused and elapsed < 1800)
    acceptance_line(8, "Ricci lift through the Davis quotient", ok,
                    f"omega1 min={min(q.value for q in omega):.2f} over {len(omega)} lambdas, "
                    f"{int(points)} points, torus refused={refused}, {elapsed:.0f}s")
    assert ok


def test_criterion_09_almost_nonnegative(acceptance_line):
    start = time.perf_counter()
    certs = _run("almost-nonneg", "torus-T2-on-S3")
    elapsed = time.perf_counter() - start
    eps_grid = suites.DEFAULTS["almost-nonneg"]["eps_grid"]
    search = [c.find("search") for c in certs if any(st.name == "search" for st in c.stages)]
    mins = [st.get("sec_min").value for st in search]
    trend = certs[-1].find("trend").get("chosen_lambda_nonincreasing")
    ok = (all(c.passed for c in certs) and len(mins) == len(eps_grid)
          and all(m >= -e for m, e in zip(mins, eps_grid)) and trend.passed
          and elapsed < 15 * 60 * len(eps_grid))
    acceptance_line(9, "almost nonnegative curvature on the torus quotient", ok,
                    f"sec_min={', '.join(f'{m:.3f}' for m in mins)} lambda nonincreasing={trend.passed} "
                    f"{elapsed:.0f}s")
    assert ok


def test_criterion_10_exotic_certificates(acceptance_line):
    start = time.perf_counter()
    O = algebra.octonions()
    der = len(algebra.derivation_algebra(O))
    rng = np.random.default_rng(10)
    phi = 0.0
    for _ in range(50):
        u, q = rng.standard_normal(8), O.random_unit(rng)
        a = np.concatenate(algebra.chart_transition(O, u, q))
        b = np.concatenate(algebra.transition_closed_form(O, u, q))
        phi = max(phi, float(np.max(np.abs(a - b))))
    split = lie.spin9_split()
    reports = []
    for k in range(5):
        x = O.random_unit(rng)
        t = float(rng.uniform(0.2, math.pi - 0.2))
        reports.append(op2.zero_plane_search(x=x, t=t, restarts=20, seed=k,
                                             frame=op2.q_horizontal_frame(x=x, t=t, split=lie.spin9_split(x))))
    zero_min = max(r.min_sec for r in reports)
    form = max(r.form_angle for r in reports)
    Z = op2.LiftData(rng.standard_normal(8), np.zeros(7))
    W = op2.LiftData(rng.standard_normal(8), rng.standard_normal(7))
    berger = op2.berger_family_check(Z, W, np.linspace(0.1, math.pi - 0.1, 9)).variation
    grid = op2.davis_hopf_grid(O, 1000, seed=10)
    best = min(reports, key=lambda r: r.min_sec)
    ricci = op2.quotient_ricci_certificate(O, best, grid, count=8, seed=10)
    elapsed = time.perf_counter() - start
    ok = (der == 14 and phi <= 1e-10 and zero_min <= 1e-8 and form <= 1e-3 and berger <= 1e-10
          and grid.count == 1000 and grid.alpha > 0 and len(ricci.samples) == 8 and ricci.beta_min > 0
          and ricci.passed and elapsed < 20 * 60 and split.dim == 36)
    acceptance_line(10, "octonionic certificates", ok,
                    f"Der={der} phi={phi:.1e} zero={zero_min:.1e} angle={form:.1e} berger={berger:.1e} "
                    f"alpha={grid.alpha:.3f} beta={ricci.beta_min:.3f} {elapsed:.0f}s")
    assert ok
