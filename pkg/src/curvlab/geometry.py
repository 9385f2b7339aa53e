"""Chart-based Riemannian geometry: connection, curvature, geodesics, Jacobi
fields, distance to submanifolds and the Hessian of that distance."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import jax
import jax.numpy as jnp
import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize

from . import jets
from .errors import (
    AmbiguousFootpointError,
    ConditioningError,
    DegeneratePlaneError,
    DomainError,
    InputError,
    IntegrationError,
)

COND_LIMIT = 1e12


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def cube(cls, dim, half_width):
        return cls(np.full(dim, -float(half_width)), np.full(dim, float(half_width)))

    def contains(self, x):
        x = np.asarray(x)
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))

    def margin(self, x):
        x = np.asarray(x)
        return float(np.min(np.concatenate([x - self.lo, self.hi - x])))


class MetricModel:
    """A coordinate chart together with a pointwise metric evaluator.

    ``metric_fn`` maps a coordinate point to the n x n Gram matrix.  When it is
    written with ``jax.numpy`` (``traceable=True``) all derivatives come from
    forward-mode autodiff; otherwise a Richardson finite-difference jet is used.
    ``point_distance`` is an optional closed-form Riemannian distance between two
    chart points, used by the closest-point search.
    """

    def __init__(
        self,
        dim: int,
        metric_fn: Callable,
        label: str = "",
        domain=None,
        differentiability_order: int = 4,
        traceable: bool = True,
        point_distance: Optional[Callable] = None,
        scale: float = 1.0,
    ):
        if dim < 1:
            raise InputError("dim must be positive")
        if differentiability_order < 4:
            raise InputError("differentiability_order must be at least 4")
        self.dim = int(dim)
        self.metric_fn = metric_fn
        self.label = label
        self.domain = domain if domain is not None else Box.cube(dim, 1e6)
        self.differentiability_order = differentiability_order
        self.traceable = traceable
        self.point_distance = point_distance
        self.scale = scale
        self._cache = {}

    def __repr__(self):
        return f"{type(self).__name__}({self.label!r}, dim={self.dim})"

    # -- evaluation -----------------------------------------------------
    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            return False
        if isinstance(self.domain, Box):
            return self.domain.contains(x)
        return bool(self.domain(x))

    def check_point(self, x):
        x = np.asarray(x, dtype=float)
        if not self.contains(x):
            raise DomainError(f"point {x} outside chart domain of {self.label}")
        return x

    def metric_at(self, x) -> np.ndarray:
        x = self.check_point(x)
        if self.traceable:
            return np.asarray(self._jitted("metric", lambda: jax.jit(self.metric_fn))(x))
        return np.asarray(self.metric_fn(x), dtype=float)

    def _jitted(self, key, build):
        fn = self._cache.get(key)
        if fn is None:
            fn = self._cache[key] = build()
        return fn

    def jet(self, x, method="auto"):
        """(g, dg, ddg) at x; derivative axes first."""
        x = self.check_point(x)
        if method == "auto":
            method = "autodiff" if self.traceable else "fd"
        if method == "autodiff":
            fn = self._jitted("jet", lambda: jets.autodiff_jet_fn(self.metric_fn))
            g, dg, ddg = (np.asarray(a) for a in fn(x))
        elif method == "fd":
            g, dg, ddg, _ = jets.fd_jet(self._raw_metric, x, scale=self.scale)
        else:
            raise InputError(f"unknown differentiation method {method!r}")
        _check_conditioning(g)
        return g, dg, ddg

    def _raw_metric(self, x):
        if self.traceable:
            return np.asarray(self._jitted("metric", lambda: jax.jit(self.metric_fn))(x))
        return np.asarray(self.metric_fn(x), dtype=float)

    def curvature(self, x, method="auto"):
        """(g, gamma, R) at x."""
        x = self.check_point(x)
        if method == "auto":
            method = "autodiff" if self.traceable else "fd"
        if method == "autodiff":
            fn = self._jitted("curv", lambda: jets.autodiff_curvature_fn(self.metric_fn))
            g, gamma, R = (np.asarray(a) for a in fn(x))
            _check_conditioning(g)
            return g, gamma, R
        g, dg, ddg = self.jet(x, method)
        gamma, _, _ = jets.christoffel_from_jet(np, g, dg)
        return g, gamma, jets.riemann_from_jet(np, g, dg, ddg)

    # -- traced helpers used by the integrators -------------------------
    def traced_curvature(self):
        if not self.traceable:
            raise InputError(f"{self.label} has no traceable metric")
        jet = jets._autodiff_jet(self.metric_fn)

        def curv(x):
            g, dg, ddg = jet(x)
            gamma, _, _ = jets.christoffel_from_jet(jnp, g, dg)
            return g, gamma, jets.riemann_from_jet(jnp, g, dg, ddg)

        return curv


def _check_conditioning(g):
    g = np.asarray(g)
    if not np.all(np.isfinite(g)):
        raise ConditioningError("metric has non-finite entries", float("inf"))
    cond = np.linalg.cond(g)
    if cond > COND_LIMIT:
        raise ConditioningError("metric matrix nearly singular", cond)


@dataclass(frozen=True)
class TangentVector:
    base_point: np.ndarray
    components: np.ndarray


def _comp(v):
    if isinstance(v, TangentVector):
        return np.asarray(v.components, dtype=float)
    return np.asarray(v, dtype=float)


def inner(g, u, v):
    return float(np.asarray(u) @ g @ np.asarray(v))


def norm(g, u):
    return float(np.sqrt(max(inner(g, u, u), 0.0)))


def gram_schmidt(g, vectors, tol=1e-12):
    """g-orthonormalise a list of vectors, dropping dependent ones."""
    out = []
    for v in vectors:
        w = np.array(v, dtype=float)
        for e in out:
            w = w - inner(g, e, w) * e
        for e in out:
            w = w - inner(g, e, w) * e
        nrm = norm(g, w)
        if nrm > tol * max(1.0, norm(g, v)):
            out.append(w / nrm)
    return out


def orthonormal_complement(g, vectors, tol=1e-10):
    """g-orthonormal basis of the complement of span(vectors)."""
    n = g.shape[0]
    base = gram_schmidt(g, vectors, tol)
    return gram_schmidt(g, list(base) + list(np.eye(n)), tol)[len(base):]


# ---------------------------------------------------------------- curvature
def christoffel(model: MetricModel, x, method="auto") -> np.ndarray:
    """Gamma[k, i, j] of the Levi-Civita connection."""
    g, gamma, _ = model.curvature(x, method)
    return gamma


def riemann(model: MetricModel, x, method="auto") -> np.ndarray:
    """R[i, j, k, l] with curv(X, Y) = R(X, Y, Y, X)."""
    return model.curvature(x, method)[2]


def curv(R, u, v):
    return float(np.einsum("ijkl,i,j,k,l->", R, u, v, v, u))


def sectional(model: MetricModel, x, u, v, method="auto") -> float:
    g, _, R = model.curvature(x, method)
    u, v = _comp(u), _comp(v)
    return sectional_from(g, R, u, v)


def sectional_from(g, R, u, v):
    uu, vv, uv = inner(g, u, u), inner(g, v, v), inner(g, u, v)
    area = uu * vv - uv * uv
    if area <= 1e-12 * max(uu * vv, 1e-300):
        raise DegeneratePlaneError("vectors do not span a plane")
    return curv(R, u, v) / area


def ricci_from(g, R):
    ginv = np.linalg.inv(g)
    return np.einsum("il,ijkl->jk", ginv, R)


def ricci(model: MetricModel, x, method="auto") -> np.ndarray:
    g, _, R = model.curvature(x, method)
    ric = ricci_from(g, R)
    return 0.5 * (ric + ric.T)


def ricci_eigenvalues(model: MetricModel, x, method="auto") -> np.ndarray:
    """Eigenvalues of the Ricci endomorphism (Ric relative to g)."""
    g, _, R = model.curvature(x, method)
    return ricci_eigs_from(g, R)


def ricci_eigs_from(g, R):
    from scipy.linalg import eigh

    ric = ricci_from(g, R)
    return eigh(0.5 * (ric + ric.T), g, eigvals_only=True)


def curvature_operator_min(g, R):
    """Minimum sectional curvature when every 2-vector is decomposable (dim 3)."""
    n = g.shape[0]
    if n != 3:
        raise InputError("exact plane minimum only available in dimension 3")
    pairs = [(0, 1), (0, 2), (1, 2)]
    op = np.empty((3, 3))
    met = np.empty((3, 3))
    for a, (i, j) in enumerate(pairs):
        for b, (k, l) in enumerate(pairs):
            op[a, b] = R[i, j, l, k]
            met[a, b] = g[i, k] * g[j, l] - g[i, l] * g[j, k]
    from scipy.linalg import eigh

    vals, vecs = eigh(0.5 * (op + op.T), met)
    return float(vals[0]), vecs[:, 0]


def min_sectional(g, R, subspace=None, restarts=12, rng=None):
    """Smallest sectional curvature over planes meeting ``subspace``.

    ``subspace`` is an n x r array; planes are span{V, Z} with V in it.
    Exact in dimension 3 when every plane qualifies; otherwise multistart
    local minimisation over pairs of coefficient vectors.
    """
    n = g.shape[0]
    if n == 2:
        e = np.eye(2)
        return sectional_from(g, R, e[0], e[1])
    if n == 3 and (subspace is None or np.linalg.matrix_rank(subspace) >= 2):
        return curvature_operator_min(g, R)[0]
    rng = np.random.default_rng(0) if rng is None else rng
    A = np.eye(n) if subspace is None else np.asarray(subspace, dtype=float)
    r = A.shape[1]

    def obj(p):
        v = A @ p[:r]
        z = p[r:]
        uu, zz, uz = v @ g @ v, z @ g @ z, v @ g @ z
        area = uu * zz - uz * uz
        if area < 1e-14:
            return 1e6
        return curv(R, v, z) / area

    best = np.inf
    for _ in range(restarts):
        p0 = rng.standard_normal(r + n)
        res = minimize(obj, p0, method="BFGS", options={"gtol": 1e-10})
        best = min(best, float(res.fun))
    return best


# ---------------------------------------------------------------- geodesics
@dataclass
class Geodesic:
    ts: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    T: float
    exit_param: Optional[float]
    speed_drift: float
    dense: Callable = field(repr=False, default=None)


@dataclass
class JacobiSolution:
    geodesic: Geodesic
    J: np.ndarray          # (m, N, n)
    Jp: np.ndarray         # covariant derivative, (m, N, n)
    initial_data: tuple
    residual: float


def _flow_rhs(model: MetricModel, m: int):
    key = ("flow", m)

    def build():
        curvf = model.traced_curvature()
        n = model.dim

        def rhs(y):
            x, v = y[:n], y[n:2 * n]
            J = y[2 * n:2 * n + m * n].reshape(m, n)
            DJ = y[2 * n + m * n:].reshape(m, n)
            g, gamma, R = curvf(x)
            dv = -jnp.einsum("kij,i,j->k", gamma, v, v)
            if m:
                rup = jnp.einsum("ijkl,lm->ijkm", R, jnp.linalg.inv(g))
                rjvv = jnp.einsum("ijkm,ai,j,k->am", rup, J, v, v)
                dJ = DJ - jnp.einsum("kij,i,aj->ak", gamma, v, J)
                dDJ = -rjvv - jnp.einsum("kij,i,aj->ak", gamma, v, DJ)
                return jnp.concatenate([v, dv, dJ.ravel(), dDJ.ravel()])
            return jnp.concatenate([v, dv])

        return jax.jit(rhs)

    return model._jitted(key, build)


def _integrate(model, y0, T, m, samples, rtol):
    if not model.traceable:
        raise InputError("geodesic integration requires a traceable metric")
    rhs = _flow_rhs(model, m)
    n = model.dim
    events = None
    if isinstance(model.domain, Box):
        def leave(t, y):
            return model.domain.margin(y[:n])
        leave.terminal = True
        events = [leave]
    sol = solve_ivp(
        lambda t, y: np.asarray(rhs(y)),
        (0.0, T),
        y0,
        method="DOP853",
        rtol=rtol,
        atol=rtol * 1e-3,
        dense_output=True,
        events=events,
    )
    if sol.status == -1:
        raise IntegrationError("integration failed", {"message": sol.message, "nfev": sol.nfev})
    t_end = float(sol.t[-1])
    exit_param = None if sol.status == 0 else t_end
    ts = np.asarray(samples if samples is not None else np.linspace(0.0, T, 33), dtype=float)
    ts = ts[ts <= t_end + 1e-15]
    Y = sol.sol(ts).T if len(ts) else np.empty((0, y0.size))
    return sol, ts, Y, exit_param


def geodesic(model: MetricModel, x, v, T, samples=None, rtol=1e-9) -> Geodesic:
    """Unit-speed geodesic from x with initial velocity v over arc length T."""
    x = model.check_point(x)
    v = _comp(v)
    g = model.metric_at(x)
    if abs(norm(g, v) - 1.0) > 1e-10:
        raise InputError("initial velocity must be unit length")
    sol, ts, Y, exit_param = _integrate(model, np.concatenate([x, v]), float(T), 0, samples, rtol)
    n = model.dim
    return _make_geodesic(model, sol, ts, Y[:, :n], Y[:, n:2 * n], T, exit_param)


def _make_geodesic(model, sol, ts, P, V, T, exit_param):
    n = model.dim
    drift = 0.0
    for p, w in zip(P, V):
        drift = max(drift, abs(norm(model.metric_at(p), w) - 1.0))
    dense = (lambda t, s=sol: s.sol(t)[: 2 * n])
    return Geodesic(ts, P, V, float(T), exit_param, drift, dense)


def exp_map(model: MetricModel, x, v, rtol=1e-10):
    """exp_x(v) by integrating the unit-speed geodesic for length |v|."""
    x = model.check_point(x)
    v = _comp(v)
    length = norm(model.metric_at(x), v)
    if length == 0.0:
        return x.copy()
    geo = geodesic(model, x, v / length, length, samples=[length], rtol=rtol)
    if geo.exit_param is not None:
        raise DomainError("geodesic left the chart")
    return geo.points[-1]


def log_map(model: MetricModel, x, y, rtol=1e-10):
    """Initial velocity v with exp_x(v) = y, by Newton shooting."""
    from scipy.optimize import root

    x, y = model.check_point(x), model.check_point(y)
    sol = root(lambda v: exp_map(model, x, v, rtol) - y, y - x, method="hybr", options={"xtol": 1e-12})
    if not sol.success and np.max(np.abs(exp_map(model, x, sol.x) - y)) > 1e-8:
        raise IntegrationError("shooting did not converge", {"message": sol.message})
    return sol.x


def start_of_geodesic(x, v):
    """A Geodesic holding only initial data, for callers that integrate Jacobi fields directly."""
    x, v = np.asarray(x, float), np.asarray(v, float)
    return Geodesic(np.array([0.0]), x[None], v[None], 0.0, None, 0.0)


def jacobi_transport(model: MetricModel, geo: Geodesic, J0, J0p, samples=None, rtol=1e-9) -> JacobiSolution:
    """Solve J'' = -R(J, g')g' along ``geo`` for one or several initial data.

    Primes are covariant derivatives along the geodesic.
    """
    J0 = np.atleast_2d(np.asarray(J0, dtype=float))
    J0p = np.atleast_2d(np.asarray(J0p, dtype=float))
    if J0.shape != J0p.shape:
        raise InputError("J0 and J0p must have matching shapes")
    m, n = J0.shape
    x0, v0 = geo.points[0], geo.velocities[0]
    ts = geo.ts if samples is None else np.asarray(samples, dtype=float)
    y0 = np.concatenate([x0, v0, J0.ravel(), J0p.ravel()])
    sol, ts, Y, exit_param = _integrate(model, y0, float(ts[-1]), m, ts, rtol)
    if exit_param is not None:
        raise IntegrationError("geodesic left the chart during Jacobi transport", {"exit": exit_param})
    P, V = Y[:, :n], Y[:, n:2 * n]
    J = Y[:, 2 * n:2 * n + m * n].reshape(len(ts), m, n).transpose(1, 0, 2)
    Jp = Y[:, 2 * n + m * n:].reshape(len(ts), m, n).transpose(1, 0, 2)
    geo2 = _make_geodesic(model, sol, ts, P, V, ts[-1], None)
    residual = _jacobi_residual(model, sol, ts, m)
    return JacobiSolution(geo2, J, Jp, (J0, J0p), residual)


def _jacobi_residual(model, sol, ts, m):
    """|D/dt J' + R(J, g')g'| checked with differences of the dense output."""
    n = model.dim
    worst = 0.0
    h = 1e-4
    t_hi = ts[-1]
    for t in ts[1:-1:max(1, len(ts) // 6)]:
        if t - h < 0 or t + h > t_hi:
            continue
        y = sol.sol(t)
        dy = (sol.sol(t + h) - sol.sol(t - h)) / (2 * h)
        x, v = y[:n], y[n:2 * n]
        J = y[2 * n:2 * n + m * n].reshape(m, n)
        DJ = y[2 * n + m * n:].reshape(m, n)
        dDJ = dy[2 * n + m * n:].reshape(m, n)
        g, gamma, R = model.curvature(x)
        ginv = np.linalg.inv(g)
        cov = dDJ + np.einsum("kij,i,aj->ak", gamma, v, DJ)
        rjvv = np.einsum("ijkl,lm,ai,j,k->am", R, ginv, J, v, v)
        worst = max(worst, float(np.max(np.abs(cov + rjvv))))
    return worst


# ---------------------------------------------------------------- submanifolds
@dataclass
class SubmanifoldSpec:
    """Embedded submanifold given by a parametrization over a box.

    ``parametrization`` must be jax-traceable.  ``distance_fn`` is an optional
    closed form x -> dist(S, x) (also traceable); ``periodic`` flags parameter
    axes that wrap around.  ``footpoint_fn`` optionally maps x to the parameter
    of its closest point, replacing the multistart search by a local polish.
    """

    parametrization: Callable
    param_lo: np.ndarray
    param_hi: np.ndarray
    codim: int
    normal_frame: Optional[Callable] = None
    distance_fn: Optional[Callable] = None
    periodic: Optional[Sequence[bool]] = None
    label: str = ""
    footpoint_fn: Optional[Callable] = None

    @property
    def dim(self):
        return int(np.asarray(self.param_lo).size)

    @classmethod
    def point(cls, p, n, label="point", distance_fn=None):
        p = jnp.asarray(p, dtype=float)
        return cls(lambda th: p, np.zeros(0), np.zeros(0), n, distance_fn=distance_fn, label=label)


@dataclass
class DistanceResult:
    t: float
    footpoint: np.ndarray
    foot_param: np.ndarray
    X: TangentVector
    normal: TangentVector     # unit initial velocity at the footpoint


def _point_distance(model):
    if model.point_distance is None:
        return None
    key = "pdist"
    return model._jitted(key, lambda: jax.jit(model.point_distance))


def dist_to_submanifold(model: MetricModel, S: SubmanifoldSpec, x, radius=None, starts_per_axis=8, max_starts=512, seed=0) -> DistanceResult:
    """Distance to S, its footpoint and the unit gradient X of dist(S, .)."""
    x = model.check_point(x)
    pd = _point_distance(model)
    if pd is None:
        def pdist(a, b):
            return norm(model.metric_at(a), log_map(model, a, b))
    else:
        def pdist(a, b):
            return float(pd(jnp.asarray(a), jnp.asarray(b)))

    k = S.dim
    par = jax.jit(S.parametrization)
    if pd is None and S.distance_fn is not None and (k == 0 or S.footpoint_fn is not None):
        return _distance_from_closed_form(model, S, par, x, radius)
    if k == 0:
        theta = np.zeros(0)
        foot = np.asarray(par(jnp.zeros(0)))
        t = pdist(x, foot)
    elif S.footpoint_fn is not None:
        theta = np.asarray(S.footpoint_fn(x), dtype=float)
        foot = np.asarray(par(jnp.asarray(theta)))
        t = pdist(x, foot)
    else:
        theta, t = _closest_parameter(model, S, par, pd, pdist, x, radius, starts_per_axis, max_starts, seed)
        foot = np.asarray(par(jnp.asarray(theta)))
    if radius is not None and t > radius:
        raise DomainError(f"distance {t:.3e} exceeds tube radius {radius:.3e}")
    if t < 1e-14:
        raise DomainError("point lies on the submanifold")
    X, nu = _radial_directions(model, pd, x, foot, t)
    return DistanceResult(float(t), foot, np.asarray(theta), TangentVector(x, X), TangentVector(foot, nu))


def _distance_from_closed_form(model, S, par, x, radius):
    """Distance data when only dist(S, .) is known in closed form.

    X is the metric gradient of the distance; the footpoint velocity comes from
    following -X back to S, which also checks the footpoint map.
    """
    dfn = model._jitted(("sdist", id(S.distance_fn)),
                        lambda: jax.jit(jax.value_and_grad(S.distance_fn)))
    t, dt = dfn(jnp.asarray(x))
    t = float(t)
    if radius is not None and t > radius:
        raise DomainError(f"distance {t:.3e} exceeds tube radius {radius:.3e}")
    if t < 1e-14:
        raise DomainError("point lies on the submanifold")
    g = model.metric_at(x)
    X = np.linalg.solve(g, np.asarray(dt))
    X = X / norm(g, X)
    theta = np.zeros(0) if S.dim == 0 else np.asarray(S.footpoint_fn(x), dtype=float)
    foot = np.asarray(par(jnp.asarray(theta)))
    back = geodesic(model, x, -X, t, samples=[t])
    gap = float(np.max(np.abs(back.points[-1] - foot)))
    if gap > 1e-6 * max(1.0, float(np.max(np.abs(foot)))):
        raise IntegrationError("closed-form distance and footpoint disagree", {"gap": gap})
    nu = -back.velocities[-1]
    nu = nu / norm(model.metric_at(foot), nu)
    return DistanceResult(t, foot, theta, TangentVector(x, X), TangentVector(foot, nu))


def _closest_parameter(model, S, par, pd, pdist, x, radius, per_axis, max_starts, seed):
    k = S.dim
    lo, hi = np.asarray(S.param_lo, float), np.asarray(S.param_hi, float)
    periodic = np.zeros(k, bool) if S.periodic is None else np.asarray(S.periodic, bool)
    axes = [np.linspace(lo[i], hi[i], per_axis, endpoint=not periodic[i]) for i in range(k)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, k)
    if len(grid) > max_starts:
        rng = np.random.default_rng(seed)
        grid = grid[rng.choice(len(grid), max_starts, replace=False)]

    if pd is not None:
        fun = jax.jit(lambda th: model.point_distance(jnp.asarray(x), S.parametrization(th)))
        vals = np.asarray(jax.vmap(fun)(jnp.asarray(grid)))
        grad = jax.jit(jax.grad(fun))

        def f(th):
            return float(fun(jnp.asarray(th)))

        def fg(th):
            return np.asarray(grad(jnp.asarray(th)))
    else:
        def f(th):
            return pdist(x, np.asarray(par(jnp.asarray(th))))

        fg = None
        vals = np.array([f(th) for th in grid])

    order = np.argsort(vals)
    bounds = [(None, None) if periodic[i] else (lo[i], hi[i]) for i in range(k)]
    minima = []
    for idx in order[: min(6, len(order))]:
        res = minimize(f, grid[idx], jac=fg, method="L-BFGS-B", bounds=bounds,
                       options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 500})
        minima.append((float(res.fun), np.asarray(res.x)))
    minima.sort(key=lambda m: m[0])
    t_best, th_best = minima[0]
    scale = radius if radius is not None else max(t_best, 1e-12)
    p_best = np.asarray(par(jnp.asarray(th_best)))
    for t_other, th_other in minima[1:]:
        if abs(t_other - t_best) <= 1e-6 * scale:
            p_other = np.asarray(par(jnp.asarray(th_other)))
            if pdist(p_other, p_best) > 1e-4:
                raise AmbiguousFootpointError(
                    f"two footpoints at distance {t_best:.6g}: outside the valid tube")
    return th_best, t_best


def _radial_directions(model, pd, x, foot, t):
    if pd is not None:
        gx = np.asarray(jax.grad(lambda a: model.point_distance(a, jnp.asarray(foot)))(jnp.asarray(x)))
        gq = np.asarray(jax.grad(lambda b: model.point_distance(jnp.asarray(x), b))(jnp.asarray(foot)))
        X = np.linalg.solve(model.metric_at(x), gx)
        nu = -np.linalg.solve(model.metric_at(foot), gq)
    else:
        X = -log_map(model, x, foot) / t
        nu = log_map(model, foot, x) / t
    X = X / norm(model.metric_at(x), X)
    nu = nu / norm(model.metric_at(foot), nu)
    return X, nu


@dataclass
class TubeSplitting:
    X: TangentVector
    V_basis: list
    H_basis: list
    Hbar_basis: list
    footpoint: np.ndarray
    t: float
    V_prime: list = field(default_factory=list)
    H_prime: list = field(default_factory=list)
    metric: np.ndarray = None
    jacobi: Optional[JacobiSolution] = None


def submanifold_tangent(S: SubmanifoldSpec, theta):
    if S.dim == 0:
        return None
    return np.asarray(jax.jacfwd(S.parametrization)(jnp.asarray(theta, dtype=float)))


def tube_initial_data(model: MetricModel, S: SubmanifoldSpec, dres: DistanceResult):
    """Initial data of the Jacobi fields spanning V (J(0)=0) and H (J(0) in TS)."""
    q = dres.footpoint
    nu = dres.normal.components
    gq = model.metric_at(q)
    n = model.dim
    k = S.dim
    if k == 0:
        tangent = []
    else:
        T = submanifold_tangent(S, dres.foot_param)
        tangent = gram_schmidt(gq, list(T.T))
    if S.normal_frame is not None:
        normals = [np.asarray(v, dtype=float) for v in S.normal_frame(dres.foot_param)]
        fibre = gram_schmidt(gq, [nu] + normals)[1:]
    else:
        fibre = orthonormal_complement(gq, tangent + [nu])
    if len(fibre) != S.codim - 1:
        raise InputError(f"normal space dimension {len(fibre) + 1} differs from codim {S.codim}")
    V0 = [np.zeros(n) for _ in fibre]
    V0p = fibre
    H0, H0p = [], []
    if k:
        th = jnp.asarray(dres.foot_param, dtype=float)
        metric_fn = model.metric_fn
        nu_j = jnp.asarray(nu)

        def unit_normal(theta):
            p = S.parametrization(theta)
            g = metric_fn(p)
            Tm = jax.jacfwd(S.parametrization)(theta)
            P = jnp.eye(n) - Tm @ jnp.linalg.solve(Tm.T @ g @ Tm, Tm.T @ g)
            w = P @ nu_j
            return w / jnp.sqrt(w @ g @ w)

        dN = np.asarray(jax.jacfwd(unit_normal)(th))        # n x k
        Tm = submanifold_tangent(S, dres.foot_param)
        _, gamma, _ = model.curvature(q)
        proj = Tm @ np.linalg.solve(Tm.T @ gq @ Tm, Tm.T @ gq)
        for w in tangent:
            c = np.linalg.lstsq(Tm, w, rcond=None)[0]
            cov = dN @ c + np.einsum("kij,i,j->k", gamma, w, nu)
            H0.append(w)
            H0p.append(proj @ cov)
    return V0, V0p, H0, H0p


def tube_splitting(model: MetricModel, S: SubmanifoldSpec, x, radius=None, dres=None) -> TubeSplitting:
    dres = dres or dist_to_submanifold(model, S, x, radius)
    V0, V0p, H0, H0p = tube_initial_data(model, S, dres)
    q, nu, t = dres.footpoint, dres.normal.components, dres.t
    n = model.dim
    J0 = np.array(V0 + H0).reshape(-1, n)
    J0p = np.array(V0p + H0p).reshape(-1, n)
    m = len(J0)
    if m:
        sol = jacobi_transport(model, start_of_geodesic(q, nu), J0, J0p, samples=np.linspace(0.0, t, 9))
        gap = float(np.max(np.abs(sol.geodesic.points[-1] - dres.X.base_point)))
        if gap > 1e-6 * max(1.0, float(np.max(np.abs(q)))):
            raise IntegrationError("radial geodesic missed the sample point", {"gap": gap})
        J, Jp = sol.J[:, -1], sol.Jp[:, -1]
    else:
        sol = None
        J, Jp = np.zeros((0, n)), np.zeros((0, n))
    nv = len(V0)
    gx = model.metric_at(dres.X.base_point)
    Xc = dres.X.components
    V_basis, H_basis = list(J[:nv]), list(J[nv:])
    hbar = orthonormal_complement(gx, [Xc] + V_basis)
    xb = dres.X.base_point
    return TubeSplitting(
        X=dres.X,
        V_basis=[TangentVector(xb, v) for v in V_basis],
        H_basis=[TangentVector(xb, h) for h in H_basis],
        Hbar_basis=[TangentVector(xb, h) for h in hbar],
        footpoint=q,
        t=t,
        V_prime=list(Jp[:nv]),
        H_prime=list(Jp[nv:]),
        metric=gx,
        jacobi=sol,
    )


@dataclass
class HessResult:
    form: np.ndarray
    method: str
    tol: float
    asymmetry: float = 0.0
    X: Optional[np.ndarray] = None
    consistent: Optional[bool] = None
    disagreement: Optional[float] = None


def hess_distance(model: MetricModel, S: SubmanifoldSpec, x, method="jacobi", radius=None, split=None) -> HessResult:
    """Covariant Hessian of dist(S, .) at x as a coordinate bilinear form."""
    if method == "both":
        hj = hess_distance(model, S, x, "jacobi", radius, split)
        hd = hess_distance(model, S, x, "direct", radius)
        gap = float(np.max(np.abs(hj.form - hd.form)))
        tol = hj.tol + hd.tol
        hj.consistent = gap <= 10 * tol
        hj.disagreement = gap
        hj.method = "both"
        return hj
    if method == "jacobi":
        ts = split or tube_splitting(model, S, x, radius)
        g = ts.metric
        cols = [ts.X.components] + [v.components for v in ts.V_basis] + [h.components for h in ts.H_basis]
        primes = [np.zeros(model.dim)] + ts.V_prime + ts.H_prime
        B = np.array(cols).T
        M = np.array([[p @ g @ c for c in cols] for p in primes])
        asym = float(np.max(np.abs(M - M.T)))
        M = 0.5 * (M + M.T)
        Binv = np.linalg.inv(B)
        H = Binv.T @ M @ Binv
        tol = max(asym, 1e-8 * max(1.0, float(np.max(np.abs(H)))))
        return HessResult(H, "jacobi", tol, asym, ts.X.components)
    if method == "direct":
        x = model.check_point(x)
        if S.distance_fn is not None:
            dfun = jax.jit(S.distance_fn)

            def phi(y):
                return float(dfun(jnp.asarray(y)))
            h = 1e-3 * model.scale
        else:
            def phi(y):
                return dist_to_submanifold(model, S, y, radius).t
            h = 1e-2 * model.scale
        grad, hess, gap = _fd_scalar(phi, x, h)
        gamma = christoffel(model, x)
        H = hess - np.einsum("kij,k->ij", gamma, grad)
        g = model.metric_at(x)
        X = np.linalg.solve(g, grad)
        X = X / norm(g, X)
        return HessResult(0.5 * (H + H.T), "direct", max(gap, 1e-9), 0.0, X)
    raise InputError(f"unknown method {method!r}")


def _fd_scalar(phi, x, h):
    """Gradient and Hessian of a scalar by Richardson-extrapolated central differences."""
    n = x.size
    eye = np.eye(n)
    f0 = phi(x)

    def at(hh):
        gr = np.empty(n)
        he = np.empty((n, n))
        for a in range(n):
            fp, fm = phi(x + hh * eye[a]), phi(x - hh * eye[a])
            gr[a] = (fp - fm) / (2 * hh)
            he[a, a] = (fp - 2 * f0 + fm) / (hh * hh)
            for b in range(a + 1, n):
                pp = phi(x + hh * (eye[a] + eye[b]))
                pm = phi(x + hh * (eye[a] - eye[b]))
                mp = phi(x - hh * (eye[a] - eye[b]))
                mm = phi(x - hh * (eye[a] + eye[b]))
                he[a, b] = he[b, a] = (pp - pm - mp + mm) / (4 * hh * hh)
        return gr, he

    g1, h1 = at(h)
    g2, h2 = at(h / 2)
    grad = (4 * g2 - g1) / 3
    hess = (4 * h2 - h1) / 3
    gap = max(float(np.max(np.abs(g2 - g1))), float(np.max(np.abs(h2 - h1)))) / 3
    return grad, hess, gap


def curvature_symmetry_residuals(R):
    """Largest violations of the algebraic identities of a (0,4) curvature tensor."""
    R = np.asarray(R)
    scale = max(1.0, float(np.max(np.abs(R))))
    bianchi = R + np.einsum("jkil->ijkl", R) + np.einsum("kijl->ijkl", R)
    return {
        "bianchi": float(np.max(np.abs(bianchi))) / scale,
        "skew_first": float(np.max(np.abs(R + np.swapaxes(R, 0, 1)))) / scale,
        "skew_last": float(np.max(np.abs(R + np.swapaxes(R, 2, 3)))) / scale,
        "pair": float(np.max(np.abs(R - np.einsum("klij->ijkl", R)))) / scale,
    }
