"""Cheeger deformations of G-invariant metrics.

Everything is evaluated at points (e, x) of G x M: the deformed metric g_l is
the submersion metric of (G x M, l^2 g_bi + g) under (p, m) -> p m, which at
(e, x) reduces to the linear algebra

    g_l = g - g K (l^2 B + K^T g K)^{-1} K^T g,

where the columns of K are the action fields k_M(x) and B is the Gram matrix
of g_bi on the chosen Lie algebra basis.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import jax
import jax.numpy as jnp
import numpy as np
from scipy.linalg import eigh, null_space, subspace_angles

from . import geometry as G
from .errors import ConfigurationError, InputError, ParameterError
from .geometry import MetricModel, SubmanifoldSpec
from .submersion import SubmersionSpec, a_apply, a_tensor

RANK_TOL = 1e-8


# ---------------------------------------------------------------- Lie algebra data
def structure_constants_from(mats):
    """C[a, b, c] with [A_a, A_b] = sum_c C[a, b, c] A_c for a basis of matrices."""
    mats = [np.asarray(m, dtype=float) for m in mats]
    d = len(mats)
    if d == 0:
        return np.zeros((0, 0, 0))
    flat = np.array([m.ravel() for m in mats]).T
    C = np.zeros((d, d, d))
    for a in range(d):
        for b in range(d):
            br = mats[a] @ mats[b] - mats[b] @ mats[a]
            coef, *_ = np.linalg.lstsq(flat, br.ravel(), rcond=None)
            if np.max(np.abs(flat @ coef - br.ravel())) > 1e-10:
                raise InputError("matrix basis is not closed under commutator")
            C[a, b] = coef
    return C


def bracket(C, X, Y):
    return np.einsum("abc,a,b->c", C, X, Y)


def bi_invariant_curvature(C, B, scale=1.0):
    """R[a,b,c,d] = -1/4 s B([X_a,X_b],[X_c,X_d]) for the metric s * g_bi."""
    return -0.25 * scale * np.einsum("abe,cdf,ef->abcd", C, C, B)


@dataclass
class StratumDecl:
    """A singular stratum of a catalog action."""

    label: str
    S: SubmanifoldSpec
    isotropy: str
    level: int
    compact: bool = True
    normal_inj: float = math.pi
    lower: Optional[str] = None       # label of the stratum bounding a non-compact one
    probe: Optional[Sequence[float]] = None   # parameter of a generic point, for tube diagnostics


class GroupActionModel:
    """Infinitesimal data of an isometric action of a compact group on a chart.

    ``killing_fn(x)`` returns the n x d matrix whose columns are the action
    fields k_M(x) of the basis; ``act_fn(a, x)`` applies exp(a) (a in
    exponential coordinates) to a chart point.  Both must be jax-traceable.
    """

    def __init__(self, lie_dim, structure_constants, bi_gram, killing_fn, act_fn=None, label="",
                 declared_strata: Sequence[StratumDecl] = (), pi1_finite: Optional[bool] = None,
                 principal_isotropy_dim: int = 0, generators=None):
        self.lie_dim = int(lie_dim)
        self.C = np.asarray(structure_constants, dtype=float).reshape(self.lie_dim, self.lie_dim, self.lie_dim)
        self.B = np.asarray(bi_gram, dtype=float).reshape(self.lie_dim, self.lie_dim)
        self.killing_fn = killing_fn
        self.act_fn = act_fn
        self.label = label
        self.declared_strata = list(declared_strata)
        self.pi1_finite = pi1_finite
        self.principal_isotropy_dim = principal_isotropy_dim
        self.generators = generators
        self._cache = {}
        if self.lie_dim:
            if np.max(np.abs(self.B - self.B.T)) > 1e-12 or np.min(np.linalg.eigvalsh(self.B)) <= 0:
                raise InputError("bi-invariant Gram matrix must be symmetric positive definite")
            if self.ad_invariance_residual() > 1e-10:
                raise InputError("Gram matrix is not ad-invariant")

    def __repr__(self):
        return f"GroupActionModel({self.label!r}, dim={self.lie_dim})"

    def ad_invariance_residual(self):
        """max |B([a,b],c) + B(b,[a,c])| over basis triples."""
        if self.lie_dim == 0:
            return 0.0
        # B([e_a,e_b],e_c) = C[a,b,e] B[e,c]
        t1 = np.einsum("abe,ec->abc", self.C, self.B)
        t2 = np.einsum("ace,be->abc", self.C, self.B)
        return float(np.max(np.abs(t1 + t2)))

    def killing(self, x) -> np.ndarray:
        if self.lie_dim == 0:
            return np.zeros((np.asarray(x).size, 0))
        fn = self._cache.get("K")
        if fn is None:
            fn = self._cache["K"] = jax.jit(self.killing_fn)
        return np.asarray(fn(jnp.asarray(x, dtype=float)))

    def act(self, a, x):
        if self.act_fn is None:
            raise ConfigurationError(f"{self.label} has no group action evaluator")
        fn = self._cache.get("act")
        if fn is None:
            fn = self._cache["act"] = jax.jit(self.act_fn)
        return np.asarray(fn(jnp.asarray(a, dtype=float), jnp.asarray(x, dtype=float)))

    def random_element(self, rng, size=math.pi):
        return rng.uniform(-size, size, self.lie_dim)

    def bracket(self, X, Y):
        return bracket(self.C, X, Y)

    def stratum(self, label) -> StratumDecl:
        for s in self.declared_strata:
            if s.label == label:
                return s
        raise ConfigurationError(f"{self.label} declares no stratum {label!r}")

    def killing_identity_residual(self, base: MetricModel, x):
        """max over basis fields of |sym nabla k^flat| (zero for isometric actions)."""
        x = base.check_point(x)
        if self.lie_dim == 0:
            return 0.0
        K = self.killing(x)
        dK = np.asarray(jax.jacfwd(self.killing_fn)(jnp.asarray(x)))   # (n, d, n): d_b K[i, a]
        g, gamma, _ = base.curvature(x)
        worst = 0.0
        for a in range(self.lie_dim):
            cov = dK[:, a, :] + np.einsum("ibj,j->ib", gamma, K[:, a])   # (nabla_b k)^i
            low = g @ cov                                                # nabla_b k_i
            worst = max(worst, float(np.max(np.abs(low + low.T))))
        return worst


# ---------------------------------------------------------------- isotropy and kappa
@dataclass
class IsotropySplit:
    g_x: np.ndarray          # d x r, columns span the isotropy algebra
    m_x: np.ndarray          # d x (d - r), B-orthonormal columns
    singular_values: np.ndarray
    warning: Optional[str] = None

    @property
    def isotropy_dim(self):
        return self.g_x.shape[1]


def _b_frame(B):
    """W with W^T B W = I."""
    L = np.linalg.cholesky(B)
    return np.linalg.inv(L).T


def isotropy_split(action: GroupActionModel, base: MetricModel, x) -> IsotropySplit:
    d = action.lie_dim
    if d == 0:
        return IsotropySplit(np.zeros((0, 0)), np.zeros((0, 0)), np.zeros(0))
    x = base.check_point(x)
    g = base.metric_at(x)
    K = action.killing(x)
    W = _b_frame(action.B)
    Lg = np.linalg.cholesky(g)
    M = Lg.T @ K @ W
    _, s, Vt = np.linalg.svd(M, full_matrices=True)
    svals = np.zeros(d)
    svals[: len(s)] = s
    top = max(float(svals.max()), 1e-300)
    null = svals < RANK_TOL * top
    warning = None
    close = (svals > 0.1 * RANK_TOL * top) & (svals < 10 * RANK_TOL * top)
    if np.any(close):
        warning = f"singular value within 10x of the rank threshold at {np.asarray(x)}"
        warnings.warn(warning, RuntimeWarning, stacklevel=2)
    V = Vt.T
    return IsotropySplit(W @ V[:, null], W @ V[:, ~null], svals, warning)


@dataclass
class KappaResult:
    kappa: np.ndarray
    residual: float
    isotropy_dim: int
    m_component_gap: float = 0.0


def kappa(action: GroupActionModel, base: MetricModel, x, v, split: IsotropySplit = None) -> KappaResult:
    """The Lie algebra vector with g_bi(kappa, k) = g(v, k_M(x)) for every k, taken in m_x."""
    if action.lie_dim == 0:
        return KappaResult(np.zeros(0), 0.0, 0)
    x = base.check_point(x)
    v = G._comp(v)
    g = base.metric_at(x)
    K = action.killing(x)
    rhs = K.T @ g @ v
    split = split or isotropy_split(action, base, x)
    Mx = split.m_x
    # solve inside m_x: kappa = Mx c with Mx^T B Mx = I
    c = Mx.T @ rhs
    kap = Mx @ c
    full = np.linalg.solve(action.B, rhs)
    residual = float(np.max(np.abs(action.B @ kap - rhs)))
    return KappaResult(kap, residual, split.isotropy_dim, float(np.max(np.abs(full - kap))))


def kappa_matrix(action: GroupActionModel, g, K):
    """Linear map v -> kappa_v as a d x n matrix (valid wherever B is definite)."""
    return np.linalg.solve(action.B, K.T @ g)


# ---------------------------------------------------------------- deformed metric
def cheeger_metric_fn(action: GroupActionModel, metric_fn, l):
    B = jnp.asarray(action.B)
    kf = action.killing_fn
    l2 = float(l) ** 2

    def metric(x):
        g = metric_fn(x)
        if action.lie_dim == 0:
            return g
        K = kf(x)
        gK = g @ K
        out = g - gK @ jnp.linalg.solve(l2 * B + K.T @ gK, gK.T)
        return 0.5 * (out + out.T)

    return metric


class CheegerMetricModel(MetricModel):
    """(M, g_l) evaluated pointwise; a MetricModel in its own right."""

    def __init__(self, action: GroupActionModel, base: MetricModel, l: float, label=None):
        if not l > 0:
            raise ParameterError("Cheeger parameter l must be positive")
        self.action = action
        self.base = base
        self.l = float(l)
        super().__init__(base.dim, cheeger_metric_fn(action, base.metric_fn, l),
                         label=label or f"cheeger({base.label};l={l:g})", domain=base.domain,
                         traceable=base.traceable, scale=base.scale)


def cheeger_metric(action: GroupActionModel, base: MetricModel, l) -> CheegerMetricModel:
    return CheegerMetricModel(action, base, l)


def iterated_parameter(l0, l1):
    """Deforming by l0 then by l1 equals one deformation with 1/L^2 = 1/l0^2 + 1/l1^2."""
    return 1.0 / math.sqrt(1.0 / l0 ** 2 + 1.0 / l1 ** 2)


def cheeger_reparam(action: GroupActionModel, base: MetricModel, l, v, x=None):
    """Ch_l(v) = v + (kappa_v / l^2)_M."""
    if isinstance(v, G.TangentVector):
        x, comp = v.base_point, v.components
    else:
        comp = np.asarray(v, dtype=float)
    if action.lie_dim == 0:
        return G.TangentVector(np.asarray(x), comp.copy())
    kap = kappa(action, base, x, comp).kappa
    return G.TangentVector(np.asarray(x), comp + action.killing(x) @ kap / l ** 2)


def horizontal_lift(action, g, K, v, l):
    """(kappa_v / l^2, v): the lift of Ch_l(v) at (e, x)."""
    if action.lie_dim == 0:
        return np.zeros(0), v
    return kappa_matrix(action, g, K) @ v / l ** 2, v


# ---------------------------------------------------------------- Berger oracle
def berger_sectional(l, fiber, h1, h2, g_l, u, w):
    """Sectional curvature of the Hopf-deformed round S^3 from its curvature operator.

    The Cheeger deformation rescales the fiber by tau^2 = l^2/(1+l^2); the
    curvature operator is diagonal on {h1^h2, f^h1, f^h2} with eigenvalues
    4 - 3 tau^2, tau^2, tau^2.  ``fiber, h1, h2`` is a g_l-orthonormal frame.
    """
    tau2 = l * l / (1 + l * l)
    E = np.array([fiber, h1, h2])
    cu = E @ g_l @ u
    cw = E @ g_l @ w
    nrm = np.cross(cu, cw)
    nrm = nrm / np.linalg.norm(nrm)
    # the plane with normal f is h1^h2
    return (4 - 3 * tau2) * nrm[0] ** 2 + tau2 * (nrm[1] ** 2 + nrm[2] ** 2)


# ---------------------------------------------------------------- orbital estimate
@dataclass
class OrbitalReport:
    bound_margin: float          # sec_{g_l} - max{-1, -l^2/|kV|^2, -l^2/|kW|^2}|sec_g|
    lift_margin: float           # sec_{g_l} - sec of the lifted plane in l^2 g_bi + g
    horizontal_margin: float     # sec_{g_l} - sec_g on planes perpendicular to the orbit
    samples: int
    horizontal_samples: int


def sample_orthonormal_pair(g, rng, subspace=None):
    n = g.shape[0]
    A = np.eye(n) if subspace is None else np.asarray(subspace)
    r = A.shape[1]
    e = G.gram_schmidt(g, [A @ rng.standard_normal(r), A @ rng.standard_normal(r)])
    return e[0], e[1]


def orbital_estimate_check(action: GroupActionModel, base: MetricModel, l, points, planes_per_point=5, seed=0):
    """Check the lower curvature bounds for Ch_l-images of g-orthonormal pairs."""
    rng = np.random.default_rng(seed)
    cm = CheegerMetricModel(action, base, l)
    pm = lm = hm = math.inf
    count = hcount = 0
    Rbi = bi_invariant_curvature(action.C, action.B) if action.lie_dim else None
    for x in points:
        g, _, R = base.curvature(x)
        gl, _, Rl = cm.curvature(x)
        K = action.killing(x)
        kap = kappa_matrix(action, g, K) if action.lie_dim else np.zeros((0, x.size))
        orbit_perp = None
        if action.lie_dim:
            perp = G.orthonormal_complement(g, list(K.T))
            if len(perp) >= 2:
                orbit_perp = np.array(perp).T
        for i in range(planes_per_point):
            V, W = sample_orthonormal_pair(g, rng)
            pm_i, lm_i = _orbital_pair(action, g, R, gl, Rl, K, kap, Rbi, V, W, l)
            pm, lm = min(pm, pm_i), min(lm, lm_i)
            count += 1
            if orbit_perp is not None:
                V, W = sample_orthonormal_pair(g, rng, orbit_perp)
                ChV, ChW = V + K @ (kap @ V) / l ** 2, W + K @ (kap @ W) / l ** 2
                hm = min(hm, G.sectional_from(gl, Rl, ChV, ChW) - G.sectional_from(g, R, V, W))
                hcount += 1
    return OrbitalReport(pm, lm, hm, count, hcount)


def _orbital_pair(action, g, R, gl, Rl, K, kap, Rbi, V, W, l):
    kV, kW = kap @ V, kap @ W
    if action.lie_dim:
        ChV, ChW = V + K @ kV / l ** 2, W + K @ kW / l ** 2
    else:
        ChV, ChW = V, W
    sec_l = G.sectional_from(gl, Rl, ChV, ChW)
    sec_g = G.sectional_from(g, R, V, W)
    B = action.B
    nV = float(kV @ B @ kV) if action.lie_dim else 0.0
    nW = float(kW @ B @ kW) if action.lie_dim else 0.0
    factor = max([-1.0] + [-l * l / q for q in (nV, nW) if q > 1e-300])
    bound = sec_l - factor * abs(sec_g)
    # lifted plane in (G x M, l^2 g_bi + g): a = kappa/l^2
    aV, aW = kV / l ** 2, kW / l ** 2
    curv_lift = G.curv(R, V, W)
    if action.lie_dim:
        curv_lift += l * l * float(np.einsum("abcd,a,b,c,d->", Rbi, aV, aW, aW, aV))
    pV = l * l * (aV @ B @ aV) + V @ g @ V if action.lie_dim else V @ g @ V
    pW = l * l * (aW @ B @ aW) + W @ g @ W if action.lie_dim else W @ g @ W
    pVW = l * l * (aV @ B @ aW) + V @ g @ W if action.lie_dim else V @ g @ W
    lift = curv_lift / (pV * pW - pVW ** 2)
    return bound, sec_l - lift


# ---------------------------------------------------------------- Berestovskii
def _to_fraction(a, tol=1e-12):
    out = np.empty(np.shape(a), dtype=object)
    for idx, val in np.ndenumerate(np.asarray(a, dtype=float)):
        fr = Fraction(val).limit_denominator(10 ** 6)
        if abs(float(fr) - val) > tol:
            return None
        out[idx] = fr
    return out


def _rref_nullspace(M):
    """Exact nullspace basis (list of Fraction vectors) and rank of a Fraction matrix."""
    M = [list(r) for r in M]
    rows = len(M)
    cols = len(M[0]) if rows else 0
    pivots = []
    r = 0
    for c in range(cols):
        p = next((i for i in range(r, rows) if M[i][c] != 0), None)
        if p is None:
            continue
        M[r], M[p] = M[p], M[r]
        piv = M[r][c]
        M[r] = [v / piv for v in M[r]]
        for i in range(rows):
            if i != r and M[i][c] != 0:
                f = M[i][c]
                M[i] = [a - f * b for a, b in zip(M[i], M[r])]
        pivots.append(c)
        r += 1
        if r == rows:
            break
    free = [c for c in range(cols) if c not in pivots]
    basis = []
    for fcol in free:
        v = [Fraction(0)] * cols
        v[fcol] = Fraction(1)
        for i, pc in enumerate(pivots):
            v[pc] = -M[i][fcol]
        basis.append(v)
    return basis, len(pivots)


@dataclass
class CentralizerResult:
    dim: int
    basis: np.ndarray        # columns in g coordinates
    exact: bool
    m_dim: int


def berestovskii_centralizer(C, B, h_basis) -> CentralizerResult:
    """C(m) = {v in m : [v, w] = 0 for all w in m}, m the g_bi-complement of h."""
    C = np.asarray(C, dtype=float)
    B = np.asarray(B, dtype=float)
    d = B.shape[0]
    H = np.asarray(h_basis, dtype=float).reshape(d, -1) if np.size(h_basis) else np.zeros((d, 0))
    # closure of h
    for i in range(H.shape[1]):
        for j in range(H.shape[1]):
            br = bracket(C, H[:, i], H[:, j])
            coef, *_ = np.linalg.lstsq(H, br, rcond=None)
            if np.max(np.abs(H @ coef - br)) > 1e-10:
                raise InputError("h is not closed under the bracket")
    fC, fB, fH = _to_fraction(C), _to_fraction(B), _to_fraction(H)
    if fC is not None and fB is not None and fH is not None:
        # m = null(H^T B), then the stacked bracket map on m
        if H.shape[1]:
            mb, _ = _rref_nullspace((fH.T @ fB).tolist())
        else:
            mb = [[Fraction(int(i == j)) for j in range(d)] for i in range(d)]
        Mm = np.array(mb, dtype=object).T if mb else np.zeros((d, 0), dtype=object)
        k = Mm.shape[1]
        if k == 0:
            return CentralizerResult(0, np.zeros((d, 0)), True, 0)
        blocks = []
        for j in range(k):
            # rows: components of [m_i, m_j] as linear map of the coefficient vector c
            ad = np.einsum("abc,b->ca", fC, Mm[:, j])      # ad_{-w}: v -> [v, w]
            blocks.append(ad @ Mm)
        stacked = np.vstack(blocks)
        null, _ = _rref_nullspace(stacked.tolist())
        basis = np.array([[float(v) for v in (Mm @ np.array(c, dtype=object))] for c in null]).T \
            if null else np.zeros((d, 0))
        return CentralizerResult(len(null), basis, True, k)
    # floating point fallback
    Mm = null_space(H.T @ B) if H.shape[1] else np.eye(d)
    k = Mm.shape[1]
    stacked = np.vstack([np.einsum("abc,b->ca", C, Mm[:, j]) @ Mm for j in range(k)])
    s = np.linalg.svd(stacked, compute_uv=False)
    rank = int(np.sum(s > RANK_TOL * max(1.0, s.max() if s.size else 1.0)))
    null = null_space(stacked, rcond=RANK_TOL) if k else np.zeros((0, 0))
    return CentralizerResult(k - rank, Mm @ null if k else np.zeros((d, 0)), False, k)


# ---------------------------------------------------------------- Ricci probes
def _horizontal_frame_total(action, g, K, lam):
    """Orthonormal basis of the horizontal space of (G x M, lam^2 B + g) at (e, x),
    as pairs (a, v); lifts of coordinate vectors are orthonormalised."""
    n = g.shape[0]
    kap = kappa_matrix(action, g, K)
    lifts = np.hstack([(kap / lam ** 2).T, np.eye(n)])     # rows: (a, v)
    P = _product_gram(action.B, g, lam)
    return _orthonormalise(lifts, P), kap


def _product_gram(B, g, lam):
    d, n = B.shape[0], g.shape[0]
    P = np.zeros((d + n, d + n))
    P[:d, :d] = lam ** 2 * B
    P[d:, d:] = g
    return P


def _orthonormalise(rows, P):
    out = []
    for v in rows:
        w = v.copy()
        for _ in range(2):
            for e in out:
                w = w - (e @ P @ w) * e
        nrm = math.sqrt(max(w @ P @ w, 0.0))
        if nrm > 1e-12:
            out.append(w / nrm)
    return np.array(out)


def _total_curvature(action, R, lam, d):
    """Curvature of lam^2 g_bi + g on (a, v) vectors, as a function."""
    Rbi = bi_invariant_curvature(action.C, action.B, lam ** 2)

    def curv4(X, Y, Z, W):
        return (np.einsum("abcd,a,b,c,d->", Rbi, X[:d], Y[:d], Z[:d], W[:d])
                + np.einsum("ijkl,i,j,k,l->", R, X[d:], Y[d:], Z[d:], W[d:]))

    return curv4


def ric_horizontal_blocks(action, g, R, K, lam):
    """Ric^H of (G x M, lam^2 g_bi + g) on the lifts of the orbit directions and of
    their g-orthogonal complement.  Returns (vertical min, mixed max, horizontal min)."""
    d, n = action.lie_dim, g.shape[0]
    frame, kap = _horizontal_frame_total(action, g, K, lam)
    P = _product_gram(action.B, g, lam)
    Rt = np.zeros((d + n,) * 4)
    Rt[:d, :d, :d, :d] = bi_invariant_curvature(action.C, action.B, lam ** 2)
    Rt[d:, d:, d:, d:] = R
    ric = np.einsum("ijkl,aj,ak->il", Rt, frame, frame)
    ric = 0.5 * (ric + ric.T)

    def lift(v):
        return np.concatenate([kap @ v / lam ** 2, v])

    orbit = G.gram_schmidt(g, list(K.T))
    perp = G.orthonormal_complement(g, orbit)
    Vh = np.array([lift(v) for v in orbit])
    Zh = np.array([lift(z) for z in perp])       # kappa vanishes on these
    vmin = hmin = math.inf
    mixed = 0.0
    if len(Vh):
        Q = Vh @ ric @ Vh.T
        M = Vh @ P @ Vh.T
        vmin = float(eigh(0.5 * (Q + Q.T), M, eigvals_only=True)[0])
    if len(Zh):
        Q = Zh @ ric @ Zh.T
        hmin = float(np.linalg.eigvalsh(0.5 * (Q + Q.T))[0])
    if len(Vh) and len(Zh):
        # orthonormalise the vertical lifts so the norm ratio is an operator norm
        Vo = _orthonormalise(Vh, P)
        mixed = float(np.linalg.norm(Zh @ ric @ Vo.T, 2))
    return vmin, mixed, hmin


@dataclass
class VerticalRicciReport:
    lambdas: np.ndarray
    vertical_min: np.ndarray        # min over points, per lambda
    mixed_max: np.ndarray
    horizontal_min: np.ndarray
    exponent: float                 # log-log slope of vertical_min over the two smallest lambdas
    diverges: bool
    mixed_ratio: float
    iterated: dict = field(default_factory=dict)


def _fit_divergence(lams, vmins):
    """Asymptotic log-log slope of the vertical minimum over the two smallest lambdas,
    with the coefficient a of the least-squares model a / lambda^2 + b."""
    lams = np.asarray(lams)
    vmins = np.asarray(vmins)
    A = np.vstack([1.0 / lams ** 2, np.ones_like(lams)]).T
    (a, b), *_ = np.linalg.lstsq(A, vmins, rcond=None)
    if vmins[-1] <= 0 or vmins[-2] <= 0:
        return 0.0, a, b
    slope = float(np.log(vmins[-1] / vmins[-2]) / np.log(lams[-1] / lams[-2]))
    return slope, a, b


MIXED_FLOOR = 1e-10


def mixed_decay_ratio(mixed):
    """Last over first mixed-term size; terms at rounding level count as already decayed."""
    mixed = np.asarray(mixed)
    if mixed[0] <= MIXED_FLOOR:
        return 0.0 if mixed[-1] <= MIXED_FLOOR else math.inf
    return float(mixed[-1] / mixed[0])


def vertical_ricci_probe(action: GroupActionModel, base: MetricModel, lambda_grid, compact_sample,
                         iterate_with=None) -> VerticalRicciReport:
    """Horizontal Ricci of (G x M, lam^2 g_bi + g) on vertical, mixed and horizontal lifts.

    ``iterate_with`` = (l0,) adds the two iterated deformations: base first deformed
    with l0 and then probed with each lambda, and the reverse order.
    """
    lams = np.asarray(lambda_grid, dtype=float)
    if np.any(np.diff(lams) >= 0):
        raise InputError("lambda grid must be strictly decreasing")
    if action.lie_dim == 0:
        raise ConfigurationError("the probe needs a non-trivial group")
    data = [[], [], []]
    cache = []
    for x in compact_sample:
        g, _, R = base.curvature(x)
        cache.append((g, R, action.killing(x)))
    for lam in lams:
        rows = [ric_horizontal_blocks(action, g, R, K, lam) for g, R, K in cache]
        data[0].append(min(r[0] for r in rows))
        data[1].append(max(r[1] for r in rows))
        data[2].append(min(r[2] for r in rows))
    vmin, mixed, hmin = (np.array(d) for d in data)
    slope, a, _ = _fit_divergence(lams, vmin)
    rep = VerticalRicciReport(lams, vmin, mixed, hmin, slope, bool(a > 0 and slope <= -1.8),
                              mixed_decay_ratio(mixed))
    if iterate_with is not None:
        l0 = float(iterate_with)
        for order in ("l0_then_lambda", "lambda_then_l0"):
            rows = []
            for lam in lams:
                first, second = (l0, lam) if order == "l0_then_lambda" else (lam, l0)
                deformed = CheegerMetricModel(action, base, first)
                vals = []
                for x in compact_sample:
                    g, _, R = deformed.curvature(x)
                    vals.append(ric_horizontal_blocks(action, g, R, action.killing(x), second))
                rows.append((min(v[0] for v in vals), max(v[1] for v in vals), min(v[2] for v in vals)))
            # columns: vertical min, mixed max, horizontal min
            rep.iterated[order] = np.array(rows)
    return rep


# ---------------------------------------------------------------- A-tensors of the orbit submersion
def orbit_submersion(action: GroupActionModel, base: MetricModel) -> SubmersionSpec:
    return SubmersionSpec(base, action.killing_fn, label=f"{base.label}/{action.label}")


def a_reg_norm(action, base, x, Y, Z, method="autodiff"):
    A, _, _ = a_tensor(orbit_submersion(action, base), x, method)
    g = base.metric_at(x)
    return G.norm(g, a_apply(A, Y, Z))


def a_cheeger_norm(action, base, l, x, Y, Z):
    """|A^Ch_Y Z| for g-orthonormal Y, Z perpendicular to the orbit, from
    sec_{g_l}(Y, Z) = sec_g(Y, Z) + 3 |A^Ch|^2 (their lifts (0, Y), (0, Z) are horizontal)."""
    g, _, R = base.curvature(x)
    gl, _, Rl = CheegerMetricModel(action, base, l).curvature(x)
    gap = (G.sectional_from(gl, Rl, Y, Z) - G.sectional_from(g, R, Y, Z)) / 3.0
    return math.sqrt(max(gap, 0.0)), gap


# ---------------------------------------------------------------- singular tubes
@dataclass
class SingularTubeReport:
    ts: np.ndarray
    angle_dev: np.ndarray            # |pi/2 - angle(isotropy span, m span)| per t
    angle_slope_C: float
    kappa_lower: np.ndarray          # min |kappa_v|/|v| outside the cone, per t
    kappa_C: float
    orphan_angle: np.ndarray         # max principal angle between V cap TG and isotropy orbit tangent
    a_isotropy: np.ndarray           # max |g(A^reg_Z Y, k_M)| over g_bi-unit isotropy k, per t
    a_slope: float
    a_vacuous: bool
    cone_angle: float
    notes: list = field(default_factory=list)


def _loglog_slope(ts, vals):
    ts, vals = np.asarray(ts), np.asarray(vals)
    ok = vals > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(ts[ok]), np.log(vals[ok]), 1)[0])


def _span_angle(g, A, B):
    """Smallest principal angle between spans of columns of A and B in the metric g."""
    L = np.linalg.cholesky(g)
    return float(np.min(subspace_angles(L.T @ A, L.T @ B)))


def _max_angle(g, A, B):
    L = np.linalg.cholesky(g)
    return float(np.max(subspace_angles(L.T @ A, L.T @ B)))


def singular_tube_diagnostics(action: GroupActionModel, base: MetricModel, stratum: StratumDecl, t_grid,
                              cone_angle=0.2, seed=0, theta=None, cone_samples=400):
    """Angle, kappa, orphan and A-tensor diagnostics along a normal geodesic of a stratum."""
    if not stratum.isotropy:
        raise ConfigurationError(f"stratum {stratum.label} has no declared isotropy label")
    from .conformal import _unit_normal  # local import keeps module layering one-way

    rng = np.random.default_rng(seed)
    S = stratum.S
    if theta is None and stratum.probe is not None:
        theta = np.asarray(stratum.probe, dtype=float)
    if theta is None:
        theta = 0.5 * (np.asarray(S.param_lo, float) + np.asarray(S.param_hi, float)) if S.dim else np.zeros(0)
    q = np.asarray(jax.jit(S.parametrization)(jnp.asarray(theta, dtype=float)))
    split_q = isotropy_split(action, base, q)
    iso, m_q = split_q.g_x, split_q.m_x
    nu = _unit_normal(base, S, theta, q, rng)
    ts = np.asarray(t_grid, dtype=float)
    geo = G.geodesic(base, q, nu, float(ts[-1]), samples=ts)
    angle_dev, kap_low, orphan, a_iso = [], [], [], []
    vacuous = True
    for x in geo.points:
        g = base.metric_at(x)
        K = action.killing(x)
        Kiso = K @ iso
        Km = K @ m_q
        if Kiso.shape[1] and Km.shape[1]:
            angle_dev.append(abs(math.pi / 2 - _span_angle(g, Kiso, Km)))
        else:
            angle_dev.append(0.0)
        ts_x = G.tube_splitting(base, S, x)
        X = ts_x.X.components
        Vb = np.array([v.components for v in ts_x.V_basis]).T
        Hbar = np.array([h.components for h in ts_x.Hbar_basis]).T
        orbit = np.array(G.gram_schmidt(g, list(K.T))).T
        # Hbar cap (TG)^perp
        if Hbar.size:
            # combinations of Hbar that are g-orthogonal to every orbit direction
            _, sv, vt = np.linalg.svd(orbit.T @ g @ Hbar)
            rank = int(np.sum(sv > 1e-9))
            hperp = G.gram_schmidt(g, list((Hbar @ vt[rank:].T).T))
        else:
            hperp = []
        adapted = np.array(G.gram_schmidt(g, [X] + list(Vb.T) + hperp)).T
        # (b) kappa lower bound outside the cone of half-angle cone_angle around `adapted`
        kap = kappa_matrix(action, g, K)
        comp = G.orthonormal_complement(g, list(adapted.T))
        worst = math.inf
        if comp:
            Cm = np.array(comp).T
            for _ in range(cone_samples):
                a = adapted @ rng.standard_normal(adapted.shape[1])
                a = a / G.norm(g, a)
                b = Cm @ rng.standard_normal(Cm.shape[1])
                b = b / G.norm(g, b)
                ang = rng.uniform(cone_angle, math.pi / 2)
                v = math.cos(ang) * a + math.sin(ang) * b
                kv = kap @ v
                worst = min(worst, math.sqrt(kv @ action.B @ kv) / G.norm(g, v))
        kap_low.append(worst)
        # (c) orphan containment: V cap TG equals the isotropy-orbit tangent
        if Kiso.shape[1] and Vb.size:
            orphan.append(_max_angle(g, np.array(G.gram_schmidt(g, list(Kiso.T))).T, Vb)
                          if np.linalg.matrix_rank(Kiso) else 0.0)
        else:
            orphan.append(0.0)
        # (d) |g(A^reg_Z Y, k_M)| for isotropy k, Y in Hbar cap TG^perp, Z in span{X, that}
        if hperp and Kiso.shape[1]:
            vacuous = False
            A, _, _ = a_tensor(orbit_submersion(action, base), x)
            vals = []
            for Y in hperp:
                for Z in [X] + hperp:
                    AZY = a_apply(A, Z, Y)
                    for k in Kiso.T:
                        vals.append(abs(AZY @ g @ k))
            a_iso.append(max(vals))
        else:
            a_iso.append(0.0)
    angle_dev = np.array(angle_dev)
    C_angle = float(np.max(angle_dev / ts))
    kap_low = np.array(kap_low)
    a_iso = np.array(a_iso)
    exact_a = bool(np.max(a_iso) <= MIXED_FLOOR)
    rep = SingularTubeReport(ts, angle_dev, C_angle, kap_low, float(np.min(kap_low)), np.array(orphan),
                             a_iso, float("nan") if exact_a else _loglog_slope(ts, a_iso), vacuous, cone_angle)
    if exact_a and not vacuous:
        rep.notes.append("isotropy component of A^reg vanishes to rounding along this geodesic")
    if np.all(angle_dev < 1e-12):
        rep.notes.append("isotropy and m Killing spans are exactly orthogonal along this geodesic")
    if vacuous:
        rep.notes.append("Hbar meets the orbit-perpendicular space trivially; A-tensor bound is vacuous")
    return rep


# ---------------------------------------------------------------- kappa bounds
def kappa_bounds(action: GroupActionModel, base: MetricModel, points, samples=50, seed=0):
    """(C1, C2): sup |kappa_V| over unit V, and inf |kappa_V| over unit orbit-tangent V."""
    rng = np.random.default_rng(seed)
    c1, c2 = 0.0, math.inf
    for x in points:
        g = base.metric_at(x)
        K = action.killing(x)
        kap = kappa_matrix(action, g, K)
        Lg = np.linalg.cholesky(g)
        W = _b_frame(action.B)
        # operator norm of kappa from (T_x M, g) to (g, B)
        M = np.linalg.inv(W) @ kap @ np.linalg.inv(Lg.T)
        c1 = max(c1, float(np.linalg.norm(M, 2)))
        orbit = G.gram_schmidt(g, list(K.T))
        if orbit:
            O = np.array(orbit).T
            s = np.linalg.svd(np.linalg.inv(W) @ kap @ O, compute_uv=False)
            c2 = min(c2, float(s.min()))
    return c1, c2


# ---------------------------------------------------------------- Cheeger A-tensor
@dataclass
class AGapReport:
    l_grid: np.ndarray
    gaps: np.ndarray          # max over samples of ||A^Ch| - |A^reg|| per l
    monotone: bool
    final_ratio: float


def cheeger_a_gap(action: GroupActionModel, base: MetricModel, points, l_grid, pairs_per_point=3, seed=0):
    """Compare |A^Ch_Y Z| (from the curvature gain of g_l) with |A^reg_Y Z| on orbit-perpendicular pairs."""
    rng = np.random.default_rng(seed)
    l_grid = np.asarray(l_grid, dtype=float)
    samples = []
    for x in points:
        g = base.metric_at(x)
        K = action.killing(x)
        perp = G.orthonormal_complement(g, list(K.T))
        if len(perp) < 2:
            continue
        P = np.array(perp).T
        A, _, _ = a_tensor(orbit_submersion(action, base), x)
        R = base.curvature(x)[2]
        for _ in range(pairs_per_point):
            Y, Z = sample_orthonormal_pair(g, rng, P)
            samples.append((x, Y, Z, G.norm(g, a_apply(A, Y, Z)), G.sectional_from(g, R, Y, Z)))
    if not samples:
        raise ConfigurationError("no orbit-perpendicular planes at the sampled points")
    gaps = []
    for l in l_grid:
        cm = CheegerMetricModel(action, base, l)
        worst = 0.0
        for x, Y, Z, areg, sec in samples:
            gl, _, Rl = cm.curvature(x)
            ach = math.sqrt(max((G.sectional_from(gl, Rl, Y, Z) - sec) / 3.0, 0.0))
            worst = max(worst, abs(ach - areg))
        gaps.append(worst)
    gaps = np.array(gaps)
    monotone = bool(np.all(np.diff(gaps) <= 1e-12))
    return AGapReport(l_grid, gaps, monotone, float(gaps[-1] / gaps[0]) if gaps[0] > 0 else 0.0)


def product_submersion(action: GroupActionModel, base: MetricModel, l) -> SubmersionSpec:
    """(G x M, l^2 g_bi + g) -> (M, g_l), (p, m) -> p m, for abelian G in exponential coordinates.

    Abelian groups keep the exponential chart a group chart, so the left-invariant
    metric l^2 g_bi is constant and the vertical fields are (-k, k_M).
    """
    if action.lie_dim == 0 or np.max(np.abs(action.C)) > 0:
        raise ConfigurationError("the product submersion chart is implemented for abelian groups only")
    if action.act_fn is None:
        raise ConfigurationError(f"{action.label} has no group action evaluator")
    d, n = action.lie_dim, base.dim
    Bl = jnp.asarray(l * l * action.B)
    gfn, kf, act = base.metric_fn, action.killing_fn, action.act_fn

    def metric(z):
        top = jnp.concatenate([Bl, jnp.zeros((d, n))], axis=1)
        bot = jnp.concatenate([jnp.zeros((n, d)), gfn(z[d:])], axis=1)
        return jnp.concatenate([top, bot], axis=0)

    def vertical(z):
        return jnp.concatenate([-jnp.eye(d), kf(z[d:])], axis=0)

    lo = np.concatenate([-10.0 * np.ones(d), base.domain.lo])
    hi = np.concatenate([10.0 * np.ones(d), base.domain.hi])
    total = MetricModel(d + n, metric, label=f"{action.label}x{base.label}", domain=G.Box(lo, hi))
    return SubmersionSpec(total, vertical, CheegerMetricModel(action, base, l), lambda z: act(z[:d], z[d:]),
                          label=f"q[{action.label},{base.label},l={l:g}]")
