"""Quaternions and octonions as table-driven algebras, their Hopf maps, the
bundle charts of the Milnor/Shimada spheres and the diagonal automorphism action."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources

import numpy as np
from scipy.linalg import expm

from .cheeger import _rref_nullspace
from .errors import DomainError, InputError

UNIT_TOL = 1e-10
ISOTROPY_TOL = 1e-10

# Two ways of doubling A into A + A.  Both give normed algebras; they differ
# in signs of the octonion table, which lets checks be re-run under either.
#   "left":  (a,b)(c,d) = (ac - conj(d) b, d a + b conj(c))
#   "right": (a,b)(c,d) = (ac - d conj(b), conj(a) d + c b)
CONVENTIONS = ("left", "right")


def _double_product(mul, conj, half, convention):
    def prod(x, y):
        a, b = x[:half], x[half:]
        c, d = y[:half], y[half:]
        if convention == "left":
            return np.concatenate([mul(a, c) - mul(conj(d), b), mul(d, a) + mul(b, conj(c))])
        return np.concatenate([mul(a, c) - mul(d, conj(b)), mul(conj(a), d) + mul(c, b)])
    return prod


def _conj(x):
    out = -np.asarray(x, dtype=float).copy()
    out[..., 0] *= -1
    return out


def cayley_dickson_table(dim: int, convention: str = "left") -> np.ndarray:
    """Integer table T[i, j, k] with e_i e_j = sum_k T[i, j, k] e_k."""
    if convention not in CONVENTIONS:
        raise InputError(f"unknown doubling convention {convention!r}")
    if dim not in (1, 2, 4, 8):
        raise InputError("Cayley-Dickson dimension must be 1, 2, 4 or 8")

    def mul1(x, y):
        return np.array([x[0] * y[0]])

    mul, size = mul1, 1
    while size < dim:
        mul = _double_product(mul, _conj, size, convention)
        size *= 2
    eye = np.eye(dim)
    T = np.array([[mul(eye[i], eye[j]) for j in range(dim)] for i in range(dim)])
    return np.rint(T).astype(int)


@dataclass
class NormedAlgebra:
    """R^dim with a bilinear product fixed by an integer table on {1, e_1, ...}."""

    name: str
    table: np.ndarray
    convention: str = "left"
    _tablef: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.table = np.asarray(self.table, dtype=int)
        self._tablef = self.table.astype(float)

    @property
    def dim(self):
        return self.table.shape[0]

    def one(self):
        e = np.zeros(self.dim)
        e[0] = 1.0
        return e

    def basis(self, i):
        return np.eye(self.dim)[i]

    def mul(self, x, y):
        return np.einsum("...i,...j,ijk->...k", np.asarray(x, dtype=float), np.asarray(y, dtype=float), self._tablef)

    def conj(self, x):
        return _conj(x)

    def norm(self, x):
        return np.linalg.norm(x, axis=-1)

    def re(self, x):
        return np.asarray(x, dtype=float)[..., 0]

    def im(self, x):
        out = np.array(x, dtype=float)
        out[..., 0] = 0.0
        return out

    def inverse(self, x):
        n2 = float(np.dot(x, x))
        if n2 == 0.0:
            raise DomainError("zero has no inverse")
        return self.conj(x) / n2

    def power(self, x, m: int):
        """x^m for any integer m (powers of one element associate)."""
        base = self.inverse(x) if m < 0 else np.asarray(x, dtype=float)
        out = self.one()
        for _ in range(abs(m)):
            out = self.mul(out, base)
        return out

    def commutator(self, x, y):
        return self.mul(x, y) - self.mul(y, x)

    def associator(self, x, y, z):
        return self.mul(self.mul(x, y), z) - self.mul(x, self.mul(y, z))

    def left_matrix(self, x):
        """L_x as a matrix: L_x y = x y."""
        return np.einsum("i,ijk->kj", np.asarray(x, dtype=float), self._tablef)

    def right_matrix(self, x):
        return np.einsum("j,ijk->ki", np.asarray(x, dtype=float), self._tablef)

    def random_unit(self, rng, count=None):
        shape = (self.dim,) if count is None else (count, self.dim)
        v = rng.standard_normal(shape)
        return v / np.linalg.norm(v, axis=-1, keepdims=True)

    def to_dict(self):
        return {"name": self.name, "dim": self.dim, "convention": self.convention,
                "table": self.table.tolist()}


def quaternions(convention="left") -> NormedAlgebra:
    return NormedAlgebra("H", cayley_dickson_table(4, convention), convention)


def octonions(convention="left") -> NormedAlgebra:
    return NormedAlgebra("O", cayley_dickson_table(8, convention), convention)


def shipped_tables():
    """Tables stored with the package, keyed by '<name>-<convention>'."""
    text = resources.files("curvlab").joinpath("data/algebra_tables.json").read_text()
    data = json.loads(text)
    return {k: NormedAlgebra(v["name"], np.array(v["table"]), v["convention"]) for k, v in data["tables"].items()}


def algebra_residuals(alg: NormedAlgebra, samples=1000, seed=0):
    """Max violations of |xy| = |x||y|, alternativity and (for H) associativity."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((samples, alg.dim))
    y = rng.standard_normal((samples, alg.dim))
    z = rng.standard_normal((samples, alg.dim))
    xy = alg.mul(x, y)
    comp = np.max(np.abs(alg.norm(xy) - alg.norm(x) * alg.norm(y)))
    left_alt = np.max(np.abs(alg.mul(x, xy) - alg.mul(alg.mul(x, x), y)))
    right_alt = np.max(np.abs(alg.mul(xy, y) - alg.mul(x, alg.mul(y, y))))
    assoc = np.max(np.abs(alg.associator(x, y, z)))
    return {"composition": float(comp), "alternative": float(max(left_alt, right_alt)),
            "associator": float(assoc)}


# ---------------------------------------------------------------- Hopf map and charts
def hopf(alg: NormedAlgebra, a, c):
    """(a, c) on S^{2b-1} -> (a conj(c), (|a|^2 - |c|^2)/2) on the sphere of radius 1/2."""
    a = np.asarray(a, dtype=float)
    c = np.asarray(c, dtype=float)
    n2 = float(a @ a + c @ c)
    if abs(n2 - 1.0) > UNIT_TOL:
        raise InputError(f"(a, c) is not on the unit sphere (|.|^2 = {n2:.12g})")
    return np.concatenate([alg.mul(a, alg.conj(c)), [0.5 * (a @ a - c @ c)]])


def _hopf_raw(alg, p):
    b = alg.dim
    a, c = p[:b], p[b:]
    return np.concatenate([alg.mul(a, alg.conj(c)), [0.5 * (a @ a - c @ c)]])


def _phi(u):
    return 1.0 / np.sqrt(1.0 + float(np.dot(u, u)))


def _check_unit(q, what="q"):
    if abs(float(np.linalg.norm(q)) - 1.0) > UNIT_TOL:
        raise InputError(f"{what} must have unit norm")


def chart_h1(alg: NormedAlgebra, u, q):
    """(u, q) -> (u q, q) phi(u)."""
    _check_unit(q)
    return np.concatenate([alg.mul(u, q), q]) * _phi(u)


def chart_h2(alg: NormedAlgebra, v, r):
    """(v, r) -> (r, conj(v) r) phi(v)."""
    _check_unit(r, "r")
    return np.concatenate([r, alg.mul(alg.conj(v), r)]) * _phi(v)


def chart_h1_inverse(alg: NormedAlgebra, p):
    b = alg.dim
    a, c = p[:b], p[b:]
    nc = float(np.linalg.norm(c))
    if nc < UNIT_TOL:
        raise DomainError("point is outside the first chart (c = 0)")
    return alg.mul(a, alg.conj(c)) / nc ** 2, c / nc


def chart_h2_inverse(alg: NormedAlgebra, p):
    b = alg.dim
    a, c = p[:b], p[b:]
    na = float(np.linalg.norm(a))
    if na < UNIT_TOL:
        raise DomainError("point is outside the second chart (a = 0)")
    return alg.mul(a, alg.conj(c)) / na ** 2, a / na


def chart_transition(alg: NormedAlgebra, u, q):
    """h2^{-1} o h1 evaluated through the sphere."""
    if float(np.linalg.norm(u)) < UNIT_TOL:
        raise DomainError("the chart transition is undefined at u = 0")
    return chart_h2_inverse(alg, chart_h1(alg, u, q))


def transition_closed_form(alg: NormedAlgebra, u, q):
    """(u/|u|^2, (u/|u|) q)."""
    nu = float(np.linalg.norm(u))
    if nu < UNIT_TOL:
        raise DomainError("the chart transition is undefined at u = 0")
    return u / nu ** 2, alg.mul(u / nu, q)


@dataclass
class BundleChartPair:
    """S^{b-1}-bundle over S^b glued by (u, v) -> (u/|u|^2, (u^m/|u|^m) v (u^n/|u|^n)).

    For octonions the product is read as ((u^m/|u|^m) v)(u^n/|u|^n).
    """

    alg: NormedAlgebra
    m: int
    n: int

    def _factors(self, u):
        nu = float(np.linalg.norm(u))
        if nu < UNIT_TOL:
            raise DomainError("the clutching map is undefined at u = 0")
        w = u / nu
        return nu, self.alg.power(w, self.m), self.alg.power(w, self.n)

    def transition(self, u, v):
        _check_unit(v, "v")
        nu, left, right = self._factors(u)
        return u / nu ** 2, self.alg.mul(self.alg.mul(left, v), right)

    def inverse(self, u2, v2):
        # u2 points the same way as u, so the unit factors are recomputed from it
        _check_unit(v2, "v")
        nu, left, right = self._factors(u2)
        A = self.alg
        return u2 / nu ** 2, A.mul(A.conj(left), A.mul(v2, A.conj(right)))

    def projection(self, u, v):
        return np.asarray(u, dtype=float)

    @property
    def is_homotopy_sphere(self):
        return abs(self.m + self.n) == 1


# ---------------------------------------------------------------- automorphisms
def automorphism_residual(alg: NormedAlgebra, g):
    """max |g(e_i e_j) - g(e_i) g(e_j)| together with |g(1) - 1|."""
    g = np.asarray(g, dtype=float)
    if g.shape != (alg.dim, alg.dim):
        return float("inf")
    cols = g.T                                       # cols[i] = g(e_i)
    lhs = np.einsum("ijk,lk->ijl", alg._tablef, g)    # g(e_i e_j)
    rhs = alg.mul(cols[:, None, :], cols[None, :, :])
    return float(max(np.max(np.abs(lhs - rhs)), np.max(np.abs(g[:, 0] - alg.one()))))


def derivation_algebra(alg: NormedAlgebra):
    """Exact basis of Der(A) = {D : D(xy) = D(x) y + x D(y)} as integer-valued matrices."""
    b = alg.dim
    T = alg.table
    # unknown D[p, q] at index p*b + q; D e_q = sum_p D[p, q] e_p
    rows = []
    for i in range(b):
        for j in range(b):
            for out in range(b):
                row = [0] * (b * b)
                for k in range(b):           # D(e_i e_j)
                    if T[i, j, k]:
                        row[out * b + k] += int(T[i, j, k])
                for p in range(b):           # D(e_i) e_j and e_i D(e_j)
                    if T[p, j, out]:
                        row[p * b + i] -= int(T[p, j, out])
                    if T[i, p, out]:
                        row[p * b + j] -= int(T[i, p, out])
                if any(row):
                    rows.append([Fraction(v) for v in row])
    basis, rank = _rref_nullspace(rows)
    mats = [np.array([float(v) for v in vec]).reshape(b, b) for vec in basis]
    return mats


def derivation_closure_residual(mats):
    """How far commutators of the basis stray from its span."""
    if not mats:
        return 0.0
    flat = np.array([m.ravel() for m in mats]).T
    worst = 0.0
    for i, A in enumerate(mats):
        for B in mats[i + 1:]:
            br = (A @ B - B @ A).ravel()
            coef, *_ = np.linalg.lstsq(flat, br, rcond=None)
            worst = max(worst, float(np.max(np.abs(flat @ coef - br))))
    return worst


def random_automorphism(alg: NormedAlgebra, rng, scale=1.0, derivations=None):
    """exp of a random derivation."""
    ders = derivation_algebra(alg) if derivations is None else derivations
    D = sum(rng.standard_normal() * m for m in ders)
    return expm(scale * D)


def davis_act(alg: NormedAlgebra, g, u, v, tol=UNIT_TOL):
    """Diagonal action (u, v) -> (g u, g v) by an algebra automorphism."""
    res = automorphism_residual(alg, g)
    if res > tol:
        raise InputError(f"matrix is not an algebra automorphism (residual {res:.2e})")
    g = np.asarray(g, dtype=float)
    return g @ np.asarray(u, dtype=float), g @ np.asarray(v, dtype=float)


ISOTROPY_LABELS = {
    4: ("trivial", "SO(2)", "SO(3)"),
    8: ("SU(2)", "SU(3)", "G2"),
}


def isotropy_classify(alg: NormedAlgebra, u, v, tol=ISOTROPY_TOL):
    """Orbit type of (u, v) under Aut(A): generic, commuting pair, or real pair."""
    labels = ISOTROPY_LABELS.get(alg.dim)
    if labels is None:
        raise InputError("isotropy labels are defined for quaternions and octonions only")
    if np.linalg.norm(alg.commutator(u, v)) > tol:
        return labels[0]
    if np.linalg.norm(alg.im(u)) > tol or np.linalg.norm(alg.im(v)) > tol:
        return labels[1]
    return labels[2]


def isotropy_dimension(alg: NormedAlgebra, u, v, derivations=None, tol=1e-9):
    """dim of {D in Der(A) : D u = D v = 0}, an independent check on the labels."""
    ders = derivation_algebra(alg) if derivations is None else derivations
    M = np.array([np.concatenate([D @ u, D @ v]) for D in ders]).T
    s = np.linalg.svd(M, compute_uv=False)
    return len(ders) - int(np.sum(s > tol * max(1.0, s[0] if s.size else 1.0)))


# ---------------------------------------------------------------- spin representation of so(b)
def _so_basis(b):
    out = []
    for i in range(b):
        for j in range(i + 1, b):
            E = np.zeros((b, b))
            E[i, j], E[j, i] = -1.0, 1.0
            out.append(E)
    return out


def triality_partner(alg: NormedAlgebra, A, tol=1e-10):
    """The unique B, C in so(8) with A(xy) = B(x) y + x C(y) (local triality)."""
    if alg.dim != 8:
        raise InputError("local triality is an octonion statement")
    basis = _so_basis(8)
    T = alg._tablef
    cols = []
    for E in basis:                                   # contribution of B = E
        cols.append(np.einsum("pi,pjk->ijk", E, T).ravel())
    for E in basis:                                   # contribution of C = E
        cols.append(np.einsum("pj,ipk->ijk", E, T).ravel())
    M = np.array(cols).T
    rhs = np.einsum("ijk,lk->ijl", T, np.asarray(A, dtype=float)).ravel()
    coef, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    res = float(np.max(np.abs(M @ coef - rhs)))
    if res > tol:
        raise InputError(f"no triality partner found (residual {res:.2e})")
    n = len(basis)
    B = np.einsum("a,aij->ij", coef[:n], np.array(basis))
    C = np.einsum("a,aij->ij", coef[n:], np.array(basis))
    return B, C


def half_spin_representation(alg: NormedAlgebra):
    """A map so(b) -> so(b) whose S^{b-1}-stabilisers give Spin(b+1)/Spin(b-1) = S^{2b-1}.

    Octonions: A -> B from local triality, an outer automorphism of so(8).
    Quaternions: A -> its component in the ideal of left multiplications by Im H.
    Returned as a function on b x b antisymmetric matrices.
    """
    b = alg.dim
    basis = _so_basis(b)
    if b == 8:
        images = [triality_partner(alg, E)[0] for E in basis]
    elif b == 4:
        lefts = [alg.left_matrix(alg.basis(i)) for i in range(1, 4)]
        # the left multiplications are orthogonal for -tr/2 with norm^2 = 2
        images = [sum(-0.5 * np.trace(E @ L) / 2.0 * L for L in lefts) for E in basis]
    else:
        raise InputError("half-spin data exist for quaternions and octonions")
    flat = np.array([E.ravel() for E in basis])           # coordinates: -tr(E X)/2 = <E, X>
    stacked = np.array(images)

    def rho(A):
        A = np.asarray(A, dtype=float)
        coords = -0.5 * np.einsum("aij,ji->a", np.array(basis), A)
        return np.einsum("a,aij->ij", coords, stacked)

    rho.basis_images = stacked
    rho.flat_basis = flat
    return rho
