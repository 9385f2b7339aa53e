"""Matrix Lie algebras with a bi-invariant form, and the nested splitting
so(b+1) = so(b-1) + m_b + m_{b+1} used for the biquotient of F P^2 # -F P^2."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import null_space

from .algebra import half_spin_representation, octonions, quaternions
from .cheeger import structure_constants_from
from .errors import InputError

CLOSURE_TOL = 1e-10


def trace_form(X, Y, scale=0.5):
    """-scale tr(XY); with scale 1/2 the elementary rotations E_ij - E_ji are unit vectors."""
    return -scale * float(np.einsum("ij,ji->", X, Y))


def elementary_rotation(n, i, j):
    E = np.zeros((n, n))
    E[i, j], E[j, i] = -1.0, 1.0
    return E


@dataclass
class LieAlgebraMatrixModel:
    """A Lie algebra given by matrices, bracket = commutator, form = scaled trace form.

    ``basis`` is orthonormal for the form; ``summands`` maps a label to the
    indices of basis elements spanning that piece.
    """

    basis: list
    scale: float = 0.5
    summands: dict = field(default_factory=dict)
    label: str = ""

    def __post_init__(self):
        self.basis = [np.asarray(m, dtype=float) for m in self.basis]
        gram = self.bi_gram()
        if self.basis and np.max(np.abs(gram - np.eye(len(self.basis)))) > 1e-10:
            raise InputError("basis is not orthonormal for the bi-invariant form")
        self._C = None

    @property
    def dim(self):
        return len(self.basis)

    @property
    def size(self):
        return self.basis[0].shape[0] if self.basis else 0

    def bi_gram(self):
        return np.array([[trace_form(a, b, self.scale) for b in self.basis] for a in self.basis])

    def structure_constants(self):
        if self._C is None:
            self._C = structure_constants_from(self.basis)
        return self._C

    def matrix(self, coords):
        return np.einsum("a,aij->ij", np.asarray(coords, dtype=float), np.array(self.basis))

    def coords(self, M):
        # orthonormal basis: coordinates are inner products
        return np.array([trace_form(b, M, self.scale) for b in self.basis])

    def bracket(self, x, y):
        X, Y = self.matrix(x), self.matrix(y)
        return self.coords(X @ Y - Y @ X)

    def inner(self, x, y):
        return float(np.dot(x, y))

    def closure_residual(self):
        flat = np.array([m.ravel() for m in self.basis]).T
        worst = 0.0
        for a in range(self.dim):
            for b in range(a + 1, self.dim):
                br = (self.basis[a] @ self.basis[b] - self.basis[b] @ self.basis[a]).ravel()
                coef, *_ = np.linalg.lstsq(flat, br, rcond=None)
                worst = max(worst, float(np.max(np.abs(flat @ coef - br))))
        return worst

    def invariance_residual(self):
        """max |<[x,y],z> + <y,[x,z]>| over basis triples."""
        C = self.structure_constants()
        # <[e_a, e_b], e_c> = C[a, b, c] in an orthonormal basis
        return float(np.max(np.abs(C + np.swapaxes(C, 1, 2)))) if self.dim else 0.0

    def summand(self, label):
        try:
            return np.eye(self.dim)[self.summands[label]]
        except KeyError:
            raise InputError(f"no summand labelled {label!r}") from None

    def curvature(self, x, y):
        """Unnormalised bi-invariant curvature 1/4 |[x, y]|^2."""
        br = self.bracket(x, y)
        return 0.25 * float(br @ br)

    def bracket_in(self, first, second, target, tol=1e-12):
        """Largest component of [first, second] outside the target summand(s)."""
        targets = [target] if isinstance(target, str) else list(target)
        keep = np.zeros(self.dim, dtype=bool)
        for t in targets:
            keep[self.summands[t]] = True
        worst = 0.0
        for x in self.summand(first):
            for y in self.summand(second):
                br = self.bracket(x, y)
                worst = max(worst, float(np.max(np.abs(br[~keep]))) if (~keep).any() else 0.0)
        return worst


def so(n) -> LieAlgebraMatrixModel:
    basis = [elementary_rotation(n, i, j) for i in range(n) for j in range(i + 1, n)]
    return LieAlgebraMatrixModel(basis, label=f"so({n})")


def _orthonormal_in(model_basis, coeff_rows):
    """Orthonormalise combinations of an orthonormal basis; returns matrices."""
    Q, _ = np.linalg.qr(np.asarray(coeff_rows, dtype=float).T)
    return [np.einsum("a,aij->ij", q, np.array(model_basis)) for q in Q.T]


def nested_split(b: int, x=None, rho=None) -> LieAlgebraMatrixModel:
    """so(b+1) = so(b-1)_x + m_b + m_{b+1}, orthogonal for the trace form.

    so(b) fixes the last coordinate.  It acts on R^b through ``rho`` (a map of
    antisymmetric matrices, the plain inclusion when None); so(b-1)_x is the
    stabiliser of the unit vector x under that action, m_b its complement in
    so(b) and m_{b+1} the complement of so(b) in so(b+1).  Summand labels:
    'iso', 'm_fiber', 'm_base', and the unions 'so_b' and 'all'.
    """
    n = b + 1
    x = np.eye(b)[0] if x is None else np.asarray(x, dtype=float)
    if x.shape != (b,) or abs(np.linalg.norm(x) - 1.0) > 1e-12:
        raise InputError(f"x must be a unit vector in R^{b}")
    big = so(n)
    idx_sob = [k for k, M in enumerate(big.basis) if np.all(M[:, b] == 0)]
    idx_base = [k for k in range(big.dim) if k not in idx_sob]
    sob = [big.basis[k] for k in idx_sob]
    if rho is None:
        def rho(A):
            return A
    # stabiliser of x inside so(b): kernel of k -> rho(k) x
    action = np.array([rho(M[:b, :b]) @ x for M in sob]).T
    iso_coef = null_space(action, rcond=1e-12).T
    fib_coef = null_space(iso_coef, rcond=1e-12).T
    iso = _orthonormal_in(sob, iso_coef)
    fiber = _orthonormal_in(sob, fib_coef)
    base = [big.basis[k] for k in idx_base]
    basis = iso + fiber + base
    d_iso, d_fib, d_base = len(iso), len(fiber), len(base)
    summands = {
        "iso": list(range(d_iso)),
        "m_fiber": list(range(d_iso, d_iso + d_fib)),
        "m_base": list(range(d_iso + d_fib, d_iso + d_fib + d_base)),
    }
    summands["so_b"] = summands["iso"] + summands["m_fiber"]
    summands["all"] = list(range(len(basis)))
    model = LieAlgebraMatrixModel(basis, summands=summands, label=f"so({n}) split at x")
    expected = (n * (n - 1) // 2, b * (b - 1) // 2, (b - 1) * (b - 2) // 2, b - 1, b)
    got = (model.dim, d_iso + d_fib, d_iso, d_fib, d_base)
    if got != expected:
        raise InputError(f"splitting dimensions {got} differ from {expected}")
    model.x = x
    model.rho = rho
    return model


def sphere_action(model: LieAlgebraMatrixModel, coords):
    """(b+1) x (b+1) matrix by which an element of so(b) moves the suspended sphere S^b."""
    M = model.matrix(coords)
    b = M.shape[0] - 1
    out = np.zeros_like(M)
    out[:b, :b] = model.rho(M[:b, :b])
    return out


def spin9_split(x=None, convention="left") -> LieAlgebraMatrixModel:
    """spin(9) = spin(7) + m_spin(8) + m_spin(9) at the level of so(9); dims (36, 28, 21, 7, 8).

    spin(8) moves S^7 through the triality image of the vector action, so that
    spin(7) is the stabiliser of a point in a half-spin representation.
    """
    return nested_split(8, x, half_spin_representation(octonions(convention)))


def hopf_split(b, x=None, convention="left") -> LieAlgebraMatrixModel:
    """The splitting behind S^{2b-1} = Spin(b+1)/Spin(b-1) for b = 4 or 8."""
    alg = {4: quaternions, 8: octonions}.get(b)
    if alg is None:
        raise InputError("b must be 4 or 8")
    return nested_split(b, x, half_spin_representation(alg(convention)))


def split_dimensions(model: LieAlgebraMatrixModel):
    s = model.summands
    return (model.dim, len(s["so_b"]), len(s["iso"]), len(s["m_fiber"]), len(s["m_base"]))
