"""Riemannian submersions described on the total space: horizontal projectors,
the A-tensor and the horizontal/A split of the base Ricci tensor."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import jax
import jax.numpy as jnp
import numpy as np

from . import geometry as G
from . import jets
from .errors import InputError
from .geometry import MetricModel


def horizontal_projector_fn(metric_fn, vertical_fn):
    """x -> P_H(x) = I - V (V^T g V)^{-1} V^T g, traceable."""

    def proj(x):
        g = metric_fn(x)
        V = vertical_fn(x)
        n = g.shape[0]
        if V.shape[1] == 0:
            return jnp.eye(n)
        return jnp.eye(n) - V @ jnp.linalg.solve(V.T @ g @ V, V.T @ g)

    return proj


@dataclass
class SubmersionSpec:
    """Total space with its vertical distribution and, optionally, the base and the map.

    ``vertical_fn`` maps a point to an n x k matrix whose columns span the
    vertical space; ``projection`` is the coordinate expression of the submersion
    into ``base`` (both traceable) and is only needed for the pullback check.
    """

    total: MetricModel
    vertical_fn: Callable
    base: Optional[MetricModel] = None
    projection: Optional[Callable] = None
    label: str = ""

    def projector(self):
        return horizontal_projector_fn(self.total.metric_fn, self.vertical_fn)


def _projector_derivative(spec: SubmersionSpec, x, method):
    proj = spec.projector()
    if method == "autodiff":
        fn = spec.total._jitted(("dproj", id(spec.vertical_fn)), lambda: jax.jit(jax.jacfwd(proj)))
        D = np.asarray(fn(jnp.asarray(x)))            # (n, n, n): D[i, j, a] = d_a P_ij
        return np.moveaxis(D, -1, 0), 0.0
    if method == "fd":
        jproj = jax.jit(proj)
        n = x.size
        eye = np.eye(n)
        h = 1e-4 * spec.total.scale

        def at(hh):
            return np.array([(np.asarray(jproj(x + hh * eye[a])) - np.asarray(jproj(x - hh * eye[a]))) / (2 * hh)
                             for a in range(n)])

        d1, d2 = at(h), at(h / 2)
        return (4 * d2 - d1) / 3, float(np.max(np.abs(d2 - d1)) / 3)
    raise InputError(f"unknown differentiation method {method!r}")


def a_tensor(spec: SubmersionSpec, x, method="autodiff"):
    """A as an array A[a, b, :] = A_{e_a} e_b restricted to horizontal inputs.

    For horizontal X, Y: A_X Y = 1/2 P_V (dP_H[X] Y - dP_H[Y] X); the connection
    terms cancel in the antisymmetrization.  Returns (A, P_H, tol) where A acts
    on coordinate vectors after projecting them horizontally.
    """
    x = spec.total.check_point(x)
    D, tol = _projector_derivative(spec, x, method)
    P = np.asarray(jax.jit(spec.projector())(jnp.asarray(x)))
    n = x.size
    PV = np.eye(n) - P
    # raw[a, b] = dP_H[e_a] e_b
    raw = np.einsum("aib->abi", D)
    A = 0.5 * np.einsum("ki,abi->abk", PV, raw - np.swapaxes(raw, 0, 1))
    # restrict both slots to horizontal vectors
    A = np.einsum("abk,ac,bd->cdk", A, P, P)
    return A, P, tol


def a_apply(A, X, Y):
    return np.einsum("abk,a,b->k", A, X, Y)


@dataclass
class RicciSplit:
    ric_base: np.ndarray      # pi^* Ric_B on the frame (None without a base)
    ric_horizontal: np.ndarray
    ric_a: np.ndarray         # sum_i g(A_x e_i, A_y e_i)
    residual: float
    tol: float

    @property
    def oneill_term(self):
        return 3.0 * self.ric_a


def ricci_split(spec: SubmersionSpec, x, horizontal_frame=None, method="autodiff"):
    """Ric^H, Ric^A and pi^*Ric_B on a horizontal frame, with the identity residual.

    Ric^A(x, y) = sum_i g(A_x e_i, A_y e_i) over a horizontal orthonormal frame,
    so that pi^*Ric_B = Ric^H + 3 Ric^A.
    """
    total = spec.total
    x = total.check_point(x)
    g, _, R = total.curvature(x)
    A, P, tol = a_tensor(spec, x, method)
    n = x.size
    hbasis = G.gram_schmidt(g, list((P @ np.eye(n)).T), tol=1e-8)
    E = np.array(hbasis)
    F = E if horizontal_frame is None else np.atleast_2d(np.asarray(horizontal_frame, dtype=float))
    off = np.max(np.abs(F @ g @ (np.eye(n) - P)))
    if off > 1e-8 * max(1.0, float(np.max(np.abs(F)))):
        raise InputError(f"frame is not horizontal (residual {off:.2e})")
    ric_h = np.einsum("ijkl,ai,cj,ck,bl->ab", R, F, E, E, F)
    AE = np.einsum("abk,ia,jb->ijk", A, F, E)          # A_{F_i} E_j
    ric_a = np.einsum("ijk,ljm,km->il", AE, AE, g)
    ric_b = None
    residual = float("nan")
    if spec.base is not None and spec.projection is not None:
        proj = spec.projection
        y = np.asarray(jax.jit(proj)(jnp.asarray(x)))
        J = np.asarray(jax.jit(jax.jacfwd(proj))(jnp.asarray(x)))
        rb = G.ricci(spec.base, y)
        ric_b = (F @ J.T) @ rb @ (J @ F.T)
        residual = float(np.max(np.abs(ric_b - ric_h - 3.0 * ric_a)))
    return RicciSplit(ric_b, 0.5 * (ric_h + ric_h.T), ric_a, residual, tol)
