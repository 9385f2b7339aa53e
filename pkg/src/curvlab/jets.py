"""Metric jets (g, dg, d2g) and the coordinate curvature algebra built on them.

Two independent routes produce a jet: nested forward-mode autodiff for
traceable metric evaluators, and Richardson-extrapolated central differences
for anything else.  The curvature formulas below are written once against an
array namespace so both routes share them.
"""

from __future__ import annotations

import jax
import jax.numpy as jnp
import numpy as np

jax.config.update("jax_enable_x64", True)

EPS = np.finfo(float).eps


def christoffel_from_jet(xp, g, dg):
    """Second-kind symbols gamma[k, i, j] from g and dg[k, i, j] = d_k g_ij."""
    ginv = xp.linalg.inv(g)
    first = 0.5 * (
        xp.einsum("ilj->lij", dg) + xp.einsum("jli->lij", dg) - dg
    )
    return xp.einsum("kl,lij->kij", ginv, first), ginv, first


def riemann_from_jet(xp, g, dg, ddg):
    """Fully covariant R[i, j, k, l] = g(R(d_i, d_j) d_k, d_l).

    Convention: R(X,Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z,
    so R(X, Y, Y, X) is positive on round spheres.
    ddg[a, b, i, j] = d_a d_b g_ij.
    """
    gamma, ginv, first = christoffel_from_jet(xp, g, dg)
    # d_a of first-kind symbols: dfirst[a, l, i, j]
    dfirst = 0.5 * (xp.einsum("ailj->alij", ddg) + xp.einsum("ajli->alij", ddg) - ddg)
    dginv = -xp.einsum("km,amn,nl->akl", ginv, dg, ginv)
    # dgamma[a, k, i, j] = d_a gamma^k_ij
    dgamma = xp.einsum("akl,lij->akij", dginv, first) + xp.einsum("kl,alij->akij", ginv, dfirst)
    # R^l_{ijk} = d_i G^l_jk - d_j G^l_ik + G^l_im G^m_jk - G^l_jm G^m_ik
    rup = (
        xp.einsum("iljk->ijkl", dgamma)
        - xp.einsum("jlik->ijkl", dgamma)
        + xp.einsum("lim,mjk->ijkl", gamma, gamma)
        - xp.einsum("ljm,mik->ijkl", gamma, gamma)
    )
    return xp.einsum("ijkm,ml->ijkl", rup, g)


def _autodiff_jet(metric_fn):
    def jet(x):
        g = metric_fn(x)
        dg = jnp.moveaxis(jax.jacfwd(metric_fn)(x), -1, 0)
        ddg = jax.jacfwd(jax.jacfwd(metric_fn))(x)
        ddg = jnp.moveaxis(jnp.moveaxis(ddg, -1, 0), -1, 0)
        return g, dg, ddg

    return jet


def autodiff_jet_fn(metric_fn):
    """Jitted x -> (g, dg, ddg) with derivative axes first."""
    return jax.jit(_autodiff_jet(metric_fn))


def autodiff_first_jet_fn(metric_fn):
    def jet(x):
        return metric_fn(x), jnp.moveaxis(jax.jacfwd(metric_fn)(x), -1, 0)

    return jax.jit(jet)


def autodiff_curvature_fn(metric_fn):
    """Jitted x -> (g, gamma, riemann) evaluated entirely inside jax."""
    jet = _autodiff_jet(metric_fn)

    def curv(x):
        g, dg, ddg = jet(x)
        gamma, _, _ = christoffel_from_jet(jnp, g, dg)
        return g, gamma, riemann_from_jet(jnp, g, dg, ddg)

    return jax.jit(curv)


def fd_jet(metric_at, x, scale=1.0, h1=None, h2=None):
    """Central-difference jet with one Richardson step.

    Returns (g, dg, ddg, gap) where gap is the max extrapolation discrepancy
    between step h and h/2, used as the reported tolerance.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    h1 = EPS ** (1.0 / 3.0) * scale * 8.0 if h1 is None else h1
    h2 = EPS ** (1.0 / 5.0) * scale if h2 is None else h2
    g0 = np.asarray(metric_at(x), dtype=float)
    eye = np.eye(n)

    def first(h):
        out = np.empty((n,) + g0.shape)
        for k in range(n):
            out[k] = (metric_at(x + h * eye[k]) - metric_at(x - h * eye[k])) / (2 * h)
        return out

    def second(h):
        out = np.empty((n, n) + g0.shape)
        for a in range(n):
            for b in range(a, n):
                pp = metric_at(x + h * (eye[a] + eye[b]))
                pm = metric_at(x + h * (eye[a] - eye[b]))
                mp = metric_at(x - h * (eye[a] - eye[b]))
                mm = metric_at(x - h * (eye[a] + eye[b]))
                out[a, b] = out[b, a] = (pp - pm - mp + mm) / (4 * h * h)
        return out

    d_h, d_h2 = first(h1), first(h1 / 2)
    dg = (4 * d_h2 - d_h) / 3
    s_h, s_h2 = second(h2), second(h2 / 2)
    ddg = (4 * s_h2 - s_h) / 3
    gap = max(np.max(np.abs(d_h2 - d_h)) / 3, np.max(np.abs(s_h2 - s_h)) / 3)
    return g0, dg, ddg, float(gap)
