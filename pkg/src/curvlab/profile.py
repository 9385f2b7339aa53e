"""Radial bump profiles for conformal changes concentrated near a submanifold.

The profile is a C^4 piecewise polynomial with knots 0 < s1 < s2 < s3:

* on [0, s1] the second derivative is the constant -c, so the profile is an
  even quadratic near 0 and f = rho(dist) is smooth across the submanifold;
* on [s1, s2] the second derivative is released to 0 with a quintic smoothstep;
* on [s2, s3] a small positive bump returns the slope to zero;
* beyond s3 every piece is the literal constant 0.

``c`` sits at the middle of the admissible band (K + 1 - minsec, K + 2 - minsec).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import jax.numpy as jnp
import numpy as np
from numpy.polynomial import polynomial as P

from .certificates import fmt
from .errors import FeasibilityError, ParameterError

SIGMA1_FLOOR = 1e-7
GRID_POINTS = 20001
_SAFETY = 0.9


@dataclass
class BumpProfile:
    K: float
    eps: float
    delta: float
    sigma1: float
    sigma2: float
    sigma3: float
    minsec: float
    pieces: list            # per interval: ascending coefficients in (t - knot)
    c: float = 0.0
    bump_height: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def knots(self):
        return [0.0, self.sigma1, self.sigma2, self.sigma3]

    @property
    def trivial(self):
        return self.c == 0.0

    # -- evaluation ------------------------------------------------------
    def _locate(self, t):
        k = np.asarray(self.knots)
        return np.clip(np.searchsorted(k, t, side="right") - 1, 0, 3)

    def derivative(self, t, order=0):
        """rho^(order) at t >= 0 (numpy, vectorised)."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ParameterError("profile is defined on [0, inf)")
        idx = self._locate(t)
        out = np.zeros_like(t)
        for i in range(3):
            mask = idx == i
            if np.any(mask):
                coef = self.pieces[i]
                for _ in range(order):
                    coef = P.polyder(coef)
                out[mask] = P.polyval(t[mask] - self.knots[i], coef)
        return out if out.ndim else float(out)

    def __call__(self, t):
        return self.derivative(t, 0)

    def traced(self):
        """rho as a jax-traceable function, exactly 0.0 for t >= sigma3."""
        knots = [float(k) for k in self.knots]
        coefs = [np.asarray(c, dtype=float) for c in self.pieces]

        def horner(coef, s):
            acc = jnp.zeros_like(s) + coef[-1]
            for a in coef[-2::-1]:
                acc = acc * s + a
            return acc

        def rho(t):
            val = jnp.zeros_like(t)
            for i in (2, 1, 0):
                lo, hi = knots[i], knots[i + 1]
                s = jnp.clip(t, lo, hi) - lo
                val = jnp.where((t >= lo) & (t < hi), horner(coefs[i], s), val)
            return jnp.where(t >= knots[3], 0.0, val)

        return rho

    # -- serialisation ---------------------------------------------------
    def to_dict(self):
        return {
            "K": fmt(self.K), "eps": fmt(self.eps), "delta": fmt(self.delta),
            "minsec": fmt(self.minsec), "c": fmt(self.c), "bump_height": fmt(self.bump_height),
            "knots": [fmt(k) for k in self.knots],
            "pieces": [[fmt(a) for a in coef] for coef in self.pieces],
        }

    @classmethod
    def from_dict(cls, d):
        knots = [float(k) for k in d["knots"]]
        return cls(
            K=float(d["K"]), eps=float(d["eps"]), delta=float(d["delta"]),
            sigma1=knots[1], sigma2=knots[2], sigma3=knots[3], minsec=float(d["minsec"]),
            pieces=[np.array([float(a) for a in coef]) for coef in d["pieces"]],
            c=float(d["c"]), bump_height=float(d["bump_height"]),
        )

    # -- certification ---------------------------------------------------
    def grid(self, n=GRID_POINTS):
        t = np.concatenate([np.linspace(0.0, self.sigma1, n // 4),
                            np.linspace(self.sigma1, self.sigma2, n // 4),
                            np.linspace(self.sigma2, self.sigma3, n // 2),
                            np.linspace(self.sigma3, 2 * self.sigma3, 64)])
        return np.unique(t)

    def conditions(self, n=GRID_POINTS):
        """Margins of the six defining conditions; each is satisfied iff its margin > 0
        (condition 1 and 6 are equalities checked to 1e-10)."""
        t = self.grid(n)
        r0, r1, r2 = (self.derivative(t, k) for k in range(3))
        out = {}
        odd = max(abs(self.derivative(0.0, 1)), abs(self.derivative(0.0, 3)))
        out["1_odd_derivatives_at_0"] = 1e-10 - odd
        inner = t <= self.sigma1
        band = -r2[inner] + self.minsec
        if self.trivial:
            # the base already clears K + 1; no band is needed
            out["2_band"] = self.minsec - (self.K + 1)
        else:
            out["2_band"] = min(np.min(band - (self.K + 1)), np.min(self.K + 2 - band))
        tol = 1e-14 * max(1.0, self.c)
        near = t <= self.sigma2
        out["3_concave_and_decreasing"] = -max(np.max(r2[near]), np.max(r1)) + tol
        far = t > self.sigma2
        out["4_small_convex_tail"] = min(np.min(r2[far]) + tol, self.delta - np.max(r2[far]))
        out["5_c1_small"] = self.delta - np.max(np.abs(r1) + np.abs(r0))
        beyond = t >= self.sigma3
        out["6_support"] = 1e-300 - np.max(np.abs(r0[beyond])) if np.any(beyond) else 1.0
        return out

    def check(self, n=GRID_POINTS):
        return {k: v > 0 for k, v in self.conditions(n).items()}


def _pieces(c, s1, s3):
    """Local coefficients of rho on [0,s1], [s1,2 s1], [2 s1,s3] and the bump height."""
    s2 = 2 * s1
    L = s3 - s2
    if L <= 0:
        raise ParameterError("sigma2 must stay below sigma3")
    # second derivatives in local variable s
    d0 = np.array([-c])
    smooth = np.array([0, 0, 0, 10, -15, 6], dtype=float) / s1 ** np.arange(6)
    d1 = -c * (np.r_[1.0, np.zeros(5)] - smooth)
    # integral of 64 (u(1-u))^3 over [0,1] is 64/140
    height = 1.5 * c * s1 * 140.0 / (64.0 * L) if c else 0.0
    d2 = height * 64.0 * np.array([0, 0, 0, 1, -3, 3, -1], dtype=float) / L ** np.arange(7)
    widths = [s1, s1, L]
    firsts, slope = [], 0.0
    for d, w in zip((d0, d1, d2), widths):
        p1 = P.polyint(d, k=slope)
        firsts.append(p1)
        slope = P.polyval(w, p1)
    values, level = [], 0.0
    for p1, w in zip(firsts, widths):
        p0 = P.polyint(p1, k=level)
        values.append(p0)
        level = P.polyval(w, p0)
    # shift so that rho(s3) = 0
    for p0 in values:
        p0[0] -= level
    return values, height


def _assemble(K, eps, delta, minsec, c, s1, s3):
    if c == 0.0:
        pieces = [np.zeros(1), np.zeros(1), np.zeros(1)]
        height = 0.0
    else:
        pieces, height = _pieces(c, s1, s3)
    return BumpProfile(K, eps, delta, s1, 2 * s1, s3, minsec, pieces, c, height)


def _budget(prof: BumpProfile):
    """Worst ratio of a condition-4/5 quantity to the delta budget, and the binding condition.

    Condition 5 is named whenever it is violated, since the slope it bounds is
    what forces the tail bump of condition 4.
    """
    if prof.trivial:
        return 0.0, None
    t = np.linspace(prof.sigma1, prof.sigma3, 4001)
    c1 = float(np.max(np.abs(prof.derivative(t, 1)) + np.abs(prof.derivative(t, 0))))
    c1 = max(c1, abs(prof.derivative(0.0, 0)))
    r5 = c1 / prof.delta
    r4 = prof.bump_height / prof.delta
    if r5 >= 1.0 or r5 >= r4:
        return max(r4, r5), "condition 5: |rho'| + |rho| < delta"
    return r4, "condition 4: rho'' < delta beyond sigma2"


def build_profile(K, eps, minsec, inj_bound, sigma1=None, delta=None) -> BumpProfile:
    """Construct a certified radial profile for target K and budget eps.

    ``sigma1`` may be fixed by the caller; by default the largest value whose
    C^1 budget fits under 0.9 delta is found by bisection.
    """
    if not (K > 0 and eps > 0 and inj_bound > 0):
        raise ParameterError("K, eps and inj_bound must be positive")
    delta = min(eps / 10.0, 1e-2) if delta is None else float(delta)
    s3 = 0.96 * min(inj_bound / 2.0, 0.25)
    c = K + 1.5 - minsec
    if c <= 0:
        prof = _assemble(K, eps, delta, minsec, 0.0, s3 / 8, s3)
        prof.notes.append("base curvature already exceeds K + 1.5; profile is identically zero")
        return prof

    if sigma1 is not None:
        if not 0 < sigma1 < s3 / 2:
            raise ParameterError(f"sigma1 must lie in (0, {s3 / 2:.4g})")
        prof = _assemble(K, eps, delta, minsec, c, float(sigma1), s3)
        ratio, which = _budget(prof)
        if ratio >= 1.0:
            raise FeasibilityError(
                f"sigma1={sigma1:.3g} needs {ratio:.3g} x the delta budget {delta:.3g}", which)
        return prof

    lo, hi = math.log(SIGMA1_FLOOR), math.log(s3 / 4)
    floor = _assemble(K, eps, delta, minsec, c, SIGMA1_FLOOR, s3)
    ratio, which = _budget(floor)
    if ratio > _SAFETY:
        raise FeasibilityError(
            f"even sigma1={SIGMA1_FLOOR:g} needs {ratio:.3g} x the delta budget {delta:.3g}", which)
    top = _assemble(K, eps, delta, minsec, c, s3 / 4, s3)
    if _budget(top)[0] <= _SAFETY:
        return top
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _budget(_assemble(K, eps, delta, minsec, c, math.exp(mid), s3))[0] <= _SAFETY:
            lo = mid
        else:
            hi = mid
    return _assemble(K, eps, delta, minsec, c, math.exp(lo), s3)
