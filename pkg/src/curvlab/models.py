"""Concrete metric models: flat space, round spheres in stereographic charts,
products, homotheties and a deliberately asymmetric perturbation of S^n."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from .geometry import Box, MetricModel


def _angle(a, b):
    # stable everywhere: |a-b| = 2 sin(d/2), |a+b| = 2 cos(d/2)
    return 2.0 * jnp.arctan2(jnp.linalg.norm(a - b), jnp.linalg.norm(a + b))


def flat(n: int, label=None) -> MetricModel:
    eye = jnp.eye(n)
    return MetricModel(
        n,
        lambda x: eye + 0.0 * x[0],
        label=label or f"flat-R{n}",
        point_distance=lambda a, b: jnp.linalg.norm(a - b),
    )


def stereo_to_sphere(x):
    """Chart point -> unit sphere in R^{n+1}; the origin maps to +e_{n+1}."""
    r2 = jnp.dot(x, x)
    return jnp.concatenate([2.0 * x, jnp.array([1.0 - r2])]) / (1.0 + r2)


def sphere_to_stereo(y):
    return y[:-1] / (1.0 + y[-1])


@dataclass(frozen=True)
class SphereChart:
    """Stereographic chart of the round sphere of given radius.

    ``frame`` is an orthogonal (n+1) x (n+1) matrix placing the chart: the
    ambient point is ``frame @ stereo_to_sphere(x)``.  ``flip`` selects the
    chart centred at the antipode of the chart origin.
    """

    n: int
    radius: float
    frame: np.ndarray
    flip: bool = False

    def _reflect(self):
        s = np.ones(self.n + 1)
        if self.flip:
            s[-1] = -1.0
        return jnp.asarray(s)

    def to_ambient(self, x):
        return jnp.asarray(self.frame) @ (self._reflect() * stereo_to_sphere(x))

    def from_ambient(self, y):
        return sphere_to_stereo(self._reflect() * (jnp.asarray(self.frame).T @ y))

    def model(self, label) -> MetricModel:
        r2 = self.radius ** 2
        n = self.n
        eye = jnp.eye(n)

        def metric(x):
            return 4.0 * r2 / (1.0 + jnp.dot(x, x)) ** 2 * eye

        rad = self.radius

        def dist(a, b):
            return rad * _angle(stereo_to_sphere(a), stereo_to_sphere(b))

        m = MetricModel(n, metric, label=label, domain=Box.cube(n, 60.0), point_distance=dist, scale=1.0)
        m.chart = self
        return m


def transition(src: SphereChart, dst: SphereChart) -> Callable:
    """Chart transition dst^{-1} o src as a traceable map."""
    return lambda x: dst.from_ambient(src.to_ambient(x))


def round_sphere(n: int, radius: float = 1.0, frame=None, flip=False, label=None) -> MetricModel:
    frame = np.eye(n + 1) if frame is None else np.asarray(frame, dtype=float)
    chart = SphereChart(n, float(radius), frame, flip)
    return chart.model(label or (f"round-S{n}" if radius == 1.0 else f"round-S{n}({radius:g})"))


def sphere_atlas(n: int, radius: float = 1.0, frame=None):
    """The two stereographic charts of one round sphere, with their transition."""
    north = round_sphere(n, radius, frame)
    south = round_sphere(n, radius, frame, flip=True, label=north.label + "/south")
    return north, south, transition(north.chart, south.chart)


def pushforward(phi: Callable, x, v):
    """(phi(x), dphi_x(v))."""
    y, w = jax.jvp(phi, (jnp.asarray(x, dtype=float),), (jnp.asarray(v, dtype=float),))
    return np.asarray(y), np.asarray(w)


def scaled(model: MetricModel, c: float, label=None) -> MetricModel:
    fn = model.metric_fn
    pd = model.point_distance
    out = MetricModel(
        model.dim,
        lambda x: c * c * fn(x),
        label=label or f"{c:g}^2*{model.label}",
        domain=model.domain,
        traceable=model.traceable,
        point_distance=(lambda a, b: c * pd(a, b)) if pd is not None else None,
        scale=model.scale,
    )
    return out


def product(m1: MetricModel, m2: MetricModel, label=None) -> MetricModel:
    n1, n2 = m1.dim, m2.dim
    f1, f2 = m1.metric_fn, m2.metric_fn

    def metric(x):
        a = f1(x[:n1])
        b = f2(x[n1:])
        top = jnp.concatenate([a, jnp.zeros((n1, n2))], axis=1)
        bot = jnp.concatenate([jnp.zeros((n2, n1)), b], axis=1)
        return jnp.concatenate([top, bot], axis=0)

    lo = np.concatenate([m1.domain.lo, m2.domain.lo])
    hi = np.concatenate([m1.domain.hi, m2.domain.hi])
    pd = None
    if m1.point_distance is not None and m2.point_distance is not None:
        p1, p2 = m1.point_distance, m2.point_distance
        pd = lambda a, b: jnp.sqrt(p1(a[:n1], b[:n1]) ** 2 + p2(a[n1:], b[n1:]) ** 2)
    return MetricModel(n1 + n2, metric, label=label or f"{m1.label}x{m2.label}",
                       domain=Box(lo, hi), point_distance=pd)


def perturbed_sphere(n: int = 3, eta: float = 0.15, label=None) -> MetricModel:
    """Round S^n chart metric plus a smooth, symmetry-breaking rank-one term."""
    eye = jnp.eye(n)

    def metric(x):
        w = jnp.concatenate([jnp.array([1.0 + 0.7 * x[1] + 0.3 * x[0] * x[-1]]),
                             0.5 * x[1:] + 0.4 * x[0] ** 2])
        return 4.0 / (1.0 + jnp.dot(x, x)) ** 2 * (eye + eta * jnp.outer(w, w))

    return MetricModel(n, metric, label=label or f"perturbed-S{n}", domain=Box.cube(n, 10.0))
