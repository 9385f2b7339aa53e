"""Curvature lab: conformal and Cheeger deformations toward positive curvature."""

from . import jets  # noqa: F401  (enables 64-bit jax before anything else)

__version__ = "0.1.0"
