"""Radial shape functions phi^sigma and the stationary shape-parameter rule."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

KINDS = ("wendland42", "gaussian")

# Gaussian weights below this are dropped during sparse assembly.
GAUSSIAN_CUTOFF = 1e-14


@dataclass(frozen=True)
class ShapeFunction:
    """A radial profile with shape parameter ``sigma`` (units 1/distance).

    ``wendland42`` is ``max(0, (1 - sigma r)^4 (4 sigma r + 1))``, supported on
    ``r < 1/sigma``; ``gaussian`` is ``exp(-(sigma r)^2)``.
    """

    kind: str = "wendland42"
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KINDS}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma}")

    def __call__(self, r):
        return eval_shape(self, r)

    @property
    def support_radius_normalized(self) -> float:
        """Support radius of the same profile at sigma = 1."""
        return 1.0 if self.kind == "wendland42" else math.inf

    @property
    def cutoff_radius(self) -> float:
        """Finite radius beyond which weights are treated as zero."""
        if self.kind == "wendland42":
            return 1.0 / self.sigma
        return math.sqrt(-math.log(GAUSSIAN_CUTOFF)) / self.sigma


def eval_shape(k: ShapeFunction, r):
    """Evaluate phi^sigma at distance(s) ``r`` (scalar or array)."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0) or np.any(np.isnan(r_arr)):
        raise ValueError("shape functions are defined for r >= 0 only")
    t = k.sigma * r_arr
    if k.kind == "wendland42":
        out = np.where(t < 1.0, (1.0 - np.minimum(t, 1.0)) ** 4 * (4.0 * t + 1.0), 0.0)
    else:
        out = np.exp(-(t * t))
    if np.ndim(r) == 0:
        return float(out)
    return out


def support_radius(k: ShapeFunction) -> float:
    if k.kind == "wendland42":
        return 1.0 / k.sigma
    return math.inf


def sigma_from_fill(c_sigma: float, h: float) -> float:
    """Stationary scaling ``sigma = c_sigma / h``."""
    if not (c_sigma > 0 and h > 0):
        raise ValueError(f"c_sigma and h must be positive, got {c_sigma}, {h}")
    return c_sigma / h
