"""Soft-thresholding transform and its prior sparsity arithmetic.

The latent field is standardized to unit marginal variance, so a threshold
``lam`` translates directly into a prior nonzero probability of
``2 * Phi(-lam)`` at every location.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr


@dataclass(frozen=True)
class ThresholdLevel:
    """Nonnegative threshold, in units of the (unit-variance) latent field."""

    value: float

    def __post_init__(self):
        if not np.isfinite(self.value) or self.value < 0:
            raise ValueError(f"threshold must be finite and >= 0, got {self.value}")


def _as_level(lam) -> float:
    if isinstance(lam, ThresholdLevel):
        return lam.value
    return ThresholdLevel(float(lam)).value


def soft_threshold(x: float, lam) -> float:
    """Map x to 0 if |x| <= lam, else shrink its magnitude by lam.

    Exact ties |x| == lam map to 0; the branch test carries no tolerance so
    sparsity patterns are deterministic in floating point.
    """
    lam = _as_level(lam)
    ax = abs(x)
    if ax <= lam:
        return 0.0
    return math.copysign(ax - lam, x)


def soft_threshold_field(xs, lam) -> np.ndarray:
    """Elementwise soft threshold of a latent field vector."""
    lam = _as_level(lam)
    xs = np.asarray(xs, dtype=float)
    return np.sign(xs) * np.maximum(np.abs(xs) - lam, 0.0)


def prior_inclusion_probability(lam) -> float:
    """Prior probability that a unit-variance latent value survives the
    threshold: 2 * Phi(-lam)."""
    lam = _as_level(lam)
    return float(2.0 * ndtr(-lam))
