"""Synthetic data generation for the simulation study.

Images live on the integer grid {1,...,m}^2 with either exponential
covariance or a structure shared with the true coefficient image. The two
true images ("five_peaks", "triangle") are parametric reconstructions:
continuous, exactly zero outside compact supports, piecewise smooth
inside, with support fractions fixed relative to the grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

FIVE_PEAK_CENTERS = ((0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75),
                     (0.5, 0.5))
FIVE_PEAK_RADIUS = 1.8 / 29.0        # relative to the grid span
FIVE_PEAK_CUT = 0.05
TRIANGLE_VERTICES = ((0.2, 0.2), (0.85, 0.35), (0.4, 0.85))


@dataclass(frozen=True)
class TrueCoefficient:
    m: int
    beta0: np.ndarray        # (m*m,)
    labels: np.ndarray       # sign of beta0, in {-1, 0, +1}

    @property
    def p(self) -> int:
        return self.m * self.m


def grid_locations(m: int) -> np.ndarray:
    """Raster-order coordinates of the {1..m} x {1..m} grid."""
    axis = np.arange(1.0, m + 1.0)
    ii, jj = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([ii.ravel(), jj.ravel()])


def make_true_beta(shape: str, m: int, amplitude: float = 1.0) -> TrueCoefficient:
    """Parametric truth image on the m x m grid.

    five_peaks: five truncated radial bumps with peak `amplitude`.
    triangle: smoothstep ramp of the scaled minimum barycentric coordinate
    over a triangular support, peaking at `amplitude` at the centroid.
    """
    if m < 10:
        raise ValueError("grid side must be at least 10")
    rel = (grid_locations(m) - 1.0) / (m - 1.0)
    if shape == "five_peaks":
        beta = np.zeros(m * m)
        for cx, cy in FIVE_PEAK_CENTERS:
            d2 = (rel[:, 0] - cx) ** 2 + (rel[:, 1] - cy) ** 2
            bump = np.exp(-d2 / (2.0 * FIVE_PEAK_RADIUS ** 2)) - FIVE_PEAK_CUT
            bump = np.maximum(bump, 0.0) / (1.0 - FIVE_PEAK_CUT)
            beta = np.maximum(beta, amplitude * bump)
    elif shape == "triangle":
        v1, v2, v3 = (np.asarray(v) for v in TRIANGLE_VERTICES)
        T = np.column_stack([v1 - v3, v2 - v3])
        b12 = np.linalg.solve(T, (rel - v3).T).T
        bary = np.column_stack([b12, 1.0 - b12.sum(axis=1)])
        t = 3.0 * np.clip(bary.min(axis=1), 0.0, None)
        beta = amplitude * t * t * (3.0 - 2.0 * t)
    else:
        raise ValueError(f"unknown truth shape {shape!r}")
    return TrueCoefficient(m=m, beta0=beta, labels=np.sign(beta))


_chol_cache: dict = {}


def _exp_cov_cholesky(m: int, theta_x: float) -> np.ndarray:
    key = (m, float(theta_x))
    if key not in _chol_cache:
        D = squareform(pdist(grid_locations(m)))
        C = np.exp(-D / theta_x)
        try:
            L = np.linalg.cholesky(C)
        except np.linalg.LinAlgError:
            C[np.diag_indices_from(C)] += 1e-10
            L = np.linalg.cholesky(C)
        _chol_cache[key] = L
    return _chol_cache[key]


def sample_exp_images(m: int, theta_x: float, n: int,
                      rng: np.random.Generator) -> np.ndarray:
    """n independent zero-mean unit-variance fields with covariance
    exp(-d/theta_x) in grid-unit distance d."""
    if theta_x <= 0:
        raise ValueError("theta_x must be positive")
    L = _exp_cov_cholesky(m, theta_x)
    return rng.standard_normal((n, m * m)) @ L.T


def sample_shared_structure_images(m: int, upsilon: float, n: int,
                                   rng: np.random.Generator,
                                   beta0: TrueCoefficient) -> np.ndarray:
    """X_i = X~_i/2 + e_i beta0 with X~ exponential (range 3) and
    e_i ~ N(0, upsilon^2), so images share structure with the signal."""
    if beta0.m != m:
        raise ValueError("beta0 grid side disagrees with m")
    base = sample_exp_images(m, 3.0, n, rng)
    e = upsilon * rng.standard_normal(n)
    return base / 2.0 + e[:, None] * beta0.beta0[None, :]


def generate_gaussian_response(X: np.ndarray, beta0, sigma: float,
                               rng: np.random.Generator) -> np.ndarray:
    """Y_i = X_i'beta0 + sigma * eps_i (raw inner product, no p^{-1/2})."""
    b = beta0.beta0 if isinstance(beta0, TrueCoefficient) else np.asarray(beta0)
    if X.shape[1] != len(b):
        raise ValueError("X and beta0 disagree on the number of locations")
    return X @ b + sigma * rng.standard_normal(X.shape[0])


def generate_probit_response(X: np.ndarray, beta0,
                             rng: np.random.Generator) -> np.ndarray:
    """Y_i = 1{X_i'beta0 + eps_i > 0} with standard normal noise."""
    b = beta0.beta0 if isinstance(beta0, TrueCoefficient) else np.asarray(beta0)
    if X.shape[1] != len(b):
        raise ValueError("X and beta0 disagree on the number of locations")
    return (X @ b + rng.standard_normal(X.shape[0]) > 0.0).astype(float)
