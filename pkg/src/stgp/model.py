"""Datasets, coefficient-field state, and likelihood evaluation.

The linear predictor is eta_i = W_i'alpha + p^{-1/2} X_i'beta with
beta(s_j) = sigma_a * g_lam(beta_tilde(s_j)). Knot updates touch only the
locations inside one kernel column's compact support, so likelihood deltas
cost O(|support| * n) instead of a full recompute.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtr, ndtri

from .spatial import KernelSystem, SpatialDomain
from .threshold import soft_threshold_field


@dataclass(frozen=True)
class NormalizationRecord:
    """Per-column centers/scales applied to a dataset (identity = raw)."""

    y_center: float
    y_scale: float
    w_center: np.ndarray
    w_scale: np.ndarray
    x_center: np.ndarray
    x_scale: np.ndarray


@dataclass(frozen=True)
class Dataset:
    """Responses, scalar covariates, image predictors and their locations."""

    y: np.ndarray          # (n,)
    W: np.ndarray          # (n, q), q may be 0
    X: np.ndarray          # (n, p)
    domain: SpatialDomain
    norm: NormalizationRecord = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        W = np.asarray(self.W, dtype=float)
        if W.ndim == 1:
            W = W.reshape(len(y), -1)
        X = np.asarray(self.X, dtype=float)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "X", X)
        n = len(y)
        if n < 1:
            raise ValueError("dataset needs at least one subject")
        if W.shape[0] != n or X.shape[0] != n:
            raise ValueError("y, W, X disagree on the number of subjects")
        if X.shape[1] != self.domain.p:
            raise ValueError(
                f"X has {X.shape[1]} image columns but there are "
                f"{self.domain.p} locations"
            )
        for name, arr in (("y", y), ("W", W), ("X", X)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def q(self) -> int:
        return self.W.shape[1]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def image_scale(self) -> float:
        """The p^{-1/2} normalizer applied to the image term."""
        return 1.0 / np.sqrt(self.p)


def _is_intercept(col: np.ndarray) -> bool:
    return np.all(col == 1.0)


def normalize_dataset(data: Dataset, mode: str = "gaussian",
                      allow_constant_columns: bool = False) -> Dataset:
    """Center/scale Y (Gaussian mode), W and X to zero mean, unit variance.

    An all-ones intercept column in W is left untouched. Binary probit
    responses are never rescaled. Moments use the 1/n convention. The
    record of centers/scales is kept for back-transforming coefficients.
    """
    if mode not in ("gaussian", "probit"):
        raise ValueError(f"unknown mode {mode!r}")
    y = data.y.copy()
    if mode == "gaussian":
        yc = float(np.mean(y))
        ys = float(np.std(y))
        if ys == 0.0:
            raise ValueError("response has zero variance")
        y = (y - yc) / ys
    else:
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise ValueError("probit mode requires y in {0, 1}")
        yc, ys = 0.0, 1.0

    W = data.W.copy()
    wc = np.zeros(data.q)
    ws = np.ones(data.q)
    for k in range(data.q):
        col = W[:, k]
        if _is_intercept(col):
            continue
        c, s = float(np.mean(col)), float(np.std(col))
        if s == 0.0:
            raise ValueError(f"scalar covariate column w_{k + 1} has zero variance")
        W[:, k] = (col - c) / s
        wc[k], ws[k] = c, s

    X = data.X.copy()
    xc = X.mean(axis=0)
    xs = X.std(axis=0)
    zero = xs == 0.0
    if np.any(zero) and not allow_constant_columns:
        j = int(np.flatnonzero(zero)[0])
        raise ValueError(f"image column x_{j + 1} has zero variance")
    xs = np.where(zero, 1.0, xs)
    X = (X - xc) / xs

    norm = NormalizationRecord(y_center=yc, y_scale=ys, w_center=wc,
                               w_scale=ws, x_center=xc, x_scale=xs)
    return replace(data, y=y, W=W, X=X, norm=norm)


def original_scale_coefficients(beta_model: np.ndarray, data: Dataset) -> np.ndarray:
    """Map model-scale beta to per-raw-unit effects on the raw response.

    Applies the p^{-1/2} factor and undoes the column scaling, so the
    result is comparable to a generator's raw-scale coefficient image.
    """
    beta_model = np.asarray(beta_model, dtype=float)
    norm = data.norm
    y_scale = 1.0 if norm is None else norm.y_scale
    x_scale = np.ones(data.p) if norm is None else norm.x_scale
    return y_scale * data.image_scale * beta_model / x_scale


class ModelState:
    """Mutable sampler state: parameters plus derived caches.

    Caches: ka = K a (unstandardized field), beta_tilde = ka / w,
    beta = sigma_a * g_lam(beta_tilde), eta = W alpha + p^{-1/2} X beta.
    A single chain owns a single state.
    """

    def __init__(self, data: Dataset, ks: KernelSystem, *, alpha, a, sigma_a,
                 lam, sigma2, mode="gaussian", z=None):
        self.ks = ks
        self.alpha = np.asarray(alpha, dtype=float).ravel()
        self.a = np.asarray(a, dtype=float).ravel()
        self.sigma_a = float(sigma_a)
        self.lam = float(lam)
        self.sigma2 = float(sigma2)
        self.mode = mode
        if mode not in ("gaussian", "probit"):
            raise ValueError(f"unknown mode {mode!r}")
        if self.sigma_a <= 0:
            raise ValueError("sigma_a must be positive")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        self.z = None if z is None else np.asarray(z, dtype=float).ravel()
        self._workspace = None
        self.refresh_caches(data)

    @property
    def theta(self) -> float:
        return self.ks.car.theta

    @property
    def car(self):
        return self.ks.car

    def response(self, data: Dataset) -> np.ndarray:
        """Gaussian working response: y, or the probit latents z."""
        if self.mode == "probit":
            if self.z is None:
                raise RuntimeError("probit latents not initialized")
            return self.z
        return data.y

    @property
    def noise_variance(self) -> float:
        """sigma^2 in gaussian mode; fixed at 1 under probit augmentation."""
        return 1.0 if self.mode == "probit" else self.sigma2

    def refresh_caches(self, data: Dataset):
        self.ka = self.ks.K @ self.a
        self.beta_tilde = self.ka * self.ks.winv
        self.beta = self.sigma_a * soft_threshold_field(self.beta_tilde, self.lam)
        self.eta_cov = data.W @ self.alpha
        self.eta_img = data.image_scale * (data.X @ self.beta)
        self.eta = self.eta_cov + self.eta_img

    def set_field(self, data: Dataset, beta_tilde, beta, eta):
        """Install precomputed field caches (used by accepted MH moves)."""
        self.beta_tilde = beta_tilde
        self.beta = beta
        self.eta = eta
        self.eta_img = eta - self.eta_cov

    def workspace(self, data: Dataset) -> "DeltaWorkspace":
        if self._workspace is None or self._workspace.X is not data.X:
            self._workspace = DeltaWorkspace(data, self.ks)
        return self._workspace


class DeltaWorkspace:
    """Per-knot contiguous X column blocks for fast likelihood deltas.

    The sparsity pattern of the kernel matrix (hence the per-knot support)
    does not depend on theta, so this survives dependence updates.
    """

    def __init__(self, data: Dataset, ks: KernelSystem):
        self.X = data.X
        self.X_cols = [np.ascontiguousarray(data.X[:, idx]) for idx in ks.col_index]


def linear_predictor(state: ModelState, data: Dataset) -> np.ndarray:
    """eta_i = W_i'alpha + p^{-1/2} X_i'beta; refreshes the eta cache."""
    state.eta_cov = data.W @ state.alpha
    state.eta_img = data.image_scale * (data.X @ state.beta)
    state.eta = state.eta_cov + state.eta_img
    return state.eta


def coefficient_field(a, ks: KernelSystem, lam: float, sigma_a: float):
    """(beta_tilde, beta) for knot coefficients a."""
    beta_tilde = ks.latent_field(np.asarray(a, dtype=float))
    beta = sigma_a * soft_threshold_field(beta_tilde, lam)
    return beta_tilde, beta


def gaussian_loglik(state: ModelState, data: Dataset) -> float:
    """Gaussian log likelihood of the working response given eta."""
    s2 = state.noise_variance
    if s2 <= 0:
        raise ValueError("noise variance must be positive")
    r = state.response(data) - state.eta
    n = data.n
    return float(-0.5 * n * np.log(2 * np.pi * s2) - 0.5 * (r @ r) / s2)


class PendingKnotUpdate:
    __slots__ = ("l", "a_new", "idx", "beta_tilde_new", "beta_new", "delta_eta")

    def __init__(self, l, a_new, idx, beta_tilde_new, beta_new, delta_eta):
        self.l = l
        self.a_new = a_new
        self.idx = idx
        self.beta_tilde_new = beta_tilde_new
        self.beta_new = beta_new
        self.delta_eta = delta_eta


def loglik_delta_knot(state: ModelState, data: Dataset, l: int, a_new: float):
    """Log-likelihood change from setting a_l to a_new, touching only the
    support column of knot l. Returns (delta, pending); commit the pending
    update with apply_knot_update on acceptance."""
    ks = state.ks
    idx = ks.col_index[l]
    delta_a = a_new - state.a[l]
    beta_tilde_new = state.beta_tilde[idx] + ks.col_tilde[l] * delta_a
    beta_new = state.sigma_a * soft_threshold_field(beta_tilde_new, state.lam)
    dbeta = beta_new - state.beta[idx]
    Xl = state.workspace(data).X_cols[l]
    delta_eta = data.image_scale * (Xl @ dbeta)
    r = state.response(data) - state.eta
    delta = (2.0 * (r @ delta_eta) - delta_eta @ delta_eta) / (2.0 * state.noise_variance)
    pending = PendingKnotUpdate(l, a_new, idx, beta_tilde_new, beta_new, delta_eta)
    return float(delta), pending


def apply_knot_update(state: ModelState, data: Dataset, pending: PendingKnotUpdate):
    """Commit an accepted knot move into all caches."""
    l, idx = pending.l, pending.idx
    delta_a = pending.a_new - state.a[l]
    state.a[l] = pending.a_new
    state.ka[idx] += state.ks.col_raw[l] * delta_a
    state.beta_tilde[idx] = pending.beta_tilde_new
    state.beta[idx] = pending.beta_new
    state.eta += pending.delta_eta
    state.eta_img += pending.delta_eta


# -- truncated normal draws --------------------------------------------------

_TAIL = 6.0


def _truncnorm_std_lower(a: float, rng: np.random.Generator) -> float:
    """Standard normal conditioned on being > a."""
    if a <= _TAIL:
        lo = ndtr(a)
        u = rng.uniform()
        return float(ndtri(lo + u * (1.0 - lo)))
    # exponential rejection for the deep tail (numerically safe for any a)
    lam = 0.5 * (a + np.sqrt(a * a + 4.0))
    while True:
        x = a + rng.exponential(1.0 / lam)
        if np.log(rng.uniform()) <= -0.5 * (x - lam) ** 2:
            return float(x)


def sample_truncnorm(mean: float, sd: float, rng: np.random.Generator,
                     lower: float = None, upper: float = None) -> float:
    """One-sided truncated normal draw (exactly one bound must be given)."""
    if (lower is None) == (upper is None):
        raise ValueError("exactly one of lower/upper must be set")
    if lower is not None:
        a = (lower - mean) / sd
        return mean + sd * _truncnorm_std_lower(a, rng)
    a = (mean - upper) / sd
    return mean - sd * _truncnorm_std_lower(a, rng)


def probit_augment(state: ModelState, data: Dataset, rng: np.random.Generator) -> np.ndarray:
    """Redraw probit latents z_i ~ N(eta_i, 1) truncated by the observed
    class: positive when y_i = 1, nonpositive when y_i = 0."""
    if state.mode != "probit":
        raise RuntimeError("probit_augment requires probit mode")
    eta = state.eta
    y = data.y
    n = data.n
    # standardized truncation bound; draw above it, flip sign for y = 0
    sign = np.where(y == 1.0, 1.0, -1.0)
    a = -sign * eta
    z = np.empty(n)
    easy = a <= _TAIL
    if np.any(easy):
        lo = ndtr(a[easy])
        u = rng.uniform(size=int(easy.sum()))
        z[easy] = ndtri(lo + u * (1.0 - lo))
    for i in np.flatnonzero(~easy):
        z[i] = _truncnorm_std_lower(float(a[i]), rng)
    state.z = eta + sign * z
    return state.z
