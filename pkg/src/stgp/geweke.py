"""Joint-distribution test of the sampler's conditional updates.

Two simulators target the same joint law of (parameters, data): one draws
parameters from the prior directly; the other alternates data generation
with one full cycle of the sampler's conditional updates. If every update
is correct, moments of any parameter functional agree between the two.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mcmc import (
    derive_rng,
    update_alpha,
    update_knots,
    update_lambda,
    update_sigma2,
    update_sigma_a,
    update_theta,
)
from .model import Dataset, ModelState
from .spatial import (
    SpatialDomain,
    build_knot_grid,
    car_precision,
    default_bandwidth,
    kernel_matrix,
    sample_car,
    standardize_kernels,
)


@dataclass(frozen=True)
class GewekeConfig:
    n: int = 20
    image_side: int = 4            # p = side^2 locations
    knot_dims: tuple = (2, 2)
    q: int = 1
    cycles: int = 10_000
    lambda_bounds: tuple = (0.5, 1.5)
    theta_proposal_sd: float = 0.08
    lambda_proposal_sd: float = 0.3
    seed: int = 0


@dataclass
class GewekeStat:
    name: str
    prior_mean: float
    prior_se: float
    chain_mean: float
    chain_se: float

    @property
    def z(self) -> float:
        return (self.prior_mean - self.chain_mean) / np.sqrt(
            self.prior_se ** 2 + self.chain_se ** 2
        )


def _grid_domain(side: int) -> SpatialDomain:
    axis = np.arange(1.0, side + 1.0)
    ii, jj = np.meshgrid(axis, axis, indexing="ij")
    return SpatialDomain(np.column_stack([ii.ravel(), jj.ravel()]))


def _fixed_design(cfg: GewekeConfig):
    rng = derive_rng(cfg.seed, 90)
    domain = _grid_domain(cfg.image_side)
    X = rng.standard_normal((cfg.n, domain.p))
    W = np.ones((cfg.n, cfg.q))
    y0 = np.zeros(cfg.n)
    data = Dataset(y=y0, W=W, X=X, domain=domain)
    grid = build_knot_grid(domain, cfg.knot_dims)
    return data, grid


def _draw_prior_params(cfg: GewekeConfig, grid, rng):
    theta = float(rng.beta(10.0, 1.0))
    car = car_precision(grid, theta)
    a = sample_car(car, rng)
    sigma_a = float(abs(rng.standard_normal()))
    lam = float(rng.uniform(*cfg.lambda_bounds))
    alpha = 10.0 * rng.standard_normal(cfg.q)
    sigma2 = 1.0 / rng.gamma(0.1, 1.0 / 0.1)
    return theta, car, a, sigma_a, lam, alpha, sigma2


def _stats(theta, a, sigma_a, sigma2):
    return np.array([sigma_a, theta, float(np.mean(a)), sigma2])


STAT_NAMES = ("sigma_a", "theta", "mean_a", "sigma2")


def _batch_se(x: np.ndarray, n_batches: int = 50) -> float:
    """Monte Carlo standard error of the mean by batch means (handles the
    autocorrelation of the successive-conditional chain)."""
    usable = (len(x) // n_batches) * n_batches
    means = x[:usable].reshape(n_batches, -1).mean(axis=1)
    return float(np.std(means, ddof=1) / np.sqrt(n_batches))


def marginal_conditional(cfg: GewekeConfig, grid) -> np.ndarray:
    """Independent draws of the recorded functionals under the prior."""
    rng = derive_rng(cfg.seed, 91)
    out = np.zeros((cfg.cycles, 4))
    for t in range(cfg.cycles):
        theta, _, a, sigma_a, lam, alpha, sigma2 = _draw_prior_params(cfg, grid, rng)
        out[t] = _stats(theta, a, sigma_a, sigma2)
    return out


def successive_conditional(cfg: GewekeConfig, data: Dataset, grid) -> np.ndarray:
    """Alternate data regeneration with one full sampler cycle, starting
    from a prior draw; records the same functionals each cycle."""
    rng = derive_rng(cfg.seed, 92)
    theta, car, a, sigma_a, lam, alpha, sigma2 = _draw_prior_params(cfg, grid, rng)
    sigma_h = default_bandwidth(grid)
    K = kernel_matrix(data.domain, grid, sigma_h)
    ks = standardize_kernels(K, car, sigma_h=sigma_h)
    state = ModelState(data, ks, alpha=alpha, a=a, sigma_a=sigma_a,
                       lam=lam, sigma2=sigma2, mode="gaussian")
    out = np.zeros((cfg.cycles, 4))
    for t in range(cfg.cycles):
        data.y[:] = state.eta + np.sqrt(state.sigma2) * rng.standard_normal(data.n)
        update_alpha(state, data, rng)
        update_knots(state, data, rng)
        update_sigma_a(state, data, rng)
        update_lambda(state, data, rng, cfg.lambda_bounds, cfg.lambda_proposal_sd)
        update_theta(state, data, rng, cfg.theta_proposal_sd)
        update_sigma2(state, data, rng)
        state.refresh_caches(data)
        out[t] = _stats(state.theta, state.a, state.sigma_a, state.sigma2)
    return out


def run_geweke(cfg: GewekeConfig = GewekeConfig()) -> list:
    """Compare first and second moments of (sigma_a, theta, mean(a),
    sigma^2) between the two simulators. Returns one GewekeStat per
    moment; all |z| small (< 3) indicates agreement."""
    data, grid = _fixed_design(cfg)
    prior = marginal_conditional(cfg, grid)
    chain = successive_conditional(cfg, data, grid)
    stats = []
    for j, name in enumerate(STAT_NAMES):
        for powname, power in (("mean", 1), ("second_moment", 2)):
            xp = prior[:, j] ** power
            xc = chain[:, j] ** power
            stats.append(GewekeStat(
                name=f"{name}_{powname}",
                prior_mean=float(np.mean(xp)),
                prior_se=_batch_se(xp),
                chain_mean=float(np.mean(xc)),
                chain_se=_batch_se(xc),
            ))
    return stats
