import numpy as np
import pytest

from stgp.model import Dataset, ModelState
from stgp.simdata import grid_locations
from stgp.spatial import SpatialDomain, build_kernel_system, build_knot_grid


def make_domain(m: int) -> SpatialDomain:
    return SpatialDomain(grid_locations(m))


def make_small_problem(m=6, knot_dims=(3, 3), n=25, theta=0.9, seed=0, q=1,
                       sigma_a=1.2, lam=0.8, sigma2=1.5, mode="gaussian"):
    """Small random dataset + state used across likelihood/update tests."""
    rng = np.random.default_rng(seed)
    domain = make_domain(m)
    grid = build_knot_grid(domain, knot_dims)
    ks = build_kernel_system(domain, grid, theta)
    X = rng.standard_normal((n, domain.p))
    W = np.ones((n, q)) if q else np.zeros((n, 0))
    if mode == "probit":
        y = (rng.uniform(size=n) < 0.5).astype(float)
    else:
        y = rng.standard_normal(n)
    data = Dataset(y=y, W=W, X=X, domain=domain)
    state = ModelState(data, ks, alpha=0.3 * np.ones(q), a=rng.standard_normal(grid.L),
                       sigma_a=sigma_a, lam=lam, sigma2=sigma2, mode=mode)
    if mode == "probit":
        from stgp.model import probit_augment

        probit_augment(state, data, rng)
    return data, state, rng


@pytest.fixture
def small_problem():
    return make_small_problem()
