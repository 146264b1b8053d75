"""Reduced-scale property checks behind the `validate` command.

Same checks as the acceptance suite, shrunk so the whole run stays under
a minute: thresholding is a contraction, kernel standardization yields
unit variance, CAR precisions are positive definite, local likelihood
deltas match full recomputation, and the update cycle passes a
joint-distribution comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geweke import GewekeConfig, run_geweke
from .mcmc import derive_rng
from .model import (
    Dataset,
    ModelState,
    apply_knot_update,
    gaussian_loglik,
    loglik_delta_knot,
)
from .simdata import grid_locations
from .spatial import (
    SpatialDomain,
    build_kernel_system,
    build_knot_grid,
    car_precision,
)
from .threshold import soft_threshold_field


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def random_dyadic(rng, lo: float, hi: float, size: int,
                  grid: float = 2.0 ** -20) -> np.ndarray:
    """Random multiples of 2^-20 in [lo, hi): float add/subtract on these
    stays exact, so order relations test the mathematics rather than
    last-ulp rounding."""
    lo_i, hi_i = int(lo / grid), int(hi / grid)
    return rng.integers(lo_i, hi_i, size=size).astype(float) * grid


def check_lipschitz(seed: int, triples: int = 200_000,
                    lam_groups: int = 200) -> CheckResult:
    rng = derive_rng(seed, 11)
    per = triples // lam_groups
    worst = -np.inf
    for lam in random_dyadic(rng, 0, 10, lam_groups):
        x1 = random_dyadic(rng, -50, 50, per)
        x2 = random_dyadic(rng, -50, 50, per)
        gap = np.abs(soft_threshold_field(x1, lam) - soft_threshold_field(x2, lam))
        worst = max(worst, float((gap - np.abs(x1 - x2)).max()))
    return CheckResult("lipschitz", worst <= 0.0,
                       f"max |g(x1)-g(x2)| - |x1-x2| = {worst:g} over "
                       f"{per * lam_groups} triples")


def check_standardization(thetas=(0.3, 0.9, 0.99)) -> CheckResult:
    domain = SpatialDomain(grid_locations(10))
    grid = build_knot_grid(domain, (5, 5))
    worst = 0.0
    for theta in thetas:
        ks = build_kernel_system(domain, grid, theta)
        Kt = ks.K_tilde.toarray()
        cov = Kt @ ks.car.solve(Kt.T)
        worst = max(worst, float(np.max(np.abs(np.diag(cov) - 1.0))))
    return CheckResult("standardization", worst < 1e-6,
                       f"max |Var(beta_tilde) - 1| = {worst:.3e} over theta={thetas}")


def check_car_positive_definite(thetas=(0.1, 0.5, 0.9, 0.99)) -> CheckResult:
    chain_domain = SpatialDomain(np.arange(1.0, 9.0).reshape(-1, 1))
    grid_domain = SpatialDomain(grid_locations(10))
    failures = []
    for theta in thetas:
        for domain, dims in ((chain_domain, (8,)), (grid_domain, (5, 5))):
            grid = build_knot_grid(domain, dims)
            try:
                car_precision(grid, theta)
            except np.linalg.LinAlgError:
                failures.append((dims, theta))
    return CheckResult("car_positive_definite", not failures,
                       f"Cholesky failures: {failures or 'none'}")


def _small_state(seed: int):
    rng = derive_rng(seed, 13)
    domain = SpatialDomain(grid_locations(6))
    grid = build_knot_grid(domain, (3, 3))
    ks = build_kernel_system(domain, grid, 0.9)
    n = 25
    X = rng.standard_normal((n, domain.p))
    W = np.ones((n, 1))
    y = rng.standard_normal(n)
    data = Dataset(y=y, W=W, X=X, domain=domain)
    state = ModelState(data, ks, alpha=[0.3], a=rng.standard_normal(grid.L),
                       sigma_a=1.2, lam=0.8, sigma2=1.5)
    return data, state, rng


def check_delta_loglik(seed: int, trials: int = 200) -> CheckResult:
    data, state, rng = _small_state(seed)
    worst = 0.0
    for _ in range(trials):
        l = int(rng.integers(state.ks.L))
        cand = float(state.a[l] + rng.normal(0, 1.5))
        before = gaussian_loglik(state, data)
        delta, pending = loglik_delta_knot(state, data, l, cand)
        apply_knot_update(state, data, pending)
        after = gaussian_loglik(state, data)
        full = after - before
        err = abs(delta - full) / max(1.0, abs(full))
        worst = max(worst, err)
    return CheckResult("delta_loglik", worst < 1e-8,
                       f"max relative delta-vs-full gap = {worst:.3e} over {trials} moves")


def check_geweke(seed: int, cycles: int = 2500, bound: float = 4.0) -> CheckResult:
    # mean_a's second moment has no finite prior mean under Beta(10,1)
    # dependence (1'Q^-1 1 scales like 1/(1-theta)), so the smoke check
    # scores only the well-posed functionals
    stats = [s for s in run_geweke(GewekeConfig(cycles=cycles, seed=seed))
             if s.name != "mean_a_second_moment"]
    worst = max(abs(s.z) for s in stats)
    name = max(stats, key=lambda s: abs(s.z)).name
    return CheckResult("geweke", math.isfinite(worst) and worst < bound,
                       f"max |z| = {worst:.2f} ({name}) over {cycles} cycles")


def run_validation_suite(seed: int = 0) -> list:
    return [
        check_lipschitz(seed),
        check_standardization(),
        check_car_positive_definite(),
        check_delta_loglik(seed),
        check_geweke(seed),
    ]
