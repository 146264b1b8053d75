"""Desk-scale benchmark: thresholded fit vs the plain (lambda = 0) fit.

Simulates replicates of the five-peaks scenario (exponential image
covariance, sigma = 5, m x m grid), fits both models with the data-driven
threshold prior, and prints MSE / Type I / power per replicate plus means.

    python scripts/benchmark_five_peaks.py --replicates 3 --iters 2000
"""

import argparse

import numpy as np

from stgp.mcmc import McmcConfig, derive_rng, lambda_bounds_from_u, run_chain
from stgp.metrics import coefficient_mse, selection_flags, selection_metrics
from stgp.model import Dataset, normalize_dataset, original_scale_coefficients
from stgp.simdata import (
    generate_gaussian_response,
    grid_locations,
    make_true_beta,
    sample_exp_images,
)
from stgp.spatial import SpatialDomain


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=int, default=30)
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--sigma", type=float, default=5.0)
    ap.add_argument("--theta-x", type=float, default=3.0)
    ap.add_argument("--replicates", type=int, default=3)
    ap.add_argument("--iters", type=int, default=5000)
    ap.add_argument("--burnin", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    truth = make_true_beta("five_peaks", args.m)
    domain = SpatialDomain(grid_locations(args.m))
    base = dict(knot_dims=(args.m // 2, args.m // 2), iterations=args.iters,
                burn_in=args.burnin, thin=5)

    rows = []
    for r in range(args.replicates):
        rng = derive_rng(args.seed, r)
        X = sample_exp_images(args.m, args.theta_x, args.n, rng)
        y = generate_gaussian_response(X, truth, args.sigma, rng)
        data = normalize_dataset(Dataset(
            y=y, W=np.zeros((args.n, 0)), X=X, domain=domain))

        gp = run_chain(data, McmcConfig(seed=10 * r, lambda_fixed=0.0, **base))
        bounds = lambda_bounds_from_u(float(np.mean(gp.ci_excludes_zero)))
        st = run_chain(data, McmcConfig(seed=10 * r + 1, lambda_bounds=bounds,
                                        **base))

        mse_gp = coefficient_mse(
            original_scale_coefficients(gp.beta_mean, data), truth.beta0)
        mse_st = coefficient_mse(
            original_scale_coefficients(st.beta_mean, data), truth.beta0)
        sel = selection_metrics(selection_flags(st.nonzero_freq, 0.5),
                                truth.beta0)
        rows.append((1000 * mse_gp, 1000 * mse_st, sel.type1, sel.power))
        print(f"replicate {r}: MSEx1000 plain {rows[-1][0]:7.2f}  "
              f"thresholded {rows[-1][1]:7.2f}  typeI {sel.type1:5.2f}%  "
              f"power {sel.power:5.2f}%  lambda prior "
              f"({bounds[0]:.2f}, {bounds[1]:.2f})  "
              f"{gp.seconds + st.seconds:5.0f}s")

    arr = np.array(rows)
    print(f"\nmeans over {args.replicates} replicates: "
          f"MSEx1000 plain {arr[:, 0].mean():.2f}, "
          f"thresholded {arr[:, 1].mean():.2f} "
          f"(ratio {arr[:, 1].mean() / arr[:, 0].mean():.2f}), "
          f"typeI {arr[:, 2].mean():.2f}%, power {arr[:, 3].mean():.2f}%")


if __name__ == "__main__":
    main()
