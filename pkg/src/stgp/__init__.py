"""Scalar-on-image regression with a soft-thresholded Gaussian process prior."""

from .mcmc import ChainSummary, McmcConfig, calibrate_lambda_prior, run_chain
from .metrics import (
    SelectionReport,
    coefficient_mse,
    cross_validate_auc,
    selection_flags,
    selection_metrics,
)
from .model import Dataset, ModelState, normalize_dataset
from .simdata import (
    TrueCoefficient,
    generate_gaussian_response,
    generate_probit_response,
    make_true_beta,
    sample_exp_images,
    sample_shared_structure_images,
)
from .spatial import (
    CarStructure,
    KernelSystem,
    KnotGrid,
    SpatialDomain,
    build_knot_grid,
    car_precision,
    standardize_kernels,
)
from .threshold import (
    ThresholdLevel,
    prior_inclusion_probability,
    soft_threshold,
    soft_threshold_field,
)

__version__ = "0.1.0"
