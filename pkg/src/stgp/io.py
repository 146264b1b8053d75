"""File formats: CSV datasets/summaries and key=value manifests.

All CSVs carry header rows, use '.' decimals and full round-trip float
precision, so identical runs produce byte-identical files.
"""

from __future__ import annotations

import configparser
import csv
import os

import numpy as np

from .model import Dataset
from .spatial import SpatialDomain


def format_value(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(v) for v in row])


def _read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _has_header(first_row) -> bool:
    try:
        [float(tok) for tok in first_row]
        return False
    except ValueError:
        return True


def write_locations(path, locations: np.ndarray):
    locations = np.atleast_2d(locations)
    d = locations.shape[1]
    write_csv(path, [f"s_{k + 1}" for k in range(d)], locations)


def read_locations(path) -> np.ndarray:
    rows = _read_rows(path)
    if not rows:
        raise ValueError(f"{path}: empty locations file")
    if _has_header(rows[0]):
        rows = rows[1:]
    return np.array([[float(tok) for tok in row] for row in rows])


def write_dataset(path, y, W, X):
    y = np.asarray(y)
    W = np.asarray(W)
    if W.ndim == 1:
        W = W.reshape(len(y), -1)
    X = np.asarray(X)
    header = (["y"] + [f"w_{k + 1}" for k in range(W.shape[1])]
              + [f"x_{j + 1}" for j in range(X.shape[1])])
    write_csv(path, header, np.column_stack([y, W, X]))


def read_dataset(path, locations: np.ndarray) -> Dataset:
    rows = _read_rows(path)
    if not rows or not _has_header(rows[0]):
        raise ValueError(f"{path}: dataset CSV requires a header row")
    header = rows[0]
    if header[0] != "y":
        raise ValueError(f"{path}: first column must be 'y'")
    q = sum(1 for name in header if name.startswith("w_"))
    p = sum(1 for name in header if name.startswith("x_"))
    ordered = (1 + q + p == len(header)
               and all(name.startswith("w_") for name in header[1:1 + q])
               and all(name.startswith("x_") for name in header[1 + q:]))
    if not ordered:
        raise ValueError(f"{path}: columns must be y, w_*, x_* in that order")
    body = np.array([[float(tok) for tok in row] for row in rows[1:]])
    if body.ndim != 2 or body.shape[1] != len(header):
        raise ValueError(f"{path}: ragged or empty dataset")
    domain = SpatialDomain(locations)
    if domain.p != p:
        raise ValueError(
            f"{path}: dataset has {p} image columns but the locations file "
            f"has {domain.p} locations"
        )
    return Dataset(y=body[:, 0], W=body[:, 1:1 + q], X=body[:, 1 + q:],
                   domain=domain)


def write_true_beta(path, beta0: np.ndarray, labels: np.ndarray = None):
    beta0 = np.asarray(beta0)
    if labels is None:
        labels = np.sign(beta0)
    write_csv(path, ["beta0", "label"],
              [(b, int(l)) for b, l in zip(beta0, labels)])


def read_true_beta(path) -> np.ndarray:
    rows = _read_rows(path)
    if rows and _has_header(rows[0]):
        rows = rows[1:]
    return np.array([float(row[0]) for row in rows])


SUMMARY_COLUMNS = ["location", "beta_mean", "nonzero_freq", "ci_lower",
                   "ci_upper", "beta_mean_orig", "ci_lower_orig",
                   "ci_upper_orig"]


def write_summary(path, summary, scale: np.ndarray):
    """Per-location summary; `scale` maps model-scale coefficients to the
    raw data scale (positive, so quantiles map through directly)."""
    p = len(summary.beta_mean)
    rows = np.column_stack([
        np.arange(1, p + 1),
        summary.beta_mean,
        summary.nonzero_freq,
        summary.ci_lower,
        summary.ci_upper,
        summary.beta_mean * scale,
        summary.ci_lower * scale,
        summary.ci_upper * scale,
    ])
    write_csv(path, SUMMARY_COLUMNS,
              [[int(r[0])] + list(r[1:]) for r in rows])


def read_summary(path) -> dict:
    rows = _read_rows(path)
    if not rows or rows[0] != SUMMARY_COLUMNS:
        raise ValueError(f"{path}: not a summary CSV")
    body = np.array([[float(tok) for tok in row] for row in rows[1:]])
    return {name: body[:, k] for k, name in enumerate(SUMMARY_COLUMNS)}


def write_trace(path, summary, burn_in: int, thin: int):
    q = summary.alpha_trace.shape[1]
    header = (["iteration", "theta", "sigma_a", "lambda", "sigma2"]
              + [f"alpha_{k + 1}" for k in range(q)])
    k = len(summary.theta_trace)
    iters = burn_in + thin * np.arange(k)
    cols = [iters, summary.theta_trace, summary.sigma_a_trace,
            summary.lambda_trace, summary.sigma2_trace]
    if q:
        cols.append(summary.alpha_trace)
    body = np.column_stack(cols)
    write_csv(path, header, [[int(r[0])] + list(r[1:]) for r in body])


def write_roc(path, roc: np.ndarray):
    write_csv(path, ["false_positive_rate", "true_positive_rate"], roc)


def write_manifest(path, sections: dict):
    cp = configparser.ConfigParser()
    cp.optionxform = str
    for name, values in sections.items():
        cp[name] = {k: str(v) for k, v in values.items() if v is not None}
    with open(path, "w") as fh:
        cp.write(fh)


def read_manifest(path) -> dict:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.read(path)
    return {name: dict(cp[name]) for name in cp.sections()}
