"""Estimation/selection scoring and cross-validated predictive evaluation."""

from __future__ import annotations

from dataclasses import dataclass, replace as dc_replace

import numpy as np
from scipy.special import ndtr

from .mcmc import McmcConfig, derive_rng, run_chain
from .model import Dataset, normalize_dataset
from .parallel import parallel_map


@dataclass(frozen=True)
class SelectionReport:
    mse: float               # raw scale; tables report mse * 1000
    type1: float             # percent, over truly-zero locations
    power: float             # percent, over truly-nonzero locations
    flags: np.ndarray

    @property
    def mse_x1000(self) -> float:
        return 1000.0 * self.mse


def coefficient_mse(beta_hat, beta0) -> float:
    """Mean squared error over locations (unscaled)."""
    beta_hat = np.asarray(beta_hat, dtype=float)
    beta0 = np.asarray(beta0, dtype=float)
    if beta_hat.shape != beta0.shape:
        raise ValueError("coefficient vectors have different lengths")
    return float(np.mean((beta_hat - beta0) ** 2))


def selection_flags(nonzero_freq, cutoff: float = 0.5) -> np.ndarray:
    """1 where the posterior nonzero frequency strictly exceeds the cutoff."""
    freq = np.asarray(nonzero_freq, dtype=float)
    if np.any((freq < 0) | (freq > 1)):
        raise ValueError("frequencies must lie in [0, 1]")
    return (freq > cutoff).astype(int)


def selection_metrics(flags, beta0, beta_hat=None) -> SelectionReport:
    """Type I error and power (both %) of the selection flags against the
    sign pattern of beta0; optionally also the MSE of beta_hat."""
    flags = np.asarray(flags)
    beta0 = np.asarray(beta0, dtype=float)
    if flags.shape != beta0.shape:
        raise ValueError("flags and beta0 have different lengths")
    zero = beta0 == 0.0
    nonzero = ~zero
    if not zero.any() or not nonzero.any():
        raise ValueError("beta0 must contain both zero and nonzero locations")
    type1 = 100.0 * float(np.mean(flags[zero] != 0))
    power = 100.0 * float(np.mean(flags[nonzero] != 0))
    mse = coefficient_mse(beta_hat, beta0) if beta_hat is not None else float("nan")
    return SelectionReport(mse=mse, type1=type1, power=power, flags=flags)


def roc_curve(labels, scores):
    """ROC points from (0,0) to (1,1), one step per distinct score; ties
    collapse onto single diagonal segments."""
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=float)
    pos = float(np.sum(labels == 1))
    neg = float(np.sum(labels == 0))
    if pos == 0 or neg == 0:
        raise ValueError("need both classes to build a ROC curve")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    tp = np.cumsum(labels[order] == 1)
    fp = np.cumsum(labels[order] == 0)
    last_of_value = np.flatnonzero(np.diff(sorted_scores) != 0.0)
    cuts = np.append(last_of_value, len(scores) - 1)
    fpr = np.concatenate([[0.0], fp[cuts] / neg])
    tpr = np.concatenate([[0.0], tp[cuts] / pos])
    return np.column_stack([fpr, tpr])


def auc_from_roc(roc: np.ndarray) -> float:
    """Trapezoidal area under the ROC (equals the concordance statistic
    with ties counted one half)."""
    fpr, tpr = roc[:, 0], roc[:, 1]
    return float(np.sum(np.diff(fpr) * 0.5 * (tpr[1:] + tpr[:-1])))


@dataclass
class CrossValResult:
    roc: np.ndarray
    auc: float
    scores: np.ndarray
    folds: np.ndarray


def stratified_folds(labels, n_folds: int, rng: np.random.Generator) -> np.ndarray:
    """Deterministic class-stratified fold assignment."""
    labels = np.asarray(labels)
    folds = np.full(len(labels), -1, dtype=int)
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        if len(idx) < n_folds:
            raise ValueError(
                f"class {cls} has {len(idx)} subjects; cannot stratify into "
                f"{n_folds} folds"
            )
        perm = rng.permutation(idx)
        folds[perm] = np.arange(len(perm)) % n_folds
    return folds


def _fit_fold(job):
    data, cfg, assign, f = job
    tr = assign != f
    ho = np.flatnonzero(~tr)
    train = Dataset(y=data.y[tr], W=data.W[tr], X=data.X[tr], domain=data.domain)
    train = normalize_dataset(train, mode="probit")
    fold_seed = int(derive_rng(cfg.seed, 2000 + f).integers(2 ** 62))
    summary = run_chain(train, dc_replace(cfg, seed=fold_seed))
    norm = train.norm
    W_ho = (data.W[ho] - norm.w_center) / norm.w_scale
    X_ho = (data.X[ho] - norm.x_center) / norm.x_scale
    eta_ho = W_ho @ summary.alpha_mean + train.image_scale * (X_ho @ summary.beta_mean)
    return ho, ndtr(eta_ho)


def cross_validate_auc(data: Dataset, cfg: McmcConfig, folds: int = 5,
                       rng: np.random.Generator = None,
                       workers: int = 1) -> CrossValResult:
    """Stratified cross-validated ROC/AUC for a probit fit.

    Each fold normalizes its training subset, fits one chain, and scores
    held-out subjects with the plug-in posterior-mean predictor Phi(eta).
    Folds are seed-deterministic and may run in parallel.
    """
    if cfg.mode != "probit":
        raise ValueError("cross-validated AUC requires probit mode")
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if rng is None:
        rng = derive_rng(cfg.seed, 1000)
    assign = stratified_folds(data.y, folds, rng)
    scores = np.zeros(data.n)
    jobs = [(data, cfg, assign, f) for f in range(folds)]
    for ho, sc in parallel_map(_fit_fold, jobs, workers):
        scores[ho] = sc
    roc = roc_curve(data.y, scores)
    return CrossValResult(roc=roc, auc=auc_from_roc(roc), scores=scores,
                          folds=assign)
