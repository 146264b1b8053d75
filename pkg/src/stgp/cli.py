"""Command-line orchestration: simulate / fit / summarize / crossval / validate.

Configuration comes from an INI-style file (sections [run], [mcmc],
[simulate]) with every key overridable by a flag; flags win. Every command
writes a manifest echoing the full effective configuration and seed, and
re-running a command from its manifest reproduces the data outputs
byte-for-byte (the manifest's own [timing] section is the one volatile
part).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import io
from .mcmc import McmcConfig, derive_rng, run_chain
from .metrics import cross_validate_auc, selection_flags, selection_metrics
from .model import normalize_dataset, original_scale_coefficients
from .parallel import parallel_map
from .simdata import (
    generate_gaussian_response,
    generate_probit_response,
    grid_locations,
    make_true_beta,
    sample_exp_images,
    sample_shared_structure_images,
)
from .validate import run_validation_suite

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_VALIDATION = 4

COMMANDS = ("simulate", "fit", "summarize", "crossval", "validate")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str = ""
    # common
    seed: int = 0
    out: str = "stgp-out"
    workers: int = 0              # 0 = available cores
    mode: str = "gaussian"
    # inputs
    dataset: str = None
    locations: str = None
    truth: str = None
    fits: tuple = ()
    # spatial
    knots: tuple = None
    sigma_h: float = None
    time_scale: float = 1.0       # rescales the last location coordinate
    # mcmc
    iters: int = 5000
    burnin: int = 1000
    thin: int = 1
    lambda_lower: float = None
    lambda_upper: float = None
    lambda_fixed: float = None
    gp: bool = False
    sweep_order: str = "sequential"
    theta_sd: float = 0.05
    lambda_sd: float = 0.1
    target_accept: float = 0.4
    normalize: bool = True
    # evaluation
    cutoff: float = 0.5
    folds: int = 5
    # simulation scenario
    shape: str = "five_peaks"
    m: int = 30
    n: int = 100
    covariance: str = "exp"       # exp | ss
    theta_x: float = 3.0
    upsilon: float = 2.0
    sigma: float = 5.0
    replicates: int = 1
    amplitude: float = 1.0


_SECTION_OF = {
    "command": "run", "seed": "run", "out": "run", "workers": "run",
    "mode": "run", "dataset": "run", "locations": "run", "truth": "run",
    "fits": "run", "knots": "run", "sigma_h": "run", "time_scale": "run",
    "cutoff": "run", "folds": "run", "normalize": "run",
    "iters": "mcmc", "burnin": "mcmc", "thin": "mcmc",
    "lambda_lower": "mcmc", "lambda_upper": "mcmc", "lambda_fixed": "mcmc",
    "gp": "mcmc", "sweep_order": "mcmc", "theta_sd": "mcmc",
    "lambda_sd": "mcmc", "target_accept": "mcmc",
    "shape": "simulate", "m": "simulate", "n": "simulate",
    "covariance": "simulate", "theta_x": "simulate", "upsilon": "simulate",
    "sigma": "simulate", "replicates": "simulate", "amplitude": "simulate",
}

_INT_KEYS = {"seed", "workers", "iters", "burnin", "thin", "folds", "m", "n",
             "replicates"}
_FLOAT_KEYS = {"sigma_h", "time_scale", "lambda_lower", "lambda_upper",
               "lambda_fixed", "cutoff", "theta_x", "upsilon", "sigma",
               "amplitude", "theta_sd", "lambda_sd", "target_accept"}
_BOOL_KEYS = {"gp", "normalize"}


def _parse_knots(text) -> tuple:
    try:
        return tuple(int(tok) for tok in str(text).split(",") if tok.strip())
    except ValueError as exc:
        raise UsageError(f"bad knot dims {text!r}: expected e.g. 15,15") from exc


def _coerce(key: str, raw):
    if raw is None:
        return None
    if key == "knots":
        return _parse_knots(raw)
    if key == "fits":
        if isinstance(raw, (tuple, list)):
            return tuple(raw)
        return tuple(tok for tok in str(raw).split(",") if tok.strip())
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    if key in _BOOL_KEYS:
        if isinstance(raw, bool):
            return raw
        return str(raw).strip().lower() in ("1", "true", "yes", "on")
    return str(raw)


def load_config_file(path: str) -> dict:
    sections = io.read_manifest(path)
    values = {}
    for section in ("run", "mcmc", "simulate"):
        for key, raw in sections.get(section, {}).items():
            if key == "command":
                continue
            if key not in _SECTION_OF:
                raise UsageError(f"unknown config key {key!r} in {path}")
            values[key] = _coerce(key, raw)
    return values


def build_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(command=args.command)
    if args.config:
        if not os.path.exists(args.config):
            raise FileNotFoundError(args.config)
        for key, value in load_config_file(args.config).items():
            setattr(cfg, key, value)
    for key in _SECTION_OF:
        if key == "command":
            continue
        given = getattr(args, key, None)
        if given is not None:
            setattr(cfg, key, _coerce(key, given))
    return cfg


def effective_sections(cfg: RunConfig) -> dict:
    out = {"run": {}, "mcmc": {}, "simulate": {}}
    for f in dataclasses.fields(RunConfig):
        value = getattr(cfg, f.name)
        if value is None:
            continue
        if f.name == "knots":
            value = ",".join(str(v) for v in value)
        elif f.name == "fits":
            if not value:
                continue
            value = ",".join(value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        out[_SECTION_OF[f.name]][f.name] = value
    return out


def _mcmc_config(cfg: RunConfig) -> McmcConfig:
    if cfg.knots is None:
        raise UsageError("knot dims are required (e.g. --knots 15,15)")
    lambda_fixed = None
    lambda_bounds = None
    if cfg.gp:
        lambda_fixed = 0.0
    elif cfg.lambda_fixed is not None:
        lambda_fixed = cfg.lambda_fixed
    elif cfg.lambda_lower is not None or cfg.lambda_upper is not None:
        if cfg.lambda_lower is None or cfg.lambda_upper is None:
            raise UsageError("set both lambda_lower and lambda_upper, or neither")
        lambda_bounds = (cfg.lambda_lower, cfg.lambda_upper)
    return McmcConfig(
        knot_dims=cfg.knots,
        iterations=cfg.iters,
        burn_in=cfg.burnin,
        thin=cfg.thin,
        seed=cfg.seed,
        mode=cfg.mode,
        sigma_h=cfg.sigma_h,
        lambda_bounds=lambda_bounds,
        lambda_fixed=lambda_fixed,
        sweep_order=cfg.sweep_order,
        theta_proposal_sd=cfg.theta_sd,
        lambda_proposal_sd=cfg.lambda_sd,
        target_accept=cfg.target_accept,
    )


def _require_inputs(cfg: RunConfig, *names):
    for name in names:
        path = getattr(cfg, name)
        if path is None:
            raise UsageError(f"--{name} is required for {cfg.command}")
        if not os.path.exists(path):
            raise FileNotFoundError(path)


def _outdir(cfg: RunConfig) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    return cfg.out


def _load_data(cfg: RunConfig):
    _require_inputs(cfg, "dataset", "locations")
    locations = io.read_locations(cfg.locations)
    if cfg.time_scale != 1.0:
        # spatiotemporal input: time is the last coordinate, rescaled so a
        # unit temporal step compares to a unit spatial step
        locations = locations.copy()
        locations[:, -1] *= cfg.time_scale
    return io.read_dataset(cfg.dataset, locations)


# -- commands -----------------------------------------------------------------

def _simulate_replicate(job) -> str:
    cfg, truth, r = job
    rng = derive_rng(cfg.seed, 100, r)
    if cfg.covariance == "exp":
        X = sample_exp_images(cfg.m, cfg.theta_x, cfg.n, rng)
    else:
        X = sample_shared_structure_images(cfg.m, cfg.upsilon, cfg.n, rng, truth)
    if cfg.mode == "probit":
        y = generate_probit_response(X, truth, rng)
    else:
        y = generate_gaussian_response(X, truth, cfg.sigma, rng)
    path = os.path.join(cfg.out, f"dataset_{r:03d}.csv")
    io.write_dataset(path, y, np.zeros((cfg.n, 0)), X)
    return path


def cmd_simulate(cfg: RunConfig) -> int:
    if cfg.shape not in ("five_peaks", "triangle"):
        raise UsageError(f"unknown truth shape {cfg.shape!r}")
    if cfg.covariance not in ("exp", "ss"):
        raise UsageError(f"unknown covariance kind {cfg.covariance!r}")
    if cfg.m < 10 or cfg.n < 1 or cfg.replicates < 0:
        raise UsageError("need m >= 10, n >= 1, replicates >= 0")
    out = _outdir(cfg)
    truth = make_true_beta(cfg.shape, cfg.m, cfg.amplitude)
    io.write_locations(os.path.join(out, "locations.csv"), grid_locations(cfg.m))
    io.write_true_beta(os.path.join(out, "beta0.csv"), truth.beta0, truth.labels)
    parallel_map(_simulate_replicate,
                 [(cfg, truth, r) for r in range(cfg.replicates)],
                 cfg.workers)
    sections = effective_sections(cfg)
    sections["result"] = {"files": cfg.replicates, "p": cfg.m * cfg.m}
    io.write_manifest(os.path.join(out, "manifest.txt"), sections)
    return EXIT_OK


def cmd_fit(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    data = _load_data(cfg)
    if cfg.normalize:
        data = normalize_dataset(data, mode=cfg.mode)
    mcfg = _mcmc_config(cfg)
    summary = run_chain(data, mcfg)
    out = _outdir(cfg)
    scale = original_scale_coefficients(np.ones(data.p), data)
    io.write_summary(os.path.join(out, "summary.csv"), summary, scale)
    io.write_trace(os.path.join(out, "trace.csv"), summary, mcfg.burn_in, mcfg.thin)
    sections = effective_sections(cfg)
    sections["result"] = {
        "n": data.n, "p": data.p, "q": data.q,
        "lambda_lower_used": io.format_value(summary.lambda_bounds[0]),
        "lambda_upper_used": io.format_value(summary.lambda_bounds[1]),
        "accept_knots": io.format_value(summary.accept_rates["knots"]),
        "accept_theta": io.format_value(summary.accept_rates["theta"]),
        "accept_lambda": io.format_value(summary.accept_rates["lambda"]),
    }
    sections["timing"] = {
        "chain_seconds": f"{summary.seconds:.3f}",
        "total_seconds": f"{time.perf_counter() - t0:.3f}",
    }
    io.write_manifest(os.path.join(out, "manifest.txt"), sections)
    return EXIT_OK


def cmd_summarize(cfg: RunConfig) -> int:
    if not cfg.fits:
        raise UsageError("--fits lists the fit outputs to aggregate")
    _require_inputs(cfg, "truth")
    missing = [f for f in cfg.fits if not os.path.exists(_summary_path(f))]
    if missing:
        raise FileNotFoundError("missing fit outputs: " + ", ".join(missing))
    beta0 = io.read_true_beta(cfg.truth)
    per_fit = []
    for f in cfg.fits:
        s = io.read_summary(_summary_path(f))
        flags = selection_flags(s["nonzero_freq"], cfg.cutoff)
        report = selection_metrics(flags, beta0, beta_hat=s["beta_mean_orig"])
        per_fit.append(report)
    out = _outdir(cfg)
    header = ["metric"] + [f"fit_{i + 1}" for i in range(len(per_fit))] + ["mean"]
    rows = []
    for metric in ("mse_x1000", "type1", "power"):
        vals = [getattr(r, metric) for r in per_fit]
        rows.append([metric] + vals + [float(np.mean(vals))])
    io.write_csv(os.path.join(out, "report.csv"), header, rows)
    sections = effective_sections(cfg)
    sections["result"] = {
        "replicates": len(per_fit),
        "mean_mse_x1000": io.format_value(float(np.mean([r.mse_x1000 for r in per_fit]))),
        "mean_type1": io.format_value(float(np.mean([r.type1 for r in per_fit]))),
        "mean_power": io.format_value(float(np.mean([r.power for r in per_fit]))),
    }
    io.write_manifest(os.path.join(out, "manifest.txt"), sections)
    return EXIT_OK


def _summary_path(fit: str) -> str:
    return fit if fit.endswith(".csv") else os.path.join(fit, "summary.csv")


def cmd_crossval(cfg: RunConfig) -> int:
    data = _load_data(cfg)
    if cfg.mode != "probit":
        raise UsageError("crossval requires --mode probit")
    mcfg = _mcmc_config(cfg)
    result = cross_validate_auc(data, mcfg, folds=cfg.folds, workers=cfg.workers)
    out = _outdir(cfg)
    io.write_roc(os.path.join(out, "roc.csv"), result.roc)
    io.write_csv(os.path.join(out, "scores.csv"),
                 ["subject", "fold", "label", "score"],
                 [(i + 1, int(result.folds[i]), int(data.y[i]), result.scores[i])
                  for i in range(data.n)])
    sections = effective_sections(cfg)
    sections["result"] = {"auc": io.format_value(result.auc)}
    io.write_manifest(os.path.join(out, "manifest.txt"), sections)
    return EXIT_OK


def cmd_validate(cfg: RunConfig) -> int:
    results = run_validation_suite(cfg.seed)
    out = _outdir(cfg)
    payload = [
        {"check": r.name, "passed": bool(r.passed), "detail": r.detail}
        for r in results
    ]
    with open(os.path.join(out, "results.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    sections = effective_sections(cfg)
    sections["result"] = {r.name: "pass" if r.passed else "FAIL" for r in results}
    io.write_manifest(os.path.join(out, "manifest.txt"), sections)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATION


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="stgp",
        description="Scalar-on-image regression with a soft-thresholded "
                    "Gaussian process prior",
    )
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="INI config file or a previous manifest")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out")
    ap.add_argument("--mode", choices=("gaussian", "probit"))
    ap.add_argument("--workers", type=int)
    ap.add_argument("--dataset")
    ap.add_argument("--locations")
    ap.add_argument("--truth")
    ap.add_argument("--fits")
    ap.add_argument("--knots", help="per-axis knot counts, e.g. 15,15")
    ap.add_argument("--sigma-h", dest="sigma_h", type=float)
    ap.add_argument("--time-scale", dest="time_scale", type=float,
                    help="rescale the last (temporal) location coordinate")
    ap.add_argument("--iters", type=int)
    ap.add_argument("--burnin", type=int)
    ap.add_argument("--thin", type=int)
    ap.add_argument("--theta-sd", dest="theta_sd", type=float)
    ap.add_argument("--lambda-sd", dest="lambda_sd", type=float)
    ap.add_argument("--target-accept", dest="target_accept", type=float)
    ap.add_argument("--lambda-fixed", dest="lambda_fixed", type=float)
    ap.add_argument("--lambda-lower", dest="lambda_lower", type=float)
    ap.add_argument("--lambda-upper", dest="lambda_upper", type=float)
    ap.add_argument("--gp", action="store_const", const=True,
                    help="pin lambda to 0 (plain Gaussian process fit)")
    ap.add_argument("--sweep-order", dest="sweep_order",
                    choices=("sequential", "random"))
    ap.add_argument("--no-normalize", dest="normalize", action="store_const",
                    const=False)
    ap.add_argument("--cutoff", type=float)
    ap.add_argument("--folds", type=int)
    ap.add_argument("--shape", choices=("five_peaks", "triangle"))
    ap.add_argument("--m", type=int)
    ap.add_argument("--n", type=int)
    ap.add_argument("--covariance", choices=("exp", "ss"))
    ap.add_argument("--theta-x", dest="theta_x", type=float)
    ap.add_argument("--upsilon", type=float)
    ap.add_argument("--sigma", type=float)
    ap.add_argument("--replicates", type=int)
    ap.add_argument("--amplitude", type=float)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = build_config(args)
        handler = {
            "simulate": cmd_simulate,
            "fit": cmd_fit,
            "summarize": cmd_summarize,
            "crossval": cmd_crossval,
            "validate": cmd_validate,
        }[cfg.command]
        return handler(cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
