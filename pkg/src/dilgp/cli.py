"""Command-line entry point.

Three subcommands: `generate` writes a synthetic dataset to CSV, `fit-eval`
trains a model and reports held-out metrics, `bo` runs the Bayesian
optimization loop on a built-in objective or the PID-tuning simulator.

Every run writes a fully resolved config.json next to its outputs plus a
manifest.json with per-file checksums; re-running with `--config config.json`
reproduces the output files byte for byte. The output directory is given
only on the command line (never stored in config.json) so reproductions can
target a fresh directory. Environment variables are never consulted.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bo import MODEL_KINDS, SurrogateConfig, bo_run, history_jsonl
from .data import GENERATORS, load_csv
from .exceptions import DilgpError
from .experiments import (DATASET_DEFAULTS, QUADRATIC_OPTIMUM,
                          QUADRATIC_SPACE, FitSettings, fit_eval,
                          heldout_trajectory, quad_bo_experiment,
                          quadratic_objective)
from .gp import NoiseSpec
from .quad import PIDGains, TrajectoryKind

TRAJECTORIES = {k.value: k for k in TrajectoryKind}

GENERATE_DEFAULTS = {
    "generator": "synthetic_1d",
    "seed": 0,
    "noise_as_std": False,
}

FIT_EVAL_DEFAULTS = {
    "dataset": None,
    "train_csv": None,
    "test_csv": None,
    "target_column": "y",
    "feature_columns": None,
    "domain_column": None,
    "noise_as_std": False,
    "model": "dil_gp",
    "seed": 0,
    "sweep": None,
    "standardize": True,
    "t1": 100,
    "t2": 10,
    "eta1": 0.1,
    "eta2": 0.05,
    "lambda": 1.0,
    "sigma2": 0.01,
    "grad_mode": "analytic_fd_hybrid",
}

BO_DEFAULTS = {
    "objective": "quadratic",
    "trajectory": "fig8",
    "surrogate": "dil_gp",
    "acq": "ucb",
    "t_bo": 100,
    "n_init": 5,
    "seed": 0,
    "standardize": True,
    "t1": 30,
    "t2": 5,
    "eta1": 0.1,
    "eta2": 0.005,
    "lambda": 0.01,
    "sigma2": 0.1,
    "grad_mode": "analytic_fd_hybrid",
}

# Keys that only apply to the invariance-trained model; dropped from the
# resolved config when a plain GP is selected.
DIL_ONLY_KEYS = ("t2", "eta1", "lambda")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dilgp",
                                     description="Domain-invariant GP regression and BO runner")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sup = argparse.SUPPRESS

    gen = sub.add_parser("generate", help="write a synthetic dataset as train/test CSV")
    gen.add_argument("--generator", choices=sorted(GENERATORS), default=sup)
    gen.add_argument("--seed", type=int, default=sup)
    gen.add_argument("--noise-as-std", action="store_true", default=sup,
                     help="read noise levels as std instead of variance")

    fit = sub.add_parser("fit-eval", help="train a model and report held-out metrics")
    fit.add_argument("--dataset", choices=sorted(GENERATORS), default=sup,
                     help="built-in generator (alternative to --train-csv/--test-csv)")
    fit.add_argument("--train-csv", default=sup)
    fit.add_argument("--test-csv", default=sup)
    fit.add_argument("--target-column", default=sup)
    fit.add_argument("--feature-columns", default=sup,
                     help="comma-separated names; default: all non-target columns")
    fit.add_argument("--domain-column", default=sup,
                     help="tag column for per-domain RMSE reporting")
    fit.add_argument("--noise-as-std", action="store_true", default=sup)
    fit.add_argument("--model", choices=sorted(MODEL_KINDS), default=sup)
    fit.add_argument("--seed", type=int, default=sup)
    fit.add_argument("--sweep", type=int, default=sup,
                     help="run seeds 0..N-1 and report mean with max deviation")
    fit.add_argument("--no-standardize", dest="standardize", action="store_false", default=sup)
    _add_train_flags(fit, sup)

    bo = sub.add_parser("bo", help="run Bayesian optimization")
    bo.add_argument("--objective", choices=["quadratic", "quad_pid"], default=sup)
    bo.add_argument("--trajectory", choices=sorted(TRAJECTORIES), default=sup)
    bo.add_argument("--surrogate", choices=sorted(MODEL_KINDS), default=sup)
    bo.add_argument("--acq", choices=["ucb", "ei"], default=sup)
    bo.add_argument("--t-bo", type=int, default=sup)
    bo.add_argument("--n-init", type=int, default=sup)
    bo.add_argument("--seed", type=int, default=sup)
    bo.add_argument("--no-standardize", dest="standardize", action="store_false", default=sup)
    _add_train_flags(bo, sup)

    for p in (gen, fit, bo):
        p.add_argument("--config", default=None,
                       help="JSON config from a previous run's config.json")
        p.add_argument("--out", required=True, help="output directory")
    return parser


def _add_train_flags(p, sup):
    p.add_argument("--t1", type=int, default=sup, help="outer training steps")
    p.add_argument("--t2", type=int, default=sup, help="inner partition-ascent steps")
    p.add_argument("--eta1", type=float, default=sup, help="partition learning rate")
    p.add_argument("--eta2", type=float, default=sup, help="parameter learning rate")
    p.add_argument("--lam", dest="lambda", type=float, default=sup,
                   help="invariance penalty coefficient")
    p.add_argument("--sigma2", type=float, default=sup, help="observation noise variance")
    p.add_argument("--grad-mode", choices=["analytic_fd_hybrid", "full_fd"], default=sup)


def _with_dataset_defaults(defaults: dict, args: argparse.Namespace) -> dict:
    """Layer calibrated per-dataset settings under whatever the user set.

    The chosen dataset has to be peeked at before the real resolution pass,
    because it decides which calibrated values apply.
    """
    probe = dict(defaults)
    if args.config:
        with open(args.config) as fh:
            probe.update({k: v for k, v in json.load(fh).items() if k in defaults})
    for key, val in vars(args).items():
        if key in defaults:
            probe[key] = val
    overlay = DATASET_DEFAULTS.get(probe.get("dataset"), {})
    merged = dict(defaults)
    merged.update({("lambda" if k == "lam" else k): v for k, v in overlay.items()})
    return merged


def _resolve(defaults: dict, args: argparse.Namespace) -> dict:
    """defaults <- config file <- explicit flags, in increasing precedence."""
    merged = dict(defaults)
    if args.config:
        with open(args.config) as fh:
            loaded = json.load(fh)
        loaded.pop("command", None)
        unknown = sorted(set(loaded) - set(defaults))
        if unknown:
            raise DilgpError(f"config has unknown keys for this command: {unknown}")
        merged.update(loaded)
    for key, val in vars(args).items():
        if key in defaults:
            merged[key] = val
    return merged


def _write_outputs(outdir: Path, config: dict, t0: float):
    """Write config.json, checksum every output file, write manifest.json."""
    cfg_text = json.dumps(config, indent=2, sort_keys=True) + "\n"
    (outdir / "config.json").write_text(cfg_text)
    checksums = {}
    for p in sorted(outdir.iterdir()):
        if p.name == "manifest.json" or p.is_dir():
            continue
        checksums[p.name] = hashlib.sha256(p.read_bytes()).hexdigest()
    manifest = {
        "config_sha256": hashlib.sha256(cfg_text.encode()).hexdigest(),
        "seed": config.get("seed"),
        "version": __version__,
        "wall_clock_s": round(time.time() - t0, 3),
        "outputs": checksums,
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def cmd_generate(args) -> int:
    t0 = time.time()
    config = _resolve(GENERATE_DEFAULTS, args)
    config["command"] = "generate"
    train, test = GENERATORS[config["generator"]](config["seed"],
                                                  noise_as_std=config["noise_as_std"])
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    train.to_csv(outdir / "train.csv")
    test.to_csv(outdir / "test.csv")
    _write_outputs(outdir, config, t0)
    print(f"wrote {train.n} train rows and {test.n} test rows to {outdir}")
    return 0


def _load_dataset(config: dict, seed: int):
    if config["dataset"] is not None:
        if config["train_csv"] or config["test_csv"]:
            raise DilgpError("give either --dataset or --train-csv/--test-csv, not both")
        return GENERATORS[config["dataset"]](seed, noise_as_std=config["noise_as_std"])
    if not (config["train_csv"] and config["test_csv"]):
        raise DilgpError("need --dataset, or both --train-csv and --test-csv")
    cols = config["feature_columns"]
    if isinstance(cols, str):
        cols = [c.strip() for c in cols.split(",") if c.strip()]
    train = load_csv(config["train_csv"], config["target_column"], cols,
                     config["domain_column"])
    test = load_csv(config["test_csv"], config["target_column"], cols,
                    config["domain_column"])
    return train, test


def _fit_settings(config: dict) -> FitSettings:
    return FitSettings(model=config["model"], t1=config["t1"], t2=config["t2"],
                       eta1=config["eta1"], eta2=config["eta2"], lam=config["lambda"],
                       sigma2=config["sigma2"], grad_mode=config["grad_mode"],
                       standardize=config["standardize"])


def _prune_model_keys(config: dict, model_key: str) -> dict:
    if config[model_key] != "dil_gp":
        for key in DIL_ONLY_KEYS:
            config.pop(key, None)
    return config


def cmd_fit_eval(args) -> int:
    t0 = time.time()
    defaults = _with_dataset_defaults(FIT_EVAL_DEFAULTS, args)
    config = _resolve(defaults, args)
    config["command"] = "fit-eval"
    if config["dataset"] is not None:
        if config.get("train_csv") or config.get("test_csv"):
            raise DilgpError("give either --dataset or --train-csv/--test-csv, not both")
        for key in ("train_csv", "test_csv", "target_column", "feature_columns",
                    "domain_column"):
            config.pop(key, None)
    else:
        config.pop("noise_as_std", None)
    settings = _fit_settings({**FIT_EVAL_DEFAULTS, **config})
    _prune_model_keys(config, "model")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    if config["sweep"] is None:
        config.pop("sweep", None)
        train, test = _load_dataset({**FIT_EVAL_DEFAULTS, **config}, config["seed"])
        report, trace = fit_eval(train, test, settings, seed=config["seed"])
        (outdir / "report.json").write_text(
            json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n")
        (outdir / "trace.jsonl").write_text(trace.to_jsonl())
        print(f"rmse={report.rmse:.4f} coverage={report.coverage_rate:.4f}")
    else:
        config.pop("seed", None)
        seeds = list(range(config["sweep"]))
        reports = []
        for s in seeds:
            train, test = _load_dataset({**FIT_EVAL_DEFAULTS, **config, "seed": s}, s)
            rep, _ = fit_eval(train, test, settings, seed=s)
            reports.append(rep)
        rmses = np.array([r.rmse for r in reports])
        covers = np.array([r.coverage_rate for r in reports])
        payload = {
            "per_seed": [r.to_json_dict() for r in reports],
            "summary": {
                "seeds": seeds,
                "rmse_mean": float(rmses.mean()),
                "rmse_max_dev": float(np.max(np.abs(rmses - rmses.mean()))),
                "coverage_mean": float(covers.mean()),
                "coverage_max_dev": float(np.max(np.abs(covers - covers.mean()))),
            },
        }
        (outdir / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        print(f"rmse mean={payload['summary']['rmse_mean']:.4f} "
              f"± {payload['summary']['rmse_max_dev']:.4f} (max dev, {len(seeds)} seeds)")
    _write_outputs(outdir, config, t0)
    return 0


def cmd_bo(args) -> int:
    t0 = time.time()
    config = _resolve(BO_DEFAULTS, args)
    config["command"] = "bo"
    if config["objective"] != "quad_pid":
        config.pop("trajectory", None)
    _prune_model_keys(config, "surrogate")
    full = {**BO_DEFAULTS, **config}
    surrogate = SurrogateConfig(model=full["surrogate"], noise=NoiseSpec(full["sigma2"]),
                                t1=full["t1"], t2=full["t2"], eta1=full["eta1"],
                                eta2=full["eta2"], lam=full["lambda"],
                                grad_mode=full["grad_mode"], standardize=full["standardize"])
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    if config["objective"] == "quadratic":
        state, diag = bo_run(quadratic_objective, QUADRATIC_SPACE, surrogate,
                             config["acq"], config["t_bo"], config["n_init"],
                             config["seed"], f_star=0.0)
        summary = {
            "objective": "quadratic",
            "incumbent_x": state.incumbent_x.tolist(),
            "incumbent_f": state.incumbent_f,
            "distance_to_optimum": abs(float(state.incumbent_x[0]) - QUADRATIC_OPTIMUM),
            "failed_steps": state.failed_steps,
            "final_regret_bound": float(diag.regret_bound[-1]),
            "final_cum_regret": float(diag.cum_regret[-1]),
        }
    else:
        kind = TRAJECTORIES[config["trajectory"]]
        result = quad_bo_experiment(kind, config["surrogate"], config["seed"],
                                    t_bo=config["t_bo"], n_init=config["n_init"],
                                    acq=config["acq"], surrogate=surrogate)
        state, diag = result["state"], result["diagnostics"]
        gains = PIDGains(**result["gains"])
        flight = heldout_trajectory(gains, kind, result["heldout_seeds"][0])
        flight.export_csv(outdir / "trajectory.csv")
        summary = {
            "objective": "quad_pid",
            "trajectory": config["trajectory"],
            "gains": result["gains"],
            "train_ace": result["train_ace"],
            "heldout_ace": result["heldout_ace"],
            "failed_steps": state.failed_steps,
            "final_regret_bound": float(diag.regret_bound[-1]),
        }
    (outdir / "history.jsonl").write_text(history_jsonl(state, diag))
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _write_outputs(outdir, config, t0)
    print(f"incumbent f={state.incumbent_f:.6g} after {config['t_bo']} steps")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "generate":
            return cmd_generate(args)
        if args.command == "fit-eval":
            return cmd_fit_eval(args)
        if args.command == "bo":
            return cmd_bo(args)
        parser.error(f"unknown command {args.command!r}")
    except DilgpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
