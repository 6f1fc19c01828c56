"""End-to-end experiment harnesses shared by the CLI and the test suite:
fit/evaluate on a dataset, multi-seed sweeps with mean and max-deviation
aggregation, and PID-gain tuning on the simulator with a held-out wind
regime.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bo import MODEL_KINDS, SearchSpace, SurrogateConfig, bo_run
from .data import (Dataset, EvalReport, GENERATORS, coverage_rate, rmse,
                   standardize_fit_transform)
from .gp import NoiseSpec, fit_posterior, predict
from .kernels import KernelParams
from .quad import (TrajectoryKind, WIND_DOMAIN_HELDOUT, WIND_DOMAIN_TRAIN,
                   PIDGains, pid_objective, simulate)
from .rng import rng_for
from .train import TrainConfig, _train_vanilla, train_dil_gp


@dataclass(frozen=True)
class FitSettings:
    """Hyperparameters of one fit-eval run. Rates come from the standard
    sweep grids; t1/t2 are the full training budgets."""

    model: str = "dil_gp"
    t1: int = 100
    t2: int = 10
    eta1: float = 0.1
    eta2: float = 0.05
    lam: float = 1.0
    sigma2: float = 0.01
    grad_mode: str = "analytic_fd_hybrid"
    standardize: bool = True
    optimize_noise: bool = False

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ValueError(f"model must be one of {sorted(MODEL_KINDS)}, got {self.model!r}")


# Per-dataset defaults, selected from the sweep grids
# lam in {0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 1, 1.5, 2, 3} and
# lr in {0.0001, 0.0005, 0.001, 0.005, 0.01, 0.03, 0.05, 0.1, 0.3, 0.5}.
# sigma2 is in standardized-output units and is shared by both models;
# the generic 0.01 default drives either model into a collapsed fit on
# these benchmarks, so the calibrated values below override it.
DATASET_DEFAULTS = {
    "synthetic_1d": {"eta1": 0.1, "eta2": 0.005, "lam": 0.01, "sigma2": 0.4},
    "synthetic_2d": {"eta1": 0.1, "eta2": 0.001, "lam": 0.01, "sigma2": 0.3},
}


def settings_for(dataset: str, model: str, **overrides) -> FitSettings:
    base = dict(DATASET_DEFAULTS.get(dataset, {}))
    base.update(overrides)
    return FitSettings(model=model, **base)


def fit_eval(train: Dataset, test: Dataset, settings: FitSettings, seed: int = 0):
    """Standardize, train the chosen model, predict, score in raw units.

    Coverage uses the observation-level predictive std sqrt(var + sigma^2)
    mapped back to raw units. Returns (EvalReport, TrainTrace).
    """
    if settings.standardize:
        tr, te, scaler = standardize_fit_transform(train, test)
    else:
        tr, te, scaler = train, test, None
    kind = MODEL_KINDS[settings.model]
    init = KernelParams()
    noise = NoiseSpec(settings.sigma2)
    if settings.model == "dil_gp":
        cfg = TrainConfig(t1_outer=settings.t1, t2_inner=settings.t2,
                          eta1=settings.eta1, eta2=settings.eta2, lam=settings.lam,
                          seed=seed, grad_mode=settings.grad_mode,
                          optimize_noise=settings.optimize_noise)
        params, _, trace = train_dil_gp(kind, init, noise, tr.x, tr.y, cfg)
        noise_final = trace.final_noise
    else:
        params, noise_final, trace = _train_vanilla(
            kind, init, noise, tr.x, tr.y, settings.t1, settings.eta2,
            settings.grad_mode, optimize_noise=settings.optimize_noise)
    post = fit_posterior(kind, params, noise_final, tr.x, tr.y)
    mean_s, var_s = predict(post, te.x)
    std_obs = np.sqrt(var_s + noise_final.sigma2)
    if scaler is not None:
        mean = scaler.inverse_y(mean_s)
        std = scaler.scale_y(std_obs)
    else:
        mean, std = mean_s, std_obs
    report = EvalReport(rmse=rmse(mean, test.y), n_test=test.n,
                        coverage_rate=coverage_rate(mean, std, test.y))
    if test.domain_tag is not None:
        report.per_domain_rmse = {
            int(tag): rmse(mean[test.domain_tag == tag], test.y[test.domain_tag == tag])
            for tag in np.unique(test.domain_tag)
        }
    return report, trace


def sweep_seeds(dataset: str, settings: FitSettings, seeds=(0, 1, 2, 3, 4),
                noise_as_std: bool = False):
    """Refit across seeds (fresh data draw + fresh training seed per entry).

    Returns (reports, summary) where summary reports mean and max absolute
    deviation from the mean, the convention used for multi-run tables.
    """
    gen = GENERATORS[dataset]
    reports = []
    for s in seeds:
        train, test = gen(s, noise_as_std=noise_as_std)
        rep, _ = fit_eval(train, test, settings, seed=s)
        reports.append(rep)
    rmses = np.array([r.rmse for r in reports])
    covers = np.array([r.coverage_rate for r in reports])
    summary = {
        "rmse_mean": float(rmses.mean()),
        "rmse_max_dev": float(np.max(np.abs(rmses - rmses.mean()))),
        "coverage_mean": float(covers.mean()),
        "coverage_max_dev": float(np.max(np.abs(covers - covers.mean()))),
        "seeds": list(seeds),
    }
    return reports, summary


# Built-in BO test objective: known optimum at 0.3 with value 0.
QUADRATIC_SPACE = SearchSpace(np.array([0.0]), np.array([1.0]))
QUADRATIC_OPTIMUM = 0.3


def quadratic_objective(x) -> float:
    return float((np.asarray(x, dtype=float)[0] - QUADRATIC_OPTIMUM) ** 2)


PID_SPACE = SearchSpace(np.array([0.0, 0.0, 0.0]), np.array([5.0, 5.0, 5.0]))

# Simulator seeds per objective evaluation (training regime) and per held-out
# scoring. More held-out seeds stabilize the comparison between tuners.
N_TRAIN_SIM_SEEDS = 2
N_HELDOUT_SIM_SEEDS = 5


def quad_surrogate_config(model: str, **overrides) -> SurrogateConfig:
    base = {"model": model, "t1": 30, "t2": 5, "eta1": 0.1, "eta2": 0.005,
            "lam": 0.01, "noise": NoiseSpec(0.1)}
    base.update(overrides)
    return SurrogateConfig(**base)


def quad_bo_experiment(kind: TrajectoryKind, model: str, experiment_seed: int,
                       t_bo: int = 50, n_init: int = 5, acq: str = "ucb",
                       surrogate: SurrogateConfig | None = None) -> dict:
    """Tune PID gains on the training wind regime, score on the held-out one.

    The simulator seeds for training evaluations and for held-out scoring are
    derived from experiment_seed, so two tuners given the same seed face the
    same disturbances.
    """
    cfg = surrogate if surrogate is not None else quad_surrogate_config(model)
    train_seeds = [int(v) for v in
                   rng_for(experiment_seed, "sim-train").integers(2 ** 31, size=N_TRAIN_SIM_SEEDS)]
    heldout_seeds = [int(v) for v in
                     rng_for(experiment_seed, "sim-heldout").integers(2 ** 31, size=N_HELDOUT_SIM_SEEDS)]

    def objective(x):
        gains = PIDGains.from_array(x)
        return pid_objective(gains, WIND_DOMAIN_TRAIN, [kind], train_seeds)

    state, diag = bo_run(objective, PID_SPACE, cfg, acq, t_bo,
                         n_init=n_init, seed=experiment_seed)
    gains = PIDGains.from_array(state.incumbent_x)
    heldout = pid_objective(gains, WIND_DOMAIN_HELDOUT, [kind], heldout_seeds)
    return {
        "trajectory": kind.value,
        "model": model,
        "experiment_seed": experiment_seed,
        "gains": {"kp": gains.kp, "ki": gains.ki, "kd": gains.kd},
        "train_ace": state.incumbent_f,
        "heldout_ace": heldout,
        "heldout_seeds": heldout_seeds,
        "state": state,
        "diagnostics": diag,
    }


def heldout_trajectory(gains: PIDGains, kind: TrajectoryKind, seed: int):
    """One held-out-regime flight for CSV export."""
    return simulate(gains, kind, WIND_DOMAIN_HELDOUT, seed)


def compare_tuners(kind: TrajectoryKind, experiment_seeds=(0, 1, 2, 3, 4),
                   t_bo: int = 50, n_init: int = 5,
                   dil_cfg: SurrogateConfig | None = None,
                   gp_cfg: SurrogateConfig | None = None) -> dict:
    """Run the DIL-vs-plain-GP tuning comparison over several seeds."""
    rows = []
    wins = 0
    for s in experiment_seeds:
        dil = quad_bo_experiment(kind, "dil_gp", s, t_bo, n_init, surrogate=dil_cfg)
        gp = quad_bo_experiment(kind, "gp_gaussian", s, t_bo, n_init, surrogate=gp_cfg)
        win = dil["heldout_ace"] <= gp["heldout_ace"]
        wins += int(win)
        rows.append({"seed": s, "dil_heldout": dil["heldout_ace"],
                     "gp_heldout": gp["heldout_ace"], "dil_wins": win})
    return {"trajectory": kind.value, "rows": rows, "dil_wins": wins,
            "n_seeds": len(list(experiment_seeds))}
