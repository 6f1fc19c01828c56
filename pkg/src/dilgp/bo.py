"""Bayesian optimization with a domain-invariant GP surrogate.

The loop minimizes a black-box objective over a box: fit the surrogate on
everything queried so far, minimize an acquisition over a random candidate
batch, query, repeat. Alongside the loop it maintains the diagnostics that
the GP-UCB style analysis uses: the beta_t schedule, cumulative information
gain, and the resulting regret bound, reported per step.

Swapping the invariant surrogate for a plain GP changes only the fitting
call; proposal, logging and diagnostics are the same code path.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .data import Dataset, Standardizer, fit_standardizer
from .exceptions import DimensionMismatch, NonFiniteInput, ObjectiveFailure
from .gp import GPPosterior, NoiseSpec, fit_posterior, predict
from .kernels import KernelKind, KernelParams
from .rng import rng_for
from .train import TrainConfig, train_dil_gp, _train_vanilla

N_GLOBAL_CANDIDATES = 1024
N_LOCAL_CANDIDATES = 64
LOCAL_STD_FRACTION = 0.05

# Surrogate names accepted across the package; gp_* are plain GPs with the
# named kernel, dil_gp is the invariance-trained model.
MODEL_KINDS = {
    "dil_gp": KernelKind.GAUSSIAN,
    "gp_gaussian": KernelKind.GAUSSIAN,
    "gp_rq": KernelKind.RATIONAL_QUADRATIC,
    "gp_dp": KernelKind.DOT_PRODUCT,
}


@dataclass(frozen=True)
class SearchSpace:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionMismatch(f"bounds shapes differ: {lo.shape} vs {hi.shape}",
                                    lo.shape, hi.shape)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise NonFiniteInput("bounds contain NaN or infinity")
        if not np.all(lo < hi):
            raise ValueError("lower must be < upper elementwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def k(self) -> int:
        return self.lower.shape[0]

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, (n, self.k))

    def clip(self, X: np.ndarray) -> np.ndarray:
        return np.clip(X, self.lower, self.upper)


@dataclass(frozen=True)
class SurrogateConfig:
    """How bo_run fits its model at each step.

    t1/t2/eta1/eta2/lam mirror TrainConfig; for the plain-GP models t2, eta1
    and lam are ignored. The default budgets are reduced relative to
    standalone training since the surrogate is refit every step.
    """

    model: str = "dil_gp"
    init_params: KernelParams = KernelParams()
    noise: NoiseSpec = NoiseSpec(0.01)
    t1: int = 30
    t2: int = 5
    eta1: float = 0.05
    eta2: float = 0.01
    lam: float = 1.0
    grad_mode: str = "analytic_fd_hybrid"
    standardize: bool = True
    mean_const: float = 0.0

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ValueError(f"model must be one of {sorted(MODEL_KINDS)}, got {self.model!r}")
        if self.t1 < 0:
            raise ValueError("t1 must be >= 0")

    @property
    def kind(self) -> KernelKind:
        return MODEL_KINDS[self.model]


@dataclass
class BOState:
    queried_x: np.ndarray
    queried_f: np.ndarray
    incumbent_x: np.ndarray
    incumbent_f: float
    sigma_history: list[float] = field(default_factory=list)
    failed_steps: list[int] = field(default_factory=list)
    n_init: int = 0
    rng_seed: int = 0

    def to_json_dict(self) -> dict:
        return {
            "queried_x": self.queried_x.tolist(),
            "queried_f": self.queried_f.tolist(),
            "incumbent_x": self.incumbent_x.tolist(),
            "incumbent_f": self.incumbent_f,
            "sigma_history": list(self.sigma_history),
            "failed_steps": list(self.failed_steps),
            "n_init": self.n_init,
            "rng_seed": self.rng_seed,
        }


@dataclass
class RegretDiagnostics:
    beta: np.ndarray
    info_gain: np.ndarray        # cumulative, includes the initial design's gain
    regret_bound: np.ndarray
    cum_regret: np.ndarray | None = None
    sigma2_noise: float = 0.0

    def to_json_dict(self) -> dict:
        out = {
            "beta": self.beta.tolist(),
            "info_gain": self.info_gain.tolist(),
            "regret_bound": self.regret_bound.tolist(),
            "sigma2_noise": self.sigma2_noise,
        }
        if self.cum_regret is not None:
            out["cum_regret"] = self.cum_regret.tolist()
        return out


def acquisition_ucb(mean, std, beta_t: float):
    """Lower-confidence score mean - sqrt(beta_t) * std (loop minimizes)."""
    return np.asarray(mean) - math.sqrt(beta_t) * np.asarray(std)


def acquisition_ei(mean, std, best_f: float):
    """Negated expected improvement below best_f (so argmin picks the best)."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    improve = best_f - mean
    safe = np.where(std > 0, std, 1.0)
    z = improve / safe
    pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    ei = np.where(std > 0, improve * ndtr(z) + std * pdf, np.maximum(improve, 0.0))
    return -ei


def beta_schedule(t: int, bound_b: float, sigma: float, gamma_prev: float,
                  delta: float) -> float:
    """Exploration coefficient B + sigma * sqrt(2 (gamma_{t-1} + 1 + log(4/delta)))."""
    # log(4/delta) must stay positive; values up to 4 keep the radicand sane.
    if not 0.0 < delta < 4.0:
        raise ValueError(f"delta must be in (0, 4), got {delta!r}")
    if gamma_prev < 0:
        raise ValueError(f"gamma_prev must be >= 0, got {gamma_prev!r}")
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t!r}")
    return bound_b + sigma * math.sqrt(2.0 * (gamma_prev + 1.0 + math.log(4.0 / delta)))


def information_gain_step(sigma2_noise: float, sigma_pred: float) -> float:
    """Gain from one observation: 1/2 log(1 + sigma_pred^2 / sigma2_noise)."""
    if sigma2_noise <= 0:
        raise ValueError("sigma2_noise must be > 0")
    return 0.5 * math.log1p(sigma_pred ** 2 / sigma2_noise)


def regret_bound(beta_t: float, gamma_t: float, t: int, sigma2_noise: float) -> float:
    """beta_T sqrt(C1 T gamma_T) with C1 = 8 / log(1 + 1/sigma^2)."""
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t!r}")
    c1 = 8.0 / math.log1p(1.0 / sigma2_noise)
    return beta_t * math.sqrt(c1 * t * gamma_t)


class Surrogate:
    """Fitted model over raw inputs; predictions are in standardized-y units."""

    def __init__(self, post: GPPosterior, scaler: Standardizer | None,
                 incumbent_x: np.ndarray):
        self.post = post
        self.scaler = scaler
        self.incumbent_x = incumbent_x

    def predict(self, X_raw) -> tuple[np.ndarray, np.ndarray]:
        X = np.asarray(X_raw, dtype=float)
        if self.scaler is not None:
            X = self.scaler.transform_x(X)
        mean, var = predict(self.post, X)
        return mean, np.sqrt(var)

    def to_std_units(self, f_raw: float) -> float:
        if self.scaler is None:
            return f_raw
        return (f_raw - self.scaler.y_mean) / self.scaler.y_std


def fit_surrogate(cfg: SurrogateConfig, X: np.ndarray, f: np.ndarray,
                  refit_seed: int) -> Surrogate:
    """Standardize (optionally), train per cfg.model, and factorize."""
    ds = Dataset(X, f)
    scaler = None
    if cfg.standardize:
        scaler = fit_standardizer(ds)
        ds = scaler.transform(ds)
    if cfg.model == "dil_gp":
        tc = TrainConfig(t1_outer=cfg.t1, t2_inner=cfg.t2, eta1=cfg.eta1,
                         eta2=cfg.eta2, lam=cfg.lam, seed=refit_seed,
                         grad_mode=cfg.grad_mode, mean_const=cfg.mean_const)
        params, _, _ = train_dil_gp(cfg.kind, cfg.init_params, cfg.noise, ds.x, ds.y, tc)
    else:
        params, _, _ = _train_vanilla(cfg.kind, cfg.init_params, cfg.noise, ds.x, ds.y,
                                      cfg.t1, cfg.eta2, cfg.grad_mode, cfg.mean_const)
    post = fit_posterior(cfg.kind, params, cfg.noise, ds.x, ds.y, cfg.mean_const)
    incumbent_x = X[int(np.argmin(f))]
    return Surrogate(post, scaler, incumbent_x)


def propose_next(surrogate: Surrogate, space: SearchSpace, acq, rng) -> np.ndarray:
    """Minimize the acquisition over 1024 uniform candidates plus 64 Gaussian
    perturbations of the incumbent (std = 5% of box width, clipped)."""
    cand_global = space.uniform(rng, N_GLOBAL_CANDIDATES)
    local = surrogate.incumbent_x + rng.standard_normal((N_LOCAL_CANDIDATES, space.k)) \
        * (LOCAL_STD_FRACTION * space.width)
    cand = np.vstack([cand_global, space.clip(local)])
    mean, std = surrogate.predict(cand)
    scores = np.asarray(acq(mean, std), dtype=float)
    scores = np.where(np.isfinite(scores), scores, np.inf)
    return cand[int(np.argmin(scores))].copy()


def _initial_info_gain(post: GPPosterior, sigma2: float) -> float:
    """1/2 log det(I + K / sigma^2) over the fitted points, from the factor:
    log det(K + sigma^2 I) = 2 sum log diag L."""
    n = post.train_x.shape[0]
    return float(np.sum(np.log(np.diag(post.chol))) - 0.5 * n * math.log(sigma2))


def _eval_objective(objective, x: np.ndarray) -> float:
    val = float(objective(x))
    return val


def bo_run(objective, space: SearchSpace, surrogate_cfg: SurrogateConfig,
           acq: str, t_bo: int, n_init: int = 5, seed: int = 0,
           delta: float = 0.1, f_star: float | None = None
           ) -> tuple[BOState, RegretDiagnostics]:
    """Sequential minimization loop with per-step regret diagnostics.

    Samples n_init uniform points, then for t = 1..t_bo refits the surrogate
    on everything queried, proposes the acquisition minimizer, records the
    pre-query predictive std, and evaluates the objective. A non-finite
    objective value marks the step failed and re-proposes once with a fresh
    candidate batch; a second consecutive failure raises ObjectiveFailure
    carrying the partial state.

    The cumulative information gain starts from the batch gain of the initial
    design (computed at the step-1 surrogate), so that with a fixed kernel
    the streaming total equals the batch log-det over all queried points.
    """
    if t_bo < 1 or n_init < 1:
        raise ValueError("t_bo and n_init must be >= 1")
    if acq not in ("ucb", "ei"):
        raise ValueError(f"acq must be 'ucb' or 'ei', got {acq!r}")
    rng_init = rng_for(seed, "bo-init")
    rng_cand = rng_for(seed, "bo-candidates")

    X = space.uniform(rng_init, n_init)
    f = []
    failed_steps: list[int] = []
    for i in range(n_init):
        val = _eval_objective(objective, X[i])
        if not math.isfinite(val):
            # Initial points are not surrogate proposals; redraw once.
            X[i] = space.uniform(rng_init, 1)[0]
            val = _eval_objective(objective, X[i])
            if not math.isfinite(val):
                state = _snapshot(X[:i], np.array(f), [], [], n_init, seed)
                raise ObjectiveFailure(
                    f"objective non-finite twice at initial point {i}", state=state)
        f.append(val)

    sigma2 = surrogate_cfg.noise.sigma2
    sigma = math.sqrt(sigma2)
    sigma_history: list[float] = []
    betas, gains, bounds, cregs = [], [], [], []
    cum_gain = 0.0
    cum_regret = 0.0

    for t in range(1, t_bo + 1):
        sur = fit_surrogate(surrogate_cfg, np.asarray(X), np.asarray(f),
                            rng_for(seed, "surrogate", t).integers(2 ** 31).item())
        if t == 1:
            cum_gain = _initial_info_gain(sur.post, sigma2)
        beta_t = beta_schedule(t, float(np.max(np.abs(f))), sigma, cum_gain, delta)
        if acq == "ucb":
            acq_fn = functools.partial(acquisition_ucb, beta_t=beta_t)
        else:
            acq_fn = functools.partial(acquisition_ei,
                                       best_f=sur.to_std_units(float(np.min(f))))

        x_t = propose_next(sur, space, acq_fn, rng_cand)
        _, std_t = sur.predict(x_t[None, :])
        val = _eval_objective(objective, x_t)
        if not math.isfinite(val):
            failed_steps.append(t)
            x_t = propose_next(sur, space, acq_fn, rng_cand)
            _, std_t = sur.predict(x_t[None, :])
            val = _eval_objective(objective, x_t)
            if not math.isfinite(val):
                state = _snapshot(np.asarray(X), np.asarray(f), sigma_history,
                                  failed_steps, n_init, seed)
                raise ObjectiveFailure(
                    f"objective non-finite twice in a row at step {t}", state=state)
        sigma_t = float(std_t[0])

        X = np.vstack([X, x_t])
        f.append(val)
        sigma_history.append(sigma_t)
        cum_gain += information_gain_step(sigma2, sigma_t)
        betas.append(beta_t)
        gains.append(cum_gain)
        bounds.append(regret_bound(beta_t, cum_gain, t, sigma2))
        if f_star is not None:
            cum_regret += val - f_star
            cregs.append(cum_regret)

    state = _snapshot(np.asarray(X), np.asarray(f), sigma_history,
                      failed_steps, n_init, seed)
    diag = RegretDiagnostics(np.array(betas), np.array(gains), np.array(bounds),
                             np.array(cregs) if f_star is not None else None,
                             sigma2)
    return state, diag


def _snapshot(X, f, sigma_history, failed_steps, n_init, seed) -> BOState:
    X = np.asarray(X, dtype=float)
    f = np.asarray(f, dtype=float)
    if f.size:
        i = int(np.argmin(f))
        inc_x, inc_f = X[i].copy(), float(f[i])
    else:
        inc_x, inc_f = np.array([]), math.inf
    return BOState(X, f, inc_x, inc_f, list(sigma_history), list(failed_steps),
                   n_init, seed)


def history_jsonl(state: BOState, diag: RegretDiagnostics) -> str:
    """One JSON record per surrogate-driven step."""
    lines = []
    t_bo = len(state.sigma_history)
    for t in range(t_bo):
        i = state.n_init + t
        best_so_far = float(np.min(state.queried_f[:i + 1]))
        rec = {
            "step": t + 1,
            "x": state.queried_x[i].tolist(),
            "f": float(state.queried_f[i]),
            "incumbent_f": best_so_far,
            "sigma_pred": state.sigma_history[t],
            "beta": float(diag.beta[t]),
            "info_gain": float(diag.info_gain[t]),
            "regret_bound": float(diag.regret_bound[t]),
        }
        if diag.cum_regret is not None:
            rec["cum_regret"] = float(diag.cum_regret[t])
        lines.append(json.dumps(rec, sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")
