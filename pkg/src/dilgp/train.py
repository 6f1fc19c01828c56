"""Adversarial environment inference and invariance-penalized GP training.

Training alternates two moves. Per-point logits q_tilde define soft
assignments to two environments; gradient ascent on the invariance penalty
pushes the logits toward the split on which the kernel generalizes worst.
The kernel log-parameters then take one descent step on

    objective(theta) = -log marginal likelihood + lam * penalty

where the penalty sums, over both environments, the squared derivative of
the masked environment likelihood under a common rescaling of the
exponentiated parameters. At a parameterization that fits both environments
equally well those derivatives vanish, so the penalty rewards invariance.

Two gradient modes exist. "analytic_fd_hybrid" uses closed-form gradients
everywhere except the theta-derivative of the penalty, which is central
finite differences. "full_fd" differentiates everything by central finite
differences and serves as a slow cross-check.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import expit

from .exceptions import DimensionMismatch, NonFiniteInput, NotPositiveDefinite, TrainingAbort
from .gp import NoiseSpec, _factor, _gaussian_quad_ll, _validate_xy, lml_value_and_grad
from .kernels import (ACTIVE_PARAMS, PARAM_NAMES, KernelKind, KernelParams,
                      kernel_scale_direction)
from .rng import rng_for

GRAD_MODES = ("analytic_fd_hybrid", "full_fd")

# Central-difference step sizes.
_H_SCALE = 1e-5   # common rescaling factor w
_H_LOGIT = 1e-4   # logits q_tilde
_H_THETA = 1e-4   # log-parameters
_MAX_HALVINGS = 8


@dataclass
class DomainLogits:
    """Per-point logits of membership in environment 0."""

    q_tilde: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q_tilde, dtype=float)
        if q.ndim != 1:
            raise DimensionMismatch(f"logits must be 1-D, got shape {q.shape}", q.shape, None)
        if not np.all(np.isfinite(q)):
            raise NonFiniteInput("logits contain NaN or infinity")
        self.q_tilde = q


def env_masks(logits: DomainLogits) -> tuple[np.ndarray, np.ndarray]:
    """Soft membership masks (m0, m1) = (sigmoid(q_tilde), 1 - sigmoid(q_tilde)).

    Computed through sigmoid(|q|), whose complement against 1 is exact in
    floating point, so that negating the logits swaps the two masks
    bit-for-bit and m0 + m1 == 1 holds exactly.
    """
    q = logits.q_tilde
    p = expit(np.abs(q))
    m0 = np.where(q >= 0, p, 1.0 - p)
    return m0, 1.0 - m0


@dataclass(frozen=True)
class TrainConfig:
    t1_outer: int = 100
    t2_inner: int = 10
    eta1: float = 0.05
    eta2: float = 0.01
    lam: float = 1.0
    seed: int = 0
    grad_mode: str = "analytic_fd_hybrid"
    optimize_noise: bool = False
    mean_const: float = 0.0

    def __post_init__(self):
        if self.t1_outer < 1:
            raise ValueError("t1_outer must be >= 1")
        if self.t2_inner < 0:
            raise ValueError("t2_inner must be >= 0")
        if not (self.eta1 > 0 and self.eta2 > 0):
            raise ValueError("learning rates must be > 0")
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ValueError("lam must be finite and >= 0")
        if self.grad_mode not in GRAD_MODES:
            raise ValueError(f"grad_mode must be one of {GRAD_MODES}, got {self.grad_mode!r}")


@dataclass(frozen=True)
class PenaltyReport:
    penalty: float
    per_env_grad: tuple[float, float]


@dataclass
class TraceRecord:
    step: int
    objective: float
    penalty: float
    per_env_grad: tuple[float, float]
    params: KernelParams
    noise_sigma2: float

    def to_json_dict(self) -> dict:
        return {
            "step": self.step,
            "objective": self.objective,
            "penalty": self.penalty,
            "per_env_grad": list(self.per_env_grad),
            "params": self.params.to_dict(),
            "noise_sigma2": self.noise_sigma2,
        }


@dataclass
class TrainTrace:
    records: list[TraceRecord] = field(default_factory=list)
    aborted: bool = False
    final_noise: NoiseSpec | None = None

    def __len__(self):
        return len(self.records)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_json_dict(), sort_keys=True) + "\n" for r in self.records)


class TrainState:
    """Data, settings and factorizations cached at the current parameters.

    The parameters are fixed while the logits move, so the pieces the ascent
    needs repeatedly are computed once here: in hybrid mode the sandwich
    matrix M = A^-1 C A^-1 (A = K + sigma^2 I, C = sum_p dK/dlog theta_p) and
    tr(A^-1 C); in full-FD mode the two factorizations at rescaled
    parameters, which are logit-independent. One ascent step then costs
    O(n^2).
    """

    def __init__(self, kind: KernelKind, params: KernelParams, noise: NoiseSpec,
                 X, y, grad_mode: str = "analytic_fd_hybrid", mean_const: float = 0.0,
                 optimize_noise: bool = False):
        if grad_mode not in GRAD_MODES:
            raise ValueError(f"grad_mode must be one of {GRAD_MODES}, got {grad_mode!r}")
        X, y = _validate_xy(X, y)
        self.kind = kind
        self.params = params
        self.noise = noise
        self.X = X
        self.y = y
        self.grad_mode = grad_mode
        self.mean_const = float(mean_const)
        self.optimize_noise = optimize_noise
        self.r = y - self.mean_const
        n = X.shape[0]
        if grad_mode == "analytic_fd_hybrid":
            L, _ = _factor(kind, params, noise, X)
            A_inv = cho_solve((L, True), np.eye(n), check_finite=False)
            C = kernel_scale_direction(kind, params, X)
            self.M = A_inv @ C @ A_inv
            self.tr_AinvC = float(np.einsum("ij,ij->", A_inv, C))
        else:
            self.L_plus, _ = _factor(kind, params.scaled(1.0 + _H_SCALE), noise, X)
            self.L_minus, _ = _factor(kind, params.scaled(1.0 - _H_SCALE), noise, X)

    def per_env_scale_grads(self, m0: np.ndarray, m1: np.ndarray) -> tuple[float, float]:
        """d/dw of each environment's masked likelihood at w = 1."""
        out = []
        for m in (m0, m1):
            rm = self.r * m
            if self.grad_mode == "analytic_fd_hybrid":
                out.append(float(0.5 * (rm @ self.M @ rm) - 0.5 * self.tr_AinvC))
            else:
                lp = _gaussian_quad_ll(self.L_plus, rm)
                lm = _gaussian_quad_ll(self.L_minus, rm)
                out.append((lp - lm) / (2.0 * _H_SCALE))
        return out[0], out[1]

    def penalty(self, logits: DomainLogits) -> PenaltyReport:
        m0, m1 = env_masks(logits)
        g0, g1 = self.per_env_scale_grads(m0, m1)
        return PenaltyReport(g0 * g0 + g1 * g1, (g0, g1))

    def grad_q(self, logits: DomainLogits) -> np.ndarray:
        """Gradient of the penalty in the logits."""
        if self.grad_mode == "analytic_fd_hybrid":
            m0, m1 = env_masks(logits)
            v0 = self.r * m0
            v1 = self.r * m1
            g0 = float(0.5 * (v0 @ self.M @ v0) - 0.5 * self.tr_AinvC)
            g1 = float(0.5 * (v1 @ self.M @ v1) - 0.5 * self.tr_AinvC)
            sig_prime = m0 * m1
            return 2.0 * self.r * sig_prime * (g0 * (self.M @ v0) - g1 * (self.M @ v1))
        q = logits.q_tilde
        g = np.zeros_like(q)
        for i in range(q.shape[0]):
            for sign in (1.0, -1.0):
                shifted = q.copy()
                shifted[i] += sign * _H_LOGIT
                g[i] += sign * self.penalty(DomainLogits(shifted)).penalty
        return g / (2.0 * _H_LOGIT)


def irm_penalty(kind: KernelKind, params: KernelParams, noise: NoiseSpec,
                X, y, logits: DomainLogits, grad_mode: str = "analytic_fd_hybrid",
                mean_const: float = 0.0) -> PenaltyReport:
    """Invariance penalty g0^2 + g1^2 with the per-environment derivatives.

    g_e is the derivative, at w = 1, of the environment-masked likelihood
    when every exponentiated kernel parameter is multiplied by the scalar w.
    """
    return TrainState(kind, params, noise, X, y, grad_mode, mean_const).penalty(logits)


def inner_ascent_step(logits: DomainLogits, state: TrainState, eta1: float) -> DomainLogits:
    """One gradient-ascent step on the penalty in the logits."""
    g = state.grad_q(logits)
    if not np.all(np.isfinite(g)):
        bad = int(np.flatnonzero(~np.isfinite(g))[0])
        raise TrainingAbort(f"non-finite logit gradient at coordinate {bad}")
    return DomainLogits(logits.q_tilde + eta1 * g)


def _penalty_at(state: TrainState, params: KernelParams, noise: NoiseSpec,
                m0: np.ndarray, m1: np.ndarray) -> tuple[float, tuple[float, float]]:
    """Penalty for fixed masks at arbitrary parameters (used by FD in theta)."""
    r = state.r
    if state.grad_mode == "analytic_fd_hybrid":
        n = state.X.shape[0]
        L, _ = _factor(state.kind, params, noise, state.X)
        A_inv = cho_solve((L, True), np.eye(n), check_finite=False)
        C = kernel_scale_direction(state.kind, params, state.X)
        tr = float(np.einsum("ij,ij->", A_inv, C))
        gs = []
        for m in (m0, m1):
            am = cho_solve((L, True), r * m, check_finite=False)
            gs.append(float(0.5 * (am @ C @ am) - 0.5 * tr))
    else:
        Lp, _ = _factor(state.kind, params.scaled(1.0 + _H_SCALE), noise, state.X)
        Lm, _ = _factor(state.kind, params.scaled(1.0 - _H_SCALE), noise, state.X)
        gs = []
        for m in (m0, m1):
            rm = r * m
            gs.append((_gaussian_quad_ll(Lp, rm) - _gaussian_quad_ll(Lm, rm)) / (2.0 * _H_SCALE))
    g0, g1 = gs
    return g0 * g0 + g1 * g1, (g0, g1)


def _nll_value(state: TrainState, params: KernelParams, noise: NoiseSpec) -> float:
    L, _ = _factor(state.kind, params, noise, state.X)
    return -_gaussian_quad_ll(L, state.r)


def _shift_noise(noise: NoiseSpec, delta: float) -> NoiseSpec:
    return NoiseSpec(noise.sigma2 * math.exp(delta))


def _nll_value_and_grad(state: TrainState, params: KernelParams, noise: NoiseSpec):
    if state.grad_mode == "analytic_fd_hybrid":
        val, g = lml_value_and_grad(state.kind, params, noise, state.X, state.y,
                                    state.mean_const, with_noise_grad=state.optimize_noise)
        return -val, -g
    size = 5 if state.optimize_noise else 4
    g = np.zeros(size)
    val = _nll_value(state, params, noise)
    for p_idx, name in enumerate(PARAM_NAMES):
        if name not in ACTIVE_PARAMS[state.kind]:
            continue
        vp = _nll_value(state, params.shifted(name, _H_THETA), noise)
        vm = _nll_value(state, params.shifted(name, -_H_THETA), noise)
        g[p_idx] = (vp - vm) / (2.0 * _H_THETA)
    if state.optimize_noise:
        vp = _nll_value(state, params, _shift_noise(noise, _H_THETA))
        vm = _nll_value(state, params, _shift_noise(noise, -_H_THETA))
        g[4] = (vp - vm) / (2.0 * _H_THETA)
    return val, g


def _penalty_theta_grad(state: TrainState, params: KernelParams, noise: NoiseSpec,
                        m0: np.ndarray, m1: np.ndarray) -> np.ndarray:
    """Central finite differences of the penalty in the log-parameters."""
    size = 5 if state.optimize_noise else 4
    g = np.zeros(size)
    for p_idx, name in enumerate(PARAM_NAMES):
        # Parameters the kernel never reads leave the penalty unchanged.
        if name not in ACTIVE_PARAMS[state.kind]:
            continue
        pp, _ = _penalty_at(state, params.shifted(name, _H_THETA), noise, m0, m1)
        pm, _ = _penalty_at(state, params.shifted(name, -_H_THETA), noise, m0, m1)
        g[p_idx] = (pp - pm) / (2.0 * _H_THETA)
    if state.optimize_noise:
        pp, _ = _penalty_at(state, params, _shift_noise(noise, _H_THETA), m0, m1)
        pm, _ = _penalty_at(state, params, _shift_noise(noise, -_H_THETA), m0, m1)
        g[4] = (pp - pm) / (2.0 * _H_THETA)
    return g


def _descent_step(state: TrainState, params: KernelParams, noise: NoiseSpec,
                  m0, m1, eta2: float, lam: float, require_decrease: bool = False):
    """One descent step on NLL + lam * penalty with step-halving on failure.

    A trial step whose objective is non-finite (or whose covariance cannot be
    factorized) is rejected and the step size halved, up to _MAX_HALVINGS
    times; after that the step aborts. With require_decrease the acceptance
    test additionally demands the objective not increase, and exhausting the
    halvings keeps the current parameters instead of aborting.
    """
    cur_nll, g = _nll_value_and_grad(state, params, noise)
    cur_obj = cur_nll
    if lam != 0.0:
        pen, _ = _penalty_at(state, params, noise, m0, m1)
        cur_obj = cur_nll + lam * pen
        g = g + lam * _penalty_theta_grad(state, params, noise, m0, m1)
    theta = params.as_array()
    if state.optimize_noise:
        theta = np.append(theta, math.log(noise.sigma2))
    eta = float(eta2)
    for _ in range(_MAX_HALVINGS + 1):
        trial = theta - eta * g
        try:
            p2 = KernelParams.from_array(trial[:4])
            n2 = NoiseSpec(math.exp(trial[4])) if state.optimize_noise else noise
            nll2 = _nll_value(state, p2, n2)
            if lam != 0.0:
                pen2, per_env2 = _penalty_at(state, p2, n2, m0, m1)
                obj2 = nll2 + lam * pen2
            else:
                pen2, per_env2 = 0.0, (0.0, 0.0)
                obj2 = nll2
        except (NonFiniteInput, NotPositiveDefinite, OverflowError):
            obj2 = math.inf
        if math.isfinite(obj2) and not (require_decrease and obj2 > cur_obj):
            info = {"objective": obj2, "penalty": pen2, "per_env_grad": per_env2,
                    "eta_used": eta, "stalled": False}
            return p2, n2, info
        eta *= 0.5
    if require_decrease:
        return params, noise, {"objective": cur_obj, "penalty": 0.0,
                               "per_env_grad": (0.0, 0.0), "eta_used": 0.0, "stalled": True}
    raise TrainingAbort(
        f"objective stayed non-finite after {_MAX_HALVINGS} step halvings "
        f"(initial step {eta2:g})")


def outer_descent_step(params: KernelParams, logits: DomainLogits, state: TrainState,
                       eta2: float, lam: float) -> KernelParams:
    """One parameter update on NLL + lam * penalty at fixed logits."""
    m0, m1 = env_masks(logits)
    p2, _, _ = _descent_step(state, params, state.noise, m0, m1, eta2, lam)
    return p2


def init_logits(n: int, seed: int) -> DomainLogits:
    """Small random logits: near-equal starting environments, but not the
    exactly symmetric point, where the penalty gradient can vanish."""
    rng = rng_for(seed, "domain-logits")
    return DomainLogits(0.1 * rng.standard_normal(n))


def train_dil_gp(kind: KernelKind, init_params: KernelParams, noise: NoiseSpec,
                 X, y, cfg: TrainConfig) -> tuple[KernelParams, DomainLogits, TrainTrace]:
    """Alternating min-max training.

    Each of the t1_outer rounds runs t2_inner ascent steps on the logits
    (warm-started from the previous round), then one descent step on the
    kernel parameters. The trace holds one record per completed round, with
    objective, penalty and per-environment derivatives evaluated at the
    updated parameters. On abort the partial trace is attached to the raised
    TrainingAbort. With lam = 0 and t2_inner = 0 the parameter trajectory is
    bit-identical to train_vanilla_gp's.
    """
    X, y = _validate_xy(X, y)
    n = X.shape[0]
    if n < 4:
        raise DimensionMismatch(f"need at least 4 training points to split, got {n}",
                                (n,), None)
    logits = init_logits(n, cfg.seed)
    params = init_params
    cur_noise = noise
    trace = TrainTrace(final_noise=cur_noise)
    for t in range(1, cfg.t1_outer + 1):
        try:
            state = TrainState(kind, params, cur_noise, X, y, cfg.grad_mode,
                               cfg.mean_const, cfg.optimize_noise)
            for _ in range(cfg.t2_inner):
                logits = inner_ascent_step(logits, state, cfg.eta1)
            m0, m1 = env_masks(logits)
            params, cur_noise, info = _descent_step(state, params, cur_noise,
                                                    m0, m1, cfg.eta2, cfg.lam)
        except TrainingAbort as exc:
            trace.aborted = True
            trace.final_noise = cur_noise
            exc.trace = trace
            raise
        if cfg.lam != 0.0:
            pen, per_env = info["penalty"], info["per_env_grad"]
        else:
            pen, per_env = _penalty_at(state, params, cur_noise, m0, m1)
        trace.records.append(TraceRecord(t, info["objective"], pen, per_env,
                                         params, cur_noise.sigma2))
    trace.final_noise = cur_noise
    return params, logits, trace


def _train_vanilla(kind: KernelKind, init_params: KernelParams, noise: NoiseSpec,
                   X, y, steps: int, eta: float, grad_mode: str = "analytic_fd_hybrid",
                   mean_const: float = 0.0, optimize_noise: bool = False,
                   monotone: bool = False):
    X, y = _validate_xy(X, y)
    if steps < 0:
        raise ValueError("steps must be >= 0")
    params = init_params
    cur_noise = noise
    trace = TrainTrace(final_noise=cur_noise)
    for t in range(1, steps + 1):
        state = TrainState(kind, params, cur_noise, X, y, grad_mode,
                           mean_const, optimize_noise)
        try:
            params, cur_noise, info = _descent_step(state, params, cur_noise, None, None,
                                                    eta, 0.0, require_decrease=monotone)
        except TrainingAbort as exc:
            trace.aborted = True
            trace.final_noise = cur_noise
            exc.trace = trace
            raise
        trace.records.append(TraceRecord(t, info["objective"], 0.0, (0.0, 0.0),
                                         params, cur_noise.sigma2))
    trace.final_noise = cur_noise
    return params, cur_noise, trace


def train_vanilla_gp(kind: KernelKind, init_params: KernelParams, noise: NoiseSpec,
                     X, y, steps: int, eta: float,
                     grad_mode: str = "analytic_fd_hybrid", mean_const: float = 0.0,
                     optimize_noise: bool = False, monotone: bool = False) -> KernelParams:
    """Plain maximum-likelihood training: descent on the NLL alone.

    Shares the step routine with train_dil_gp. The optional monotone flag
    backtracks within each step until the objective does not increase (a
    stalled step keeps the current parameters).
    """
    params, _, _ = _train_vanilla(kind, init_params, noise, X, y, steps, eta,
                                  grad_mode, mean_const, optimize_noise, monotone)
    return params
