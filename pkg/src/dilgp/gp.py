"""Exact Gaussian-process regression via Cholesky factorization.

Everything here works on a fixed kernel: fitting computes the factorization
of K + sigma^2 I once, prediction and likelihood evaluations reuse it.
Per-environment likelihoods mask the residual inside both quadratic-form
factors while keeping the full-data log-determinant and normalizer.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular

from .exceptions import DimensionMismatch, NonFiniteInput, NotPositiveDefinite
from .kernels import KernelKind, KernelParams, kernel_diag, kernel_grads, kernel_matrix

LOG_2PI = math.log(2.0 * math.pi)

# Relative jitter ladder tried when the Cholesky factorization fails.
_JITTER_START = 1e-10
_JITTER_STOP = 1e-4


@dataclass(frozen=True)
class NoiseSpec:
    """Observation noise variance sigma^2 added to the Gram diagonal."""

    sigma2: float = 0.01

    def __post_init__(self):
        if not math.isfinite(self.sigma2) or self.sigma2 < 0.0:
            raise NonFiniteInput(f"sigma2 must be finite and >= 0, got {self.sigma2!r}")


class _ClampCounter:
    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    def add(self, k: int):
        if k:
            with self._lock:
                self._count += k

    def value(self) -> int:
        with self._lock:
            return self._count

    def reset(self):
        with self._lock:
            self._count = 0


_CLAMPS = _ClampCounter()


def variance_clamp_count() -> int:
    """Number of predictive variances clamped to zero so far (process-wide)."""
    return _CLAMPS.value()


def reset_variance_clamp_count():
    _CLAMPS.reset()


def _validate_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatch(f"X must be 2-D, got shape {X.shape}", X.shape, None)
    if y.shape != (X.shape[0],):
        raise DimensionMismatch(
            f"y must have shape ({X.shape[0]},), got {y.shape}", y.shape, (X.shape[0],))
    if not np.all(np.isfinite(y)):
        raise NonFiniteInput("targets contain NaN or infinity")
    return X, y


def _factor(kind: KernelKind, params: KernelParams, noise: NoiseSpec,
            X: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of K + sigma^2 I, with adaptive diagonal jitter.

    Returns (L, jitter). Jitter starts at 1e-10 * mean diagonal and grows
    tenfold until the factorization succeeds or 1e-4 * mean diagonal is
    exceeded, at which point NotPositiveDefinite is raised.
    """
    K = kernel_matrix(kind, params, X, X)
    n = X.shape[0]
    A = K + noise.sigma2 * np.eye(n)
    if not np.all(np.isfinite(A)):
        raise NonFiniteInput("kernel matrix contains non-finite entries")
    scale = max(np.trace(A) / n, np.finfo(float).tiny)
    jitter = 0.0
    while True:
        try:
            L = cholesky(A + jitter * np.eye(n) if jitter else A,
                         lower=True, check_finite=False)
            return L, jitter
        except LinAlgError:
            jitter = _JITTER_START * scale if jitter == 0.0 else jitter * 10.0
            if jitter > _JITTER_STOP * scale:
                raise NotPositiveDefinite(
                    f"covariance not positive definite after jitter up to "
                    f"{_JITTER_STOP * scale:g}", params=params) from None


@dataclass(frozen=True)
class GPPosterior:
    """Immutable fitted state shared by predict and likelihood evaluations."""

    kind: KernelKind
    params: KernelParams
    noise: NoiseSpec
    train_x: np.ndarray
    chol: np.ndarray          # lower triangular L with L L^T = K + sigma^2 I (+ jitter)
    alpha_vec: np.ndarray     # (K + sigma^2 I)^-1 (y - mean_const)
    mean_const: float
    jitter: float


def fit_posterior(kind: KernelKind, params: KernelParams, noise: NoiseSpec,
                  X, y, mean_const: float = 0.0) -> GPPosterior:
    X, y = _validate_xy(X, y)
    if X.shape[0] < 1:
        raise DimensionMismatch("need at least one training point", X.shape, None)
    L, jitter = _factor(kind, params, noise, X)
    r = y - mean_const
    alpha = cho_solve((L, True), r, check_finite=False)
    for a in (X, L, alpha):
        a.flags.writeable = False
    return GPPosterior(kind, params, noise, X, L, alpha, float(mean_const), jitter)


def predict(post: GPPosterior, Xs) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at query points.

    Negative variances produced by round-off are clamped to zero; each clamp
    increments a process-wide counter readable via variance_clamp_count().
    """
    Kxs = kernel_matrix(post.kind, post.params, post.train_x, Xs)
    mean = post.mean_const + Kxs.T @ post.alpha_vec
    v = solve_triangular(post.chol, Kxs, lower=True, check_finite=False)
    var = kernel_diag(post.kind, post.params, np.asarray(Xs, dtype=float)) - np.einsum("ij,ij->j", v, v)
    neg = var < 0.0
    _CLAMPS.add(int(np.count_nonzero(neg)))
    return mean, np.where(neg, 0.0, var)


def _gaussian_quad_ll(L: np.ndarray, r: np.ndarray) -> float:
    """-1/2 r^T (L L^T)^-1 r - sum(log diag L) - n/2 log(2 pi)."""
    alpha = cho_solve((L, True), r, check_finite=False)
    n = r.shape[0]
    return float(-0.5 * (r @ alpha) - np.sum(np.log(np.diag(L))) - 0.5 * n * LOG_2PI)


def log_marginal_likelihood(kind: KernelKind, params: KernelParams, noise: NoiseSpec,
                            X, y, mean_const: float = 0.0) -> float:
    X, y = _validate_xy(X, y)
    L, _ = _factor(kind, params, noise, X)
    return _gaussian_quad_ll(L, y - mean_const)


def env_log_likelihood(kind: KernelKind, params: KernelParams, noise: NoiseSpec,
                       X, y, mask, mean_const: float = 0.0) -> float:
    """Log-likelihood with the residual soft-masked by per-point weights.

    The mask multiplies the residual in both factors of the quadratic form;
    the log-determinant and the normalizer stay those of the full data, so an
    all-ones mask recovers log_marginal_likelihood exactly.
    """
    X, y = _validate_xy(X, y)
    mask = np.asarray(mask, dtype=float)
    if mask.shape != y.shape:
        raise DimensionMismatch(f"mask shape {mask.shape} != y shape {y.shape}",
                                mask.shape, y.shape)
    if not np.all(np.isfinite(mask)) or np.any(mask < 0.0) or np.any(mask > 1.0):
        raise NonFiniteInput("mask entries must lie in [0, 1]")
    L, _ = _factor(kind, params, noise, X)
    return _gaussian_quad_ll(L, (y - mean_const) * mask)


def lml_value_and_grad(kind: KernelKind, params: KernelParams, noise: NoiseSpec,
                       X, y, mean_const: float = 0.0,
                       with_noise_grad: bool = False):
    """Log marginal likelihood and its gradient in the log-parameters.

    Uses the standard trace identity: for K depending on a parameter p,
    d LML / dp = 1/2 (alpha^T dK/dp alpha - tr(A^-1 dK/dp)) with
    A = K + sigma^2 I and alpha = A^-1 r.

    With ``with_noise_grad`` the returned gradient has a fifth entry, the
    derivative in log sigma^2 (dA/dlog sigma^2 = sigma^2 I).
    """
    X, y = _validate_xy(X, y)
    n = X.shape[0]
    L, _ = _factor(kind, params, noise, X)
    r = y - mean_const
    alpha = cho_solve((L, True), r, check_finite=False)
    val = float(-0.5 * (r @ alpha) - np.sum(np.log(np.diag(L))) - 0.5 * n * LOG_2PI)
    A_inv = cho_solve((L, True), np.eye(n), check_finite=False)
    grads = kernel_grads(kind, params, X)
    size = 5 if with_noise_grad else 4
    g = np.zeros(size)
    for p in range(4):
        C = grads[p]
        g[p] = 0.5 * (alpha @ C @ alpha - np.einsum("ij,ij->", A_inv, C))
    if with_noise_grad:
        g[4] = 0.5 * noise.sigma2 * (alpha @ alpha - np.trace(A_inv))
    return val, g


def env_scale_derivative(kind: KernelKind, params: KernelParams, noise: NoiseSpec,
                         X, y, mask, mean_const: float = 0.0) -> float:
    """d/dw of env_log_likelihood with parameters scaled by w, at w = 1.

    Since w multiplies the exponentiated parameters, this equals the sum of
    the log-space partial derivatives, i.e. the trace identity applied to
    C = sum_p dK/dlog theta_p with the masked residual.
    """
    X, y = _validate_xy(X, y)
    mask = np.asarray(mask, dtype=float)
    n = X.shape[0]
    L, _ = _factor(kind, params, noise, X)
    rm = (y - mean_const) * mask
    am = cho_solve((L, True), rm, check_finite=False)
    A_inv = cho_solve((L, True), np.eye(n), check_finite=False)
    C = kernel_grads(kind, params, X).sum(axis=0)
    return float(0.5 * (am @ C @ am - np.einsum("ij,ij->", A_inv, C)))
