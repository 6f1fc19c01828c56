"""Desk-scale quadrotor tracking simulator: 3-DOF point mass, per-axis PID
acceleration commands, and colored gust noise with distinct train/held-out
wind regimes. Exposes the averaged control error (ACE) that the optimizer
tunes PID gains against.

The vehicle is a unit point mass with gravity already compensated, so the
commanded acceleration acts directly on each axis and wind enters as an
additive acceleration. This keeps the tuning problem (gains -> tracking
error under stochastic disturbance, with regime shift between domains)
while avoiding any rigid-body attitude model.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.signal import lfilter

from .exceptions import NonFiniteInput
from .rng import rng_for

DT = 0.01                 # s
DURATION = 20.0           # s
N_STEPS = 2000
AMPLITUDE = 1.0           # m
OMEGA = 2.0 * math.pi / 10.0   # rad/s
FORWARD_SPEED = 0.2       # m/s
CLIMB_RATE = 0.05         # m/s
ACCEL_LIMIT = 10.0        # m/s^2 per axis
INTEGRAL_LIMIT = 5.0      # clamp on the accumulated error integral


class TrajectoryKind(Enum):
    HOVER = "hover"
    FIG8 = "fig8"
    SIN_FORWARD = "sin_forward"
    SPIRAL_UP = "spiral_up"


@dataclass(frozen=True)
class PIDGains:
    """One (kp, ki, kd) triple shared by the three position axes."""

    kp: float
    ki: float
    kd: float

    def __post_init__(self):
        for name in ("kp", "ki", "kd"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise NonFiniteInput(f"{name} must be finite and >= 0, got {v!r}")

    @classmethod
    def from_array(cls, v) -> "PIDGains":
        v = np.asarray(v, dtype=float).reshape(-1)
        return cls(float(v[0]), float(v[1]), float(v[2]))


@dataclass(frozen=True)
class WindDomainSpec:
    """Gust statistics: mean/variance for the two horizontal axes and the
    vertical axis, plus the correlation time of the coloring filter."""

    mean_h: float
    mean_v: float
    var_h: float
    var_v: float
    correlation_time: float

    def __post_init__(self):
        if self.var_h < 0 or self.var_v < 0:
            raise ValueError("variances must be >= 0")
        if not self.correlation_time > 0:
            raise ValueError("correlation_time must be > 0")


# Training regime: zero-mean, strong, rapidly changing gusts. Held-out
# regime: biased, weaker, slowly varying gusts.
WIND_DOMAIN_TRAIN = WindDomainSpec(0.0, 0.0, 5.0, 2.5, 0.5)
WIND_DOMAIN_HELDOUT = WindDomainSpec(3.0, 1.0, 2.0, 1.0, 2.0)


def reference_trajectory(kind: TrajectoryKind, t) -> np.ndarray:
    """Reference position at time t (seconds, in [0, DURATION]).

    Accepts a scalar or a 1-D array of times; returns shape (3,) or (n, 3).
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > DURATION):
        raise ValueError(f"t must lie in [0, {DURATION}], got {t!r}")
    wt = OMEGA * t_arr
    one = np.ones_like(t_arr)
    if kind is TrajectoryKind.HOVER:
        ref = (0.0 * one, 0.0 * one, one)
    elif kind is TrajectoryKind.FIG8:
        ref = (AMPLITUDE * np.sin(wt), AMPLITUDE * np.sin(wt) * np.cos(wt), one)
    elif kind is TrajectoryKind.SIN_FORWARD:
        ref = (FORWARD_SPEED * t_arr, AMPLITUDE * np.sin(wt), one)
    elif kind is TrajectoryKind.SPIRAL_UP:
        ref = (AMPLITUDE * np.cos(wt), AMPLITUDE * np.sin(wt), 0.5 + CLIMB_RATE * t_arr)
    else:
        raise ValueError(f"unknown trajectory {kind!r}")
    return np.stack(ref, axis=-1)


def dryden_wind(spec: WindDomainSpec, seed: int, dt: float, n_steps: int
                ) -> tuple[np.ndarray, np.ndarray]:
    """Colored gust sequences: (horizontal (n, 2), vertical (n,)).

    Each axis follows the first-order recursion
        w_{k+1} = w_k + (mu - w_k) dt/tau + sqrt(2 var dt/tau) u_k
    with u_k uniform on [-sqrt(3), sqrt(3)] (unit variance) and w_0 = mu, so
    the long-run mean and variance converge to the values in ``spec``. Requires
    dt < 2 tau for the recursion to be stable.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    a = dt / spec.correlation_time
    rng = rng_for(seed, "dryden-wind")
    u = rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), (n_steps, 3))
    out = np.empty((n_steps, 3))
    for j, (mu, var) in enumerate([(spec.mean_h, spec.var_h),
                                   (spec.mean_h, spec.var_h),
                                   (spec.mean_v, spec.var_v)]):
        drive = mu * a + math.sqrt(2.0 * var * a) * u[:, j]
        out[:, j], _ = lfilter([1.0], [1.0, -(1.0 - a)], drive, zi=[(1.0 - a) * mu])
    return out[:, :2], out[:, 2]


@dataclass
class SimResult:
    ace: float
    positions: np.ndarray    # (m, 3) flown positions
    reference: np.ndarray    # (m, 3) reference at the same times
    diverged: bool = False

    def export_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "x", "y", "z", "ref_x", "ref_y", "ref_z"])
            for k in range(self.positions.shape[0]):
                row = [repr(k * DT)]
                row += [repr(float(v)) for v in self.positions[k]]
                row += [repr(float(v)) for v in self.reference[k]]
                writer.writerow(row)


def _track_axis(ref: list, wind: list, kp: float, ki: float, kd: float,
                p0: float) -> list:
    """Integrate one axis; returns positions at each step (possibly truncated
    if the state stops being finite)."""
    p, v = p0, 0.0
    integral = 0.0
    e_prev = ref[0] - p0
    out = []
    for k in range(len(ref)):
        if not math.isfinite(p):
            break
        out.append(p)
        e = ref[k] - p
        integral = max(-INTEGRAL_LIMIT, min(INTEGRAL_LIMIT, integral + e * DT))
        deriv = (e - e_prev) / DT
        e_prev = e
        cmd = kp * e + ki * integral + kd * deriv
        cmd = max(-ACCEL_LIMIT, min(ACCEL_LIMIT, cmd))
        a = cmd + wind[k]
        v += a * DT
        p += v * DT
    return out


def simulate(gains: PIDGains, kind: TrajectoryKind, wind_spec: WindDomainSpec,
             seed: int, start_offset=None) -> SimResult:
    """Fly one 20 s trajectory and score the mean squared position error.

    The vehicle starts at the reference's initial point (plus start_offset if
    given) with zero velocity. If any axis's state becomes non-finite the
    run aborts at that step and ace is the +inf sentinel with diverged set.
    """
    ref = reference_trajectory(kind, np.arange(N_STEPS) * DT)
    w_h, w_v = dryden_wind(wind_spec, seed, DT, N_STEPS)
    wind = np.column_stack([w_h, w_v])
    p0 = ref[0].copy()
    if start_offset is not None:
        p0 = p0 + np.asarray(start_offset, dtype=float)
    axes = [_track_axis(ref[:, j].tolist(), wind[:, j].tolist(),
                        gains.kp, gains.ki, gains.kd, float(p0[j]))
            for j in range(3)]
    m = min(len(ax) for ax in axes)
    if m == 0:
        return SimResult(math.inf, np.empty((0, 3)), np.empty((0, 3)), diverged=True)
    positions = np.column_stack([ax[:m] for ax in axes])
    reference = ref[:m]
    if m < N_STEPS:
        return SimResult(math.inf, positions, reference, diverged=True)
    err = positions - reference
    ace = float(np.mean(np.sum(err * err, axis=1)))
    if not math.isfinite(ace):
        return SimResult(math.inf, positions, reference, diverged=True)
    return SimResult(ace, positions, reference)


def pid_objective(gains: PIDGains, train_spec: WindDomainSpec,
                  kinds, seeds) -> float:
    """Mean ACE over every (trajectory, seed) pair under one wind regime.

    Iterates trajectories in enum order and seeds in the order given, so the
    average is reproducible; a diverged run makes the result +inf.
    """
    if not isinstance(gains, PIDGains):
        gains = PIDGains.from_array(gains)
    kind_set = set(kinds)
    ordered = [k for k in TrajectoryKind if k in kind_set]
    seeds = list(seeds)
    if not ordered or not seeds:
        raise ValueError("kinds and seeds must be nonempty")
    total = 0.0
    for kind in ordered:
        for s in seeds:
            total += simulate(gains, kind, train_spec, s).ace
    return total / (len(ordered) * len(seeds))
