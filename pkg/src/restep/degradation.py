"""Forward degradation process and noise schedules.

A clean signal ``x`` and its degraded counterpart ``y`` are joined by the
linear interpolation

    x_t = (1 - t) * x + t * y,        0 <= t <= 1,

so ``t = 0`` is the clean end and ``t = 1`` the fully degraded end.  The
stochastic variant adds zero-mean Gaussian noise whose per-coordinate
standard deviation at time ``t`` is ``t * eps(t)`` for a non-negative,
non-increasing schedule ``eps``.  Under the constant schedule the noise
gap between adjacent times vanishes, so reverse-time inference only ever
draws noise once, at ``t = 1``; the Brownian schedule ``eps / sqrt(t)``
keeps injecting fresh noise along the way.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "BrownianSchedule",
    "ConstantSchedule",
    "NoiseSchedule",
    "PairedSample",
    "ScheduleInvariantError",
    "TableSchedule",
    "as_state",
    "forward_degrade_noisy",
    "forward_interpolate",
    "forward_noise_std",
    "injected_noise_std",
    "schedule_epsilon",
]


class ScheduleInvariantError(RuntimeError):
    """A noise schedule violated its non-increasing invariant at runtime."""


def as_state(values, name: str = "state") -> np.ndarray:
    """Coerce ``values`` to a float64 array and require every entry finite.

    Accepts a single signal vector of shape ``(d,)`` or a batch of signals
    with the signal dimension last, e.g. ``(n, d)``.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0:
        raise ValueError(f"{name} must have at least one axis, got a scalar")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _check_time(t, name: str = "t"):
    t_arr = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(t_arr)):
        raise ValueError(f"{name} must be finite")
    if np.any(t_arr < 0.0) or np.any(t_arr > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]")
    return t_arr


# ---- noise schedules ---- #


@dataclass(frozen=True)
class ConstantSchedule:
    """eps(t) = epsilon for every t."""

    epsilon: float

    def __post_init__(self):
        if not np.isfinite(self.epsilon) or self.epsilon < 0.0:
            raise ValueError("epsilon must be finite and >= 0")


@dataclass(frozen=True)
class BrownianSchedule:
    """eps(t) = epsilon / sqrt(t), defined on (0, 1] only.

    The total noise variance accumulated by time ``t`` is then
    ``(t * eps(t))**2 = t * epsilon**2``, linear in ``t`` like the
    variance of a Brownian motion.
    """

    epsilon: float

    def __post_init__(self):
        if not np.isfinite(self.epsilon) or self.epsilon < 0.0:
            raise ValueError("epsilon must be finite and >= 0")


@dataclass(frozen=True)
class TableSchedule:
    """Piecewise-linear eps(t) through the knots ``(times[i], epsilons[i])``.

    Queries outside ``[times[0], times[-1]]`` are errors rather than
    extrapolations: extrapolating could silently break the non-increasing
    invariant the rest of the code relies on.
    """

    times: tuple
    epsilons: tuple

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        eps = np.asarray(self.epsilons, dtype=np.float64)
        if times.ndim != 1 or times.shape != eps.shape or times.size < 2:
            raise ValueError("need matching 1-d times/epsilons with >= 2 knots")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(eps))):
            raise ValueError("table entries must be finite")
        if np.any(times < 0.0) or np.any(times > 1.0):
            raise ValueError("table times must lie in [0, 1]")
        if np.any(np.diff(times) <= 0.0):
            raise ValueError("table times must be strictly increasing")
        if np.any(eps < 0.0):
            raise ValueError("table epsilons must be >= 0")
        if np.any(np.diff(eps) > 0.0):
            raise ValueError("table epsilons must be non-increasing in t")
        object.__setattr__(self, "times", tuple(times.tolist()))
        object.__setattr__(self, "epsilons", tuple(eps.tolist()))


NoiseSchedule = Union[ConstantSchedule, BrownianSchedule, TableSchedule]


def schedule_epsilon(schedule: NoiseSchedule, t):
    """Evaluate eps(t); ``t`` may be a scalar or an array.

    The Brownian kind diverges at t = 0 and is rejected there; callers that
    need the noise amplitude rather than eps itself should use
    :func:`forward_noise_std`, whose ``t * eps(t)`` is continuous at 0.
    """
    t_arr = _check_time(t)
    scalar = t_arr.ndim == 0
    if isinstance(schedule, ConstantSchedule):
        out = np.full_like(t_arr, schedule.epsilon)
    elif isinstance(schedule, BrownianSchedule):
        if np.any(t_arr <= 0.0):
            raise ValueError("Brownian schedule is undefined at t = 0")
        out = schedule.epsilon / np.sqrt(t_arr)
    elif isinstance(schedule, TableSchedule):
        times = np.asarray(schedule.times)
        eps = np.asarray(schedule.epsilons)
        if np.any(t_arr < times[0]) or np.any(t_arr > times[-1]):
            raise ValueError(
                f"t outside table domain [{times[0]}, {times[-1]}]"
            )
        out = np.interp(t_arr, times, eps)
    else:
        raise TypeError(f"unknown schedule type {type(schedule).__name__}")
    return float(out) if scalar else out


def forward_noise_std(schedule: NoiseSchedule, t):
    """Per-coordinate noise std ``t * eps(t)`` of the degraded signal.

    Continuous extension at t = 0: the product tends to 0 for every valid
    schedule (including Brownian, where it equals ``sqrt(t) * epsilon``),
    so 0 is returned there without evaluating eps.
    """
    t_arr = _check_time(t)
    scalar = t_arr.ndim == 0
    out = np.zeros_like(t_arr)
    pos = t_arr > 0.0
    if np.any(pos):
        out[pos] = t_arr[pos] * schedule_epsilon(schedule, t_arr[pos])
    return float(out) if scalar else out


# ---- forward process ---- #


def forward_interpolate(x, y, t) -> np.ndarray:
    """Return ``(1 - t) * x + t * y`` elementwise.

    ``t`` may be a scalar applied to the whole batch or an array with one
    entry per leading (batch) element.  The endpoints are exact: t = 0
    returns ``x`` and t = 1 returns ``y`` bit for bit.
    """
    x = as_state(x, "x")
    y = as_state(y, "y")
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: x {x.shape} vs y {y.shape}")
    t_arr = _check_time(t)
    if t_arr.ndim:
        t_arr = t_arr[..., None]
    return (1.0 - t_arr) * x + t_arr * y


def forward_degrade_noisy(x, y, t, schedule: NoiseSchedule, rng) -> np.ndarray:
    """Noisy forward sample ``(1 - t) x + t y + t * eps(t) * n``.

    ``n`` is standard normal per coordinate, drawn from ``rng``.  When the
    noise std is identically zero no draw is taken, so the zero-noise case
    collapses exactly to :func:`forward_interpolate`.
    """
    base = forward_interpolate(x, y, t)
    std = forward_noise_std(schedule, t)
    if np.ndim(std) == 0:
        if std == 0.0:
            return base
    elif not np.any(std):
        return base
    else:
        std = np.asarray(std)[..., None]
    return base + std * rng.standard_normal(base.shape)


def injected_noise_std(schedule: NoiseSchedule, t, delta) -> float:
    """Noise amplitude ``(t - delta) * sqrt(eps(t-delta)^2 - eps(t)^2)``.

    This is the per-coordinate std of the fresh noise a reverse-time step
    from ``t`` to ``t - delta`` must inject so that the iterate keeps the
    noise level the schedule prescribes.  It is 0 for any constant
    schedule and 0 whenever the step lands exactly at t = 0 (the
    ``t - delta`` factor vanishes before the schedule is consulted, so
    Brownian schedules never get queried at 0).
    """
    t = float(t)
    delta = float(delta)
    if not (np.isfinite(t) and np.isfinite(delta)):
        raise ValueError("t and delta must be finite")
    if not 0.0 < delta <= t <= 1.0:
        raise ValueError("need 0 < delta <= t <= 1")
    target = t - delta
    if target == 0.0:
        return 0.0
    eps_prev = schedule_epsilon(schedule, target)
    eps_cur = schedule_epsilon(schedule, t)
    radicand = eps_prev * eps_prev - eps_cur * eps_cur
    if radicand < 0.0:
        raise ScheduleInvariantError(
            f"schedule increased between t={target} and t={t}"
        )
    return target * float(np.sqrt(radicand))


@dataclass
class PairedSample:
    """A clean signal and its degraded observation, matching dimensions."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = as_state(self.x, "x")
        self.y = as_state(self.y, "y")
        if self.x.shape != self.y.shape:
            raise ValueError(
                f"shape mismatch: x {self.x.shape} vs y {self.y.shape}"
            )
