"""First-order thermal model of a cooling thermostatic load.

Temperatures are in degrees Fahrenheit and times in minutes throughout.
The continuous-time model is

    dT/dt = (T_out - T - T_g * u + eps) / tau

with ``u`` the binary compressor state.  Sampling it exactly at a fixed
packet length ``dt`` gives the linear recursion

    T[k+1] = (1 - a) T[k] + a T_out - b u[k] + a eps[k],
    a = 1 - exp(-dt / tau),  b = a T_g.

Every function here accepts numpy arrays wherever a temperature or switch
state is expected, so a whole pool can be advanced with one call.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    InfeasibleDutyCycleError,
    InvalidParameterError,
    InvalidQuotaError,
)


@dataclass(frozen=True)
class ThermalParams:
    """Physics shared by every appliance on one feeder.

    tau:    effective thermal time constant (min)
    t_gain: temperature drop the unit can hold against the outside when on (F)
    t_out:  outside (ambient) temperature (F)
    """

    tau: float
    t_gain: float
    t_out: float

    def __post_init__(self):
        if not self.tau > 0:
            raise InvalidParameterError(f"tau must be positive, got {self.tau}")
        if not self.t_gain > 0:
            raise InvalidParameterError(f"t_gain must be positive, got {self.t_gain}")

    def on_status(self, t_set: float) -> float:
        """Fraction of time a unit must run to hold ``t_set``."""
        return (self.t_out - t_set) / self.t_gain

    def can_serve(self, t_set: float) -> bool:
        return self.on_status(t_set) < 1.0


@dataclass(frozen=True)
class DiscreteCoeffs:
    dt: float
    a: float
    b: float

    @property
    def decay(self) -> float:
        """Per-step contraction factor 1 - a = exp(-dt/tau)."""
        return 1.0 - self.a


def discretize(params: ThermalParams, dt: float) -> DiscreteCoeffs:
    """Exact zero-order-hold discretisation at packet length ``dt``."""
    if not dt > 0:
        raise InvalidParameterError(f"packet length must be positive, got {dt}")
    a = -math.expm1(-dt / params.tau)
    return DiscreteCoeffs(dt=dt, a=a, b=a * params.t_gain)


@dataclass
class Disturbance:
    """Bounded i.i.d. uniform disturbance on [-eps_bar, eps_bar].

    One draw per room per interval.  Draws for a step are produced in room
    order, and steps follow one another, so a fixed seed yields one fixed
    sequence.  With ``eps_bar == 0`` no random numbers are consumed and
    :meth:`draw` returns exact zeros.
    """

    eps_bar: float = 0.0
    seed: int | np.random.SeedSequence | None = None
    _rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.eps_bar < 0:
            raise InvalidParameterError(f"eps_bar must be >= 0, got {self.eps_bar}")
        self._rng = np.random.default_rng(self.seed)

    def draw(self, n_rooms: int) -> np.ndarray:
        if self.eps_bar == 0:
            return np.zeros(n_rooms)
        return self._rng.uniform(-self.eps_bar, self.eps_bar, size=n_rooms)


def dt_step(temp, u, coeffs: DiscreteCoeffs, params: ThermalParams, eps=0.0):
    """Advance one packet interval.

    ``u`` is normally binary; a fractional value is accepted and means the
    unit ran for that fraction of the cooling effect (used for real-valued
    aggregate budgets).
    """
    a = coeffs.a
    return (1.0 - a) * temp + a * params.t_out - coeffs.b * u + a * eps


def ct_temperature(t0, u, t, params: ThermalParams):
    """Closed-form continuous-time temperature after ``t`` minutes at constant ``u``."""
    if np.any(np.asarray(t) < 0):
        raise InvalidParameterError("elapsed time must be non-negative")
    t_inf = params.t_out - u * params.t_gain
    return (t0 - t_inf) * np.exp(-np.asarray(t, dtype=float) / params.tau) + t_inf


def duty_off_time(t_min: float, t_max: float, params: ThermalParams) -> float:
    """Minutes for an idle unit to drift from ``t_min`` up to ``t_max``."""
    if t_max < t_min:
        raise InvalidParameterError(f"band is inverted: ({t_min}, {t_max})")
    if t_max >= params.t_out:
        raise InfeasibleDutyCycleError(
            f"T_max={t_max} >= T_out={params.t_out}: an idle room never warms to T_max"
        )
    return params.tau * math.log((params.t_out - t_min) / (params.t_out - t_max))


def duty_on_time(t_min: float, t_max: float, params: ThermalParams) -> float:
    """Minutes for a running unit to pull the room from ``t_max`` down to ``t_min``."""
    if t_max < t_min:
        raise InvalidParameterError(f"band is inverted: ({t_min}, {t_max})")
    floor = params.t_out - params.t_gain
    if t_min <= floor:
        raise InfeasibleDutyCycleError(
            f"T_min={t_min} <= T_out - T_g={floor}: the unit cannot cool to T_min"
        )
    return params.tau * math.log((t_max - floor) / (t_min - floor))


def project_temperature(temp, n, n_intervals: int, coeffs: DiscreteCoeffs, params: ThermalParams):
    """First-order projection of the temperature ``n_intervals`` steps ahead.

    Assumes ``n`` packets are received somewhere inside the window.  The
    Taylor expansion behind it needs ``n_intervals * dt`` small against tau;
    a warning is issued beyond tau / 2.
    """
    n_arr = np.asarray(n)
    if np.any(n_arr < 0) or np.any(n_arr > n_intervals):
        raise InvalidQuotaError(f"packet count must lie in [0, {n_intervals}]")
    span = n_intervals * coeffs.dt
    if span > params.tau / 2:
        warnings.warn(
            f"window of {span:g} min exceeds tau/2={params.tau / 2:g}; "
            "first-order projection is inaccurate",
            stacklevel=2,
        )
    r = coeffs.dt / params.tau
    return temp * (1.0 - n_intervals * r) + r * (n_intervals * params.t_out - n * params.t_gain)


def compose_steps(temp, schedule: Sequence, coeffs: DiscreteCoeffs, params: ThermalParams):
    """Exact temperature after applying ``schedule`` (one ``u`` per interval).

    ``schedule`` may be 2-D with shape (intervals, rooms) to advance a pool.
    """
    out = np.asarray(temp, dtype=float)
    for u in schedule:
        out = dt_step(out, np.asarray(u), coeffs, params)
    return out
