"""Uncontrolled comparator: every room runs its own hysteresis thermostat."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pool import PoolState
from .thermal import ThermalParams, duty_off_time, duty_on_time


@dataclass
class ThermostatState:
    switch: int
    t_min: float
    t_max: float


def thermostat_step(state: ThermostatState, temp: float) -> ThermostatState:
    """Trip on at or above T_max, off at or below T_min, otherwise hold."""
    if temp >= state.t_max:
        switch = 1
    elif temp <= state.t_min:
        switch = 0
    else:
        switch = state.switch
    return ThermostatState(switch, state.t_min, state.t_max)


def thermostat_update(switch: np.ndarray, temps: np.ndarray, t_min: np.ndarray, t_max: np.ndarray) -> np.ndarray:
    """Vectorised :func:`thermostat_step` over a pool."""
    return np.where(temps >= t_max, 1, np.where(temps <= t_min, 0, switch)).astype(np.int8)


def uncontrolled_duty_cycle(t_min: float, t_max: float, params: ThermalParams) -> tuple[float, float]:
    """(t_on, t_off) in minutes for a free-running thermostat on band [t_min, t_max]."""
    return duty_on_time(t_min, t_max, params), duty_off_time(t_min, t_max, params)


class ThermostatBank:
    """Per-room hysteresis thermostats sampled once per interval."""

    name = "baseline"

    def __init__(self, pool: PoolState, initial_switch: np.ndarray):
        self.t_min = pool.t_min
        self.t_max = pool.t_max
        self.switch = np.asarray(initial_switch, dtype=np.int8).copy()
        self.settled = False

    def decide(self, pool: PoolState) -> tuple[np.ndarray, np.ndarray]:
        self.switch = thermostat_update(self.switch, pool.temps, self.t_min, self.t_max)
        return self.switch.astype(float), np.flatnonzero(self.switch)


def initial_switches(n_rooms: int, s_on: float, rng: np.random.Generator) -> np.ndarray:
    """Seeded coin per room, heads (on) with probability ``s_on``."""
    return (rng.random(n_rooms) < s_on).astype(np.int8)
