"""A feeder's population of rooms and the predicates the controller relies on."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, EmptyPoolError, InvalidParameterError
from .thermal import DiscreteCoeffs, ThermalParams


@dataclass(frozen=True)
class ComfortBand:
    """Half-widths of the band (T_set - delta2, T_set + delta1) shared by a pool."""

    delta1: float
    delta2: float

    def __post_init__(self):
        if self.delta1 < 0 or self.delta2 < 0:
            raise InvalidParameterError(f"band half-widths must be >= 0: {self}")

    @property
    def width(self) -> float:
        return self.delta1 + self.delta2

    def low(self, t_set):
        return t_set - self.delta2

    def high(self, t_set):
        return t_set + self.delta1


@dataclass
class Room:
    id: int
    t_set: float
    band: ComfortBand
    temp: float
    rated_power: float
    switch: int = 0

    def __post_init__(self):
        if not self.rated_power > 0:
            raise InvalidParameterError(f"rated_power must be positive for room {self.id}")

    @property
    def t_min(self) -> float:
        return self.band.low(self.t_set)

    @property
    def t_max(self) -> float:
        return self.band.high(self.t_set)


@dataclass
class PoolState:
    """Vectorised state of one feeder.  Room ``i`` lives at index ``i``."""

    set_points: np.ndarray
    temps: np.ndarray
    band: ComfortBand
    params: ThermalParams
    rated_power: float = 1.0
    switch: np.ndarray = None
    time_index: int = 0

    def __post_init__(self):
        self.set_points = np.asarray(self.set_points, dtype=float)
        self.temps = np.array(self.temps, dtype=float)
        if self.set_points.shape != self.temps.shape or self.set_points.ndim != 1:
            raise InvalidParameterError("set_points and temps must be 1-D and equally long")
        if self.switch is None:
            self.switch = np.zeros(len(self.temps), dtype=np.int8)
        else:
            self.switch = np.asarray(self.switch, dtype=np.int8)
        if not self.rated_power > 0:
            raise InvalidParameterError("rated_power must be positive")

    @classmethod
    def from_rooms(cls, rooms: list[Room], params: ThermalParams, time_index: int = 0) -> "PoolState":
        if not rooms:
            raise EmptyPoolError("a pool needs at least one room")
        rooms = sorted(rooms, key=lambda r: r.id)
        if [r.id for r in rooms] != list(range(len(rooms))):
            raise InvalidParameterError("room ids must be 0..N_c-1")
        bands = {r.band for r in rooms}
        powers = {r.rated_power for r in rooms}
        if len(bands) != 1 or len(powers) != 1:
            raise InvalidParameterError("rooms of one pool share band and rated power")
        return cls(
            set_points=[r.t_set for r in rooms],
            temps=[r.temp for r in rooms],
            band=rooms[0].band,
            params=params,
            rated_power=rooms[0].rated_power,
            switch=[r.switch for r in rooms],
            time_index=time_index,
        )

    @property
    def size(self) -> int:
        return len(self.temps)

    @property
    def t_min(self) -> np.ndarray:
        return self.band.low(self.set_points)

    @property
    def t_max(self) -> np.ndarray:
        return self.band.high(self.set_points)

    @property
    def rooms(self) -> list[Room]:
        return [
            Room(i, float(s), self.band, float(t), self.rated_power, int(u))
            for i, (s, t, u) in enumerate(zip(self.set_points, self.temps, self.switch))
        ]

    def power(self) -> float:
        return float(self.switch.sum()) * self.rated_power

    def snapshot(self) -> dict:
        """Plain-data view suitable for JSON/CSV emitters."""
        return {
            "time_index": self.time_index,
            "band": {"delta1": self.band.delta1, "delta2": self.band.delta2},
            "rooms": [
                {"id": r.id, "t_set": r.t_set, "temp": r.temp, "switch": r.switch,
                 "t_min": r.t_min, "t_max": r.t_max}
                for r in self.rooms
            ],
        }


def average_set_point(pool: PoolState) -> float:
    if pool.size == 0:
        raise EmptyPoolError("average of an empty pool")
    return float(np.mean(pool.set_points))


def average_temperature(pool: PoolState) -> float:
    if pool.size == 0:
        raise EmptyPoolError("average of an empty pool")
    return float(np.mean(pool.temps))


def duty_status(params: ThermalParams, t_set_ave: float) -> tuple[float, float]:
    """(s_on, s_off) for a given average set point.

    s_on = 0 (no cooling needed) is accepted; s_on < 0 would need heating and
    s_on >= 1 exceeds the cooling capacity, both rejected.
    """
    s_on = params.on_status(t_set_ave)
    if not 0.0 <= s_on < 1.0:
        raise CapacityError(
            f"s_on=(T_out - T_set_ave)/T_g={s_on:.6g} is outside [0, 1): "
            "not enough cooling capacity to serve the pool"
            if s_on >= 1.0
            else f"s_on={s_on:.6g} < 0: T_out is below the average set point (heating is not modelled)"
        )
    return s_on, 1.0 - s_on


def mean_duty_status(pool: PoolState) -> tuple[float, float]:
    return duty_status(pool.params, average_set_point(pool))


def critical_temperature(t_max, coeffs: DiscreteCoeffs, params: ThermalParams):
    """Highest temperature from which an idle room stays at or below ``t_max`` next step.

    Accepts a :class:`Room` or a (vector of) upper band edges.
    """
    if isinstance(t_max, Room):
        t_max = t_max.t_max
    return (t_max - coeffs.a * params.t_out) / (1.0 - coeffs.a)


def low_critical_temperature(t_min, coeffs: DiscreteCoeffs, params: ThermalParams):
    """Lowest temperature from which a cooled room stays at or above ``t_min`` next step."""
    if isinstance(t_min, Room):
        t_min = t_min.t_min
    return (t_min - coeffs.a * params.t_out + coeffs.b) / (1.0 - coeffs.a)


def is_sste(pool: PoolState, epsilon: float) -> bool:
    """Steady-state thermal equilibrium: mean temperature within ``epsilon`` of mean set point."""
    if not epsilon > 0:
        raise InvalidParameterError("epsilon must be positive")
    return abs(average_temperature(pool) - average_set_point(pool)) < epsilon


def violation_mask(pool: PoolState) -> tuple[np.ndarray, np.ndarray]:
    """Boolean (under, over) masks.  Touching a band edge counts as a violation."""
    return pool.temps <= pool.t_min, pool.temps >= pool.t_max


def band_violations(pool: PoolState) -> list[tuple[int, str]]:
    under, over = violation_mask(pool)
    out = []
    for i in range(pool.size):
        if under[i]:
            out.append((i, "under"))
        elif over[i]:
            out.append((i, "over"))
    return out
