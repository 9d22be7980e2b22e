"""Packet budgeting, band splitting and packet-length bounds for one feeder.

The operator hands out ``m`` fixed-length packets per interval.  Holding
``m = N_c * s_on`` makes the pool mean relax to the mean set point at the
open-loop rate exp(-dt/tau); a gain on the mean deviation speeds this up.
In steady state the band split and a short enough packet length keep every
room inside its own band.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .allocation import AllocationPlan, allocate_step, plan_allocation
from .errors import (
    DivergentGainError,
    InvalidParameterError,
    NoValidPacketLengthError,
    PDLCError,
)
from .pool import (
    ComfortBand,
    PoolState,
    average_set_point,
    average_temperature,
    critical_temperature,
    duty_status,
    is_sste,
    low_critical_temperature,
    mean_duty_status,
)
from .thermal import ThermalParams, discretize

log = logging.getLogger(__name__)

# N_c * s_on is frequently integral in exact arithmetic but lands a few ulps above the
# integer in floating point; a ceiling must not round that up a whole packet.
_CEIL_SLACK = 1e-9


def _ceil(x: float) -> int:
    return math.ceil(x - _CEIL_SLACK)


@dataclass(frozen=True)
class ControllerConfig:
    """Operator settings for one feeder.

    gain            g in 1/F; 0 disables the transient boost
    sste_epsilon    mean deviation (F) below which the pool counts as settled
    window          intervals in the settling allocation window; 0 skips it
    integer_budget  False applies N_c*s_on exactly, giving one room a fractional packet
    clamp_low_critical
                    once settled, withhold packets from rooms a packet would push
                    to or below T_min
    budget_cap      packets actually available per interval (shortfall mode)
    """

    band: ComfortBand
    dt: float
    gain: float = 0.0
    sste_epsilon: float = 0.1
    window: int = 0
    integer_budget: bool = True
    clamp_low_critical: bool = True
    budget_cap: int | None = None

    def __post_init__(self):
        if self.gain < 0:
            raise InvalidParameterError("gain must be non-negative")
        if not self.dt > 0:
            raise InvalidParameterError("dt must be positive")
        if not self.sste_epsilon > 0:
            raise InvalidParameterError("sste_epsilon must be positive")
        if self.window < 0:
            raise InvalidParameterError("window must be >= 0")
        if self.budget_cap is not None and self.budget_cap < 0:
            raise InvalidParameterError("budget_cap must be >= 0")


def aggregate_budget(pool: PoolState) -> float:
    """Real-valued packet count N_c * s_on."""
    s_on, _ = mean_duty_status(pool)
    return pool.size * s_on


def packet_budget(pool: PoolState) -> int:
    return _ceil(aggregate_budget(pool))


def gained_packet_budget(pool: PoolState, gain: float, t_ave: float, integer: bool = True) -> float:
    """Budget boosted in proportion to the mean deviation, clamped to [0, N_c]."""
    if gain < 0:
        raise InvalidParameterError("gain must be non-negative")
    t_set_ave = average_set_point(pool)
    m = aggregate_budget(pool) * (1.0 + gain * (t_ave - t_set_ave))
    m = min(max(m, 0.0), float(pool.size))
    return _ceil(m) if integer else m


def convergence_gain(gain: float, params: ThermalParams, t_set_ave: float) -> float:
    """Convergence factor G = 1 + g (T_out - T_set_ave)."""
    return 1.0 + gain * (params.t_out - t_set_ave)


def gain_for(G: float, params: ThermalParams, t_set_ave: float) -> float:
    """Inverse of :func:`convergence_gain`."""
    return (G - 1.0) / (params.t_out - t_set_ave)


def convergence_step_bound(
    t0_ave: float, t_set_ave: float, epsilon: float, dt: float, tau: float, G: float = 1.0
) -> int:
    """Smallest step count after which the mean deviation is guaranteed below ``epsilon``.

    The deviation contracts by |1 - a G| per step, a = 1 - exp(-dt/tau); with
    G = 1 that is exp(-dt/tau) and the bound is (tau/dt) ln(|dev0|/epsilon).
    """
    if not epsilon > 0:
        raise InvalidParameterError("epsilon must be positive")
    if G < 1:
        raise InvalidParameterError("G must be >= 1")
    dev = abs(t_set_ave - t0_ave)
    if dev == 0:
        return 0
    a = -math.expm1(-dt / tau)
    if G == 1:
        rate = dt / tau
    else:
        factor = abs(1.0 - a * G)
        if factor >= 1.0:
            raise DivergentGainError(f"|1 - aG| = {factor:.6g} >= 1: the gained budget diverges")
        if factor == 0.0:
            return 1 if dev >= epsilon else 0
        rate = -math.log(factor)
    bound = math.log(dev / epsilon) / rate
    return max(0, math.floor(bound) + 1)


def split_comfort_band(delta: float, pool: PoolState) -> ComfortBand:
    """Split a band of total width ``delta`` as delta1 = s_off*delta, delta2 = s_on*delta."""
    if not delta > 0:
        raise InvalidParameterError("band width must be positive")
    s_on, s_off = mean_duty_status(pool)
    return ComfortBand(delta1=s_off * delta, delta2=s_on * delta)


def validate_band_split(band: ComfortBand, m: int, n_rooms: int) -> bool:
    """Whether the split leaves room for both one-step packet-length bounds to exist."""
    width = band.width
    if not width > 0:
        raise InvalidParameterError("band width must be positive")
    return band.delta2 / width < (m + 1) / n_rooms and band.delta1 / width < (n_rooms - m + 1) / n_rooms


def _extreme_subsets(set_points: np.ndarray, k: int) -> list[np.ndarray]:
    ordered = np.sort(set_points)
    return [ordered[:k], ordered[len(ordered) - k:]]


def _length_from_ratio(num: float, den: float, tau: float, what: str) -> float:
    ratio = num / den if den != 0 else math.inf
    if not 0.0 < ratio < 1.0:
        raise NoValidPacketLengthError(f"{what}: ratio {ratio:.6g} is outside (0, 1)")
    return -tau * math.log(ratio)


def overheat_packet_length(pool: PoolState, band: ComfortBand, m: int, eps_bar: float = 0.0) -> float:
    """Longest packet length for which no room can cross its upper edge in one step.

    Worst case: m+1 rooms sit at their critical temperature, so one of them is
    left without a packet, and the rest at their lower edge.  The bound is
    where that configuration's mean stops being able to equal the mean set
    point.  A disturbance of up to ``eps_bar`` acts like a warmer outside.
    Rooms whose upper edge is at or above that outside temperature can never
    overheat and are left out.  Returns ``inf`` when fewer than m+1 rooms can
    overheat at all.
    """
    hot = pool.params.t_out + eps_bar
    k = m + 1
    reachable = pool.set_points[band.high(pool.set_points) < hot]
    if k > len(reachable):
        return math.inf
    lengths = []
    for subset in _extreme_subsets(reachable, k):
        num = k * hot - float(np.sum(band.high(subset)))
        den = k * hot - float(np.sum(band.low(subset))) - pool.size * band.delta2
        lengths.append(_length_from_ratio(num, den, pool.params.tau, "upper-edge bound"))
    return min(lengths)


def overcool_packet_length(pool: PoolState, band: ComfortBand, m: int, eps_bar: float = 0.0) -> float:
    """Longest packet length for which no served room can cross its lower edge in one step.

    Mirror of :func:`overheat_packet_length`: N_c-m+1 rooms sit at the
    temperature a packet takes exactly to T_min (so at least one is served)
    and the rest at their upper edge.  The disturbance acts like a cooler
    outside.  Rooms whose lower edge is at or below the coldest temperature a
    running unit can reach are left out.  Returns ``inf`` when no packets are
    issued or too few rooms can overcool.
    """
    if m <= 0:
        return math.inf
    floor = pool.params.t_out - eps_bar - pool.params.t_gain
    k = pool.size - m + 1
    reachable = pool.set_points[band.low(pool.set_points) > floor]
    if k > len(reachable):
        return math.inf
    lengths = []
    for subset in _extreme_subsets(reachable, k):
        num = float(np.sum(band.low(subset))) - k * floor
        den = float(np.sum(band.high(subset))) - k * floor - pool.size * band.delta1
        lengths.append(_length_from_ratio(num, den, pool.params.tau, "lower-edge bound"))
    return min(lengths)


def window_packet_length(band: ComfortBand, params: ThermalParams) -> float:
    """Packet length that guarantees a feasible quota split over a planning window."""
    return min(band.delta1, band.delta2) * params.tau / params.t_gain


def safe_packet_length(pool: PoolState, band: ComfortBand, m: int, eps_bar: float = 0.0) -> float:
    return min(
        overheat_packet_length(pool, band, m, eps_bar),
        overcool_packet_length(pool, band, m, eps_bar),
        window_packet_length(band, pool.params),
    )


def shortfall_packet_length(dt: float, m: int, m_cap: int) -> float:
    """Shortened packet length when only ``m_cap < m`` packets are on hand.

    Experimental: spreads the scarce packets over more, shorter intervals.
    """
    if m <= 0 or m_cap >= m:
        return dt
    if m_cap <= 0:
        raise InvalidParameterError("no packets available")
    return dt * m_cap / m


def band_from_split(t_set_ave: float, delta: float, params: ThermalParams) -> ComfortBand:
    """Band split for a pool described only by its mean set point."""
    s_on, s_off = duty_status(params, t_set_ave)
    return ComfortBand(delta1=s_off * delta, delta2=s_on * delta)


def rank_by_urgency(temps: np.ndarray, t_crit: np.ndarray) -> np.ndarray:
    """Room indices ordered by how far each sits above its critical temperature.

    Most urgent first; equal urgency keeps ascending room id.
    """
    return np.argsort(-(temps - t_crit), kind="stable")


class PacketController:
    """Central operator for one feeder, driven once per packet interval.

    Until the pool first reaches equilibrium the (optionally gained) budget
    goes to the most urgent rooms.  On first reaching it, an allocation window
    of ``config.window`` intervals is planned if requested, after which the
    fixed budget is served to the most urgent rooms indefinitely.
    """

    name = "pdlc"

    def __init__(self, pool: PoolState, config: ControllerConfig):
        self.config = config
        self.params = pool.params
        self.coeffs = discretize(pool.params, config.dt)
        self.t_set_ave = average_set_point(pool)
        self.base_budget = packet_budget(pool) if config.integer_budget else aggregate_budget(pool)
        self.t_crit = critical_temperature(pool.t_max, self.coeffs, pool.params)
        self.t_low_crit = low_critical_temperature(pool.t_min, self.coeffs, pool.params)
        self.settled = False
        self.plan: AllocationPlan | None = None
        self.events: list[tuple[int, str]] = []

    def _budget(self, pool: PoolState) -> float:
        if self.settled:
            m = self.base_budget
        else:
            m = gained_packet_budget(
                pool, self.config.gain, average_temperature(pool), integer=self.config.integer_budget
            )
        if self.config.budget_cap is not None:
            m = min(m, self.config.budget_cap)
        return m

    def _start_window(self, pool: PoolState) -> None:
        m = int(self.base_budget)
        if m != self.base_budget:
            self.events.append((pool.time_index, "window skipped: fractional budget"))
            return
        try:
            self.plan = plan_allocation(pool, m, self.config.window, self.coeffs)
            self.events.append((pool.time_index, "window planned"))
        except PDLCError as exc:
            log.info("allocation window not started at step %d: %s", pool.time_index, exc)
            self.events.append((pool.time_index, f"window skipped: {exc}"))

    def decide(self, pool: PoolState) -> tuple[np.ndarray, np.ndarray]:
        """Return (u, granted ids) for the interval starting at ``pool.time_index``."""
        if not self.settled and is_sste(pool, self.config.sste_epsilon):
            self.settled = True
            self.events.append((pool.time_index, "settled"))
            if self.config.window > 0:
                self._start_window(pool)

        u = np.zeros(pool.size)
        if self.plan is not None:
            ids = allocate_step(self.plan)
            if self.plan.done:
                self.plan = None
            u[ids] = 1.0
            return u, ids

        m = self._budget(pool)
        order = rank_by_urgency(pool.temps, self.t_crit)
        whole = min(int(math.floor(m)), pool.size)
        u[order[:whole]] = 1.0
        if whole < pool.size and m > whole:
            u[order[whole]] = m - whole
        if self.settled and self.config.clamp_low_critical:
            u[pool.temps <= self.t_low_crit] = 0.0
        return u, np.flatnonzero(u)
