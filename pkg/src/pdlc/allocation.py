"""Window planning: split m*N packets over N intervals so every room lands in band.

Each room gets a quota ``n_i`` chosen so the first-order projection of its
temperature N intervals ahead falls strictly inside its band.  Per interval
the scheduler then serves the m rooms with the most packets still owed.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleWindowError, NoFeasibleQuotaError
from .pool import ComfortBand, PoolState, Room
from .thermal import DiscreteCoeffs, ThermalParams

# Guard for bounds that are integral in exact arithmetic: the inequalities on
# n_i are strict, so a value within this distance of an integer is treated as
# landing on it and stepped inward.
_EDGE_TOL = 1e-9


def _raw_bounds(temps, set_points, band: ComfortBand, n_intervals: int,
                coeffs: DiscreteCoeffs, params: ThermalParams) -> tuple[np.ndarray, np.ndarray]:
    """Real-valued (lo, hi) with lo < n < hi keeping the projection strictly in band.

    A quota n keeps the projected temperature below T_set + delta1 iff
    n > lo, and above T_set - delta2 iff n < hi, where

        lo = ((T - T_set - delta1) tau + N dt (T_out - T)) / (dt T_g)
        hi = ((T - T_set + delta2) tau + N dt (T_out - T)) / (dt T_g).
    """
    temps = np.asarray(temps, dtype=float)
    set_points = np.asarray(set_points, dtype=float)
    tau, dt = params.tau, coeffs.dt
    drift = n_intervals * dt * (params.t_out - temps)
    scale = dt * params.t_gain
    hi = ((temps - set_points + band.delta2) * tau + drift) / scale
    lo = ((temps - set_points - band.delta1) * tau + drift) / scale
    return lo, hi


def need_bounds(temps, set_points, band: ComfortBand, n_intervals: int,
                coeffs: DiscreteCoeffs, params: ThermalParams) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised (beta, alpha): the smallest and largest admissible quotas.

    Strict bounds that land on an integer are stepped inward, and the result
    is clipped to the physically possible range [0, N].
    """
    if n_intervals == 0:
        zero = np.zeros(np.shape(temps), dtype=np.int64)
        return zero, zero.copy()
    lo, hi = _raw_bounds(temps, set_points, band, n_intervals, coeffs, params)
    alpha = np.ceil(hi - _EDGE_TOL).astype(np.int64) - 1
    beta = np.floor(lo + _EDGE_TOL).astype(np.int64) + 1
    return np.maximum(beta, 0), np.minimum(alpha, n_intervals)


def packet_need_bounds(room: Room, n_intervals: int, coeffs: DiscreteCoeffs,
                       params: ThermalParams) -> tuple[int, int]:
    beta, alpha = need_bounds([room.temp], [room.t_set], room.band, n_intervals, coeffs, params)
    b, a = int(beta[0]), int(alpha[0])
    if a < b:
        raise NoFeasibleQuotaError(
            f"room {room.id}: no integer quota in [{b}, {a}]; packet length too coarse for the band"
        )
    return b, a


@dataclass
class AllocationPlan:
    """Quotas for one window and the schedule executed so far.

    ``remaining[i]`` is the number of packets room i is still owed;
    ``schedule[j]`` is the 0/1 grant vector of period j.
    """

    quotas: np.ndarray
    m: int
    n_intervals: int
    remaining: np.ndarray = None
    schedule: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.quotas = np.asarray(self.quotas, dtype=np.int64)
        if self.remaining is None:
            self.remaining = self.quotas.copy()

    @property
    def period(self) -> int:
        return len(self.schedule)

    @property
    def done(self) -> bool:
        return self.period >= self.n_intervals

    def check_invariants(self) -> None:
        j = self.period
        if np.any(self.remaining < 0) or np.any(self.remaining > self.n_intervals - j):
            raise AssertionError(f"remaining quota left [0, {self.n_intervals - j}] at period {j}")
        if int(self.remaining.sum()) != self.m * (self.n_intervals - j):
            raise AssertionError(f"outstanding packets != m*(N-j) at period {j}")


def plan_allocation(pool: PoolState, m: int, n_intervals: int, coeffs: DiscreteCoeffs,
                    params: ThermalParams | None = None) -> AllocationPlan:
    """Quotas in [beta_i, alpha_i] summing to m*N.

    Every room starts at beta_i; the leftover packets go one at a time to the
    room with the most headroom, measured against its real-valued upper
    bound rather than the floored alpha_i (lowest id on ties).  Headroom in
    packets is distance above the lower band edge, so this pulls the rooms
    parked nearest the upper edge inward first.
    """
    params = params or pool.params
    beta, alpha = need_bounds(pool.temps, pool.set_points, pool.band, n_intervals, coeffs, params)
    bad = np.flatnonzero(alpha < beta)
    if bad.size:
        raise NoFeasibleQuotaError(f"rooms {bad.tolist()} have no admissible quota")
    total = m * n_intervals
    if not alpha.sum() >= total >= beta.sum():
        raise InfeasibleWindowError(
            f"need sum(alpha)={alpha.sum()} >= m*N={total} >= sum(beta)={beta.sum()}"
        )
    _, hi = _raw_bounds(pool.temps, pool.set_points, pool.band, n_intervals, coeffs, params)
    quotas = beta.copy()
    heap = [(-(hi[i] - quotas[i]), i) for i in range(len(quotas)) if quotas[i] < alpha[i]]
    heapq.heapify(heap)
    for _ in range(total - int(beta.sum())):
        _, i = heapq.heappop(heap)
        quotas[i] += 1
        if quotas[i] < alpha[i]:
            heapq.heappush(heap, (-(hi[i] - quotas[i]), i))
    return AllocationPlan(quotas=quotas, m=m, n_intervals=n_intervals)


def allocate_step(plan: AllocationPlan) -> np.ndarray:
    """Grant the current period's m packets; return the granted room ids (ascending)."""
    if plan.done:
        raise IndexError("allocation window already finished")
    order = np.argsort(-plan.remaining, kind="stable")
    chosen = np.sort(order[: plan.m])
    grant = np.zeros(len(plan.remaining), dtype=np.int8)
    grant[chosen] = 1
    plan.remaining -= grant
    plan.schedule.append(grant)
    plan.check_invariants()
    return chosen


def run_plan(plan: AllocationPlan) -> np.ndarray:
    """Execute every remaining period; return the (N, N_c) grant matrix."""
    while not plan.done:
        allocate_step(plan)
    return np.array(plan.schedule).reshape(plan.n_intervals, len(plan.quotas))
