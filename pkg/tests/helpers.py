"""Shared pool builders for the test suite."""
from __future__ import annotations

import numpy as np

from pdlc.controller import window_packet_length
from pdlc.pool import ComfortBand, PoolState
from pdlc.thermal import ThermalParams, discretize

AC = ThermalParams(tau=20.0, t_gain=40.0, t_out=93.0)
FRIDGE = ThermalParams(tau=185.0, t_gain=75.0, t_out=73.0)
AC_BAND = ComfortBand(1.0, 1.0)

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def report(number: int, title: str, ok: bool, detail: str) -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def uniform_pool(n=100, t_set=73.0, band=AC_BAND, params=AC, temps=None) -> PoolState:
    sets = np.full(n, t_set)
    return PoolState(sets, sets.copy() if temps is None else np.asarray(temps, float), band, params)


def in_band_offsets(band: ComfortBand, n: int, rng: np.random.Generator) -> np.ndarray:
    """Offsets strictly inside the band with exactly zero mean."""
    off = rng.uniform(-band.delta2, band.delta1, n)
    off -= off.mean()
    reach = max(off.max() / band.delta1, -off.min() / band.delta2, 1e-12)
    if reach >= 0.999:
        off *= 0.999 / reach
    return off


def random_sste_pool(rng: np.random.Generator, max_rooms=100, max_window=20, min_rooms=2,
                     n_rooms=None, n_window=None):
    """A random pool at exact equilibrium with every room strictly in band.

    T_out is placed so that N_c * s_on is an integer m, and m is restricted
    to values where every room's own set point is serviceable (its band lies
    between T_out - T_g and T_out).  The packet length is drawn up to the
    window bound.  Returns (pool, m, N, coeffs).
    """
    fixed_rooms, fixed_window = n_rooms, n_window
    for _ in range(1000):
        n_rooms = fixed_rooms or int(rng.integers(min_rooms, max_rooms + 1))
        n_window = fixed_window or int(rng.integers(1, max_window + 1))
        if rng.random() < 0.5:
            tau, t_gain, width, sets = 20.0, 40.0, 2.0, rng.uniform(71, 75, n_rooms)
        else:
            tau, t_gain, width, sets = 185.0, 75.0, 6.0, rng.uniform(33, 37, n_rooms)
        t_ave = sets.mean()
        ok = [
            m for m in range(1, n_rooms)
            if t_ave + m * t_gain / n_rooms > sets.max() + width * (1 - m / n_rooms)
            and t_ave + m * t_gain / n_rooms - t_gain < sets.min() - width * m / n_rooms
        ]
        if ok:
            break
    else:
        raise RuntimeError("could not draw a serviceable pool")
    m = int(rng.choice(ok))
    s_on = m / n_rooms
    band = ComfortBand(width * (1 - s_on), width * s_on)
    params = ThermalParams(tau, t_gain, t_ave + m * t_gain / n_rooms)
    dt = (1.0 - rng.random()) * window_packet_length(band, params)
    pool = PoolState(sets, sets + in_band_offsets(band, n_rooms, rng), band, params)
    return pool, m, n_window, discretize(params, dt)


def enumerate_final_temps(pool: PoolState, m: int, n_window: int, coeffs) -> np.ndarray:
    """Exact final temperatures under every schedule granting m packets per period.

    Uses the closed form of the linear recursion, so each schedule costs one
    weighted sum.  Returns an array of shape (schedules, rooms).
    """
    from itertools import combinations

    n_rooms = pool.size
    options = np.zeros((0, n_rooms))
    rows = [np.isin(np.arange(n_rooms), c).astype(float) for c in combinations(range(n_rooms), m)]
    options = np.array(rows) if rows else options
    decay = coeffs.decay
    weights = decay ** np.arange(n_window - 1, -1, -1)
    idx = np.stack(np.meshgrid(*[np.arange(len(options))] * n_window, indexing="ij"), -1).reshape(-1, n_window)
    cooling = np.einsum("j,sjr->sr", weights, options[idx])
    free = decay**n_window * pool.temps + (1 - decay**n_window) * pool.params.t_out
    return free[None, :] - coeffs.b * cooling
