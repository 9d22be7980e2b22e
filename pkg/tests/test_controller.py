import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pdlc.controller import (
    ControllerConfig,
    PacketController,
    aggregate_budget,
    band_from_split,
    convergence_gain,
    convergence_step_bound,
    gain_for,
    gained_packet_budget,
    overcool_packet_length,
    overheat_packet_length,
    packet_budget,
    rank_by_urgency,
    safe_packet_length,
    shortfall_packet_length,
    split_comfort_band,
    validate_band_split,
    window_packet_length,
)
from pdlc.errors import CapacityError, DivergentGainError, InvalidParameterError, NoValidPacketLengthError
from pdlc.pool import ComfortBand, PoolState, critical_temperature
from pdlc.thermal import ThermalParams, discretize, dt_step

from helpers import AC, AC_BAND, FRIDGE, uniform_pool


# --- budgets -------------------------------------------------------------

@pytest.mark.parametrize(
    "n,params,t_set,m",
    [(100, AC, 73.0, 50), (100, ThermalParams(20, 40, 73), 73.0, 0), (60, FRIDGE, 35.0, 31)],
)
def test_packet_budget(n, params, t_set, m):
    assert packet_budget(uniform_pool(n, t_set, params=params)) == m


def test_packet_budget_rejects_excess_demand():
    with pytest.raises(CapacityError):
        packet_budget(uniform_pool(10, params=ThermalParams(20, 40, 120)))


def test_gained_budget():
    pool = uniform_pool()
    assert gained_packet_budget(pool, 0.0, 78.0) == packet_budget(pool)
    assert gained_packet_budget(pool, 0.05, 78.0) == 63
    assert gained_packet_budget(pool, 0.05, 40.0) == 0
    assert gained_packet_budget(pool, 0.05, 200.0) == 100
    assert gained_packet_budget(pool, 0.05, 78.0, integer=False) == pytest.approx(62.5)
    with pytest.raises(InvalidParameterError):
        gained_packet_budget(pool, -0.1, 78.0)


def test_gain_round_trip():
    assert gain_for(2.0, AC, 73.0) == pytest.approx(0.05)
    assert convergence_gain(0.05, AC, 73.0) == pytest.approx(2.0)


@pytest.mark.parametrize("G,k", [(1.0, 79), (2.0, 39)])
def test_convergence_step_bound_values(G, k):
    assert convergence_step_bound(78.0, 73.0, 0.1, 1.0, 20.0, G) == k


@pytest.mark.parametrize("G", [1.0, 1.5, 2.0, 5.0])
@pytest.mark.parametrize("dev", [0.5, 5.0, -3.0])
def test_step_bound_matches_mean_recursion(G, dev):
    """First step of the recursion d <- (1 - aG) d with |d| < eps equals the bound."""
    a = 1 - math.exp(-1 / 20)
    d, k = dev, 0
    while abs(d) >= 0.1:
        d *= 1 - a * G
        k += 1
    assert convergence_step_bound(73.0 + dev, 73.0, 0.1, 1.0, 20.0, G) == k


def test_step_bound_edge_cases():
    assert convergence_step_bound(73.0, 73.0, 0.1, 1.0, 20.0) == 0
    with pytest.raises(DivergentGainError):
        convergence_step_bound(78.0, 73.0, 0.1, 1.0, 20.0, G=45.0)
    with pytest.raises(InvalidParameterError):
        convergence_step_bound(78.0, 73.0, 0.0, 1.0, 20.0)


# --- band split ----------------------------------------------------------

@pytest.mark.parametrize(
    "params,t_set,width,d1,d2",
    [(AC, 73.0, 2.0, 1.0, 1.0), (ThermalParams(20, 40, 103), 73.0, 2.0, 0.5, 1.5), (FRIDGE, 35.0, 6.0, 2.96, 3.04)],
)
def test_split_comfort_band(params, t_set, width, d1, d2):
    band = split_comfort_band(width, uniform_pool(10, t_set, params=params))
    assert band.delta1 == pytest.approx(d1, abs=5e-3)
    assert band.delta2 == pytest.approx(d2, abs=5e-3)
    assert band == band_from_split(t_set, width, params)


def test_split_rejects_zero_width():
    with pytest.raises(InvalidParameterError):
        split_comfort_band(0.0, uniform_pool(4))


def test_validate_band_split():
    assert validate_band_split(ComfortBand(1, 1), 50, 100)
    assert not validate_band_split(ComfortBand(2 - 2 * 52 / 100, 2 * 52 / 100), 50, 100)
    assert validate_band_split(ComfortBand(0.0, 2.0), 100, 100)


# --- packet-length bounds ------------------------------------------------

def test_overheat_length_reference_values():
    pool = uniform_pool()
    delta = overheat_packet_length(pool, AC_BAND, 50)
    assert delta == pytest.approx(-20 * math.log(969 / 971), abs=1e-12)
    assert delta == pytest.approx(0.0412, abs=1e-4)
    disturbed = overheat_packet_length(pool, AC_BAND, 50, 10.0)
    assert disturbed == pytest.approx(-20 * math.log(1479 / 1481), abs=1e-12)
    assert disturbed == pytest.approx(0.0270, abs=1e-4)
    assert disturbed < delta


def test_symmetric_pool_has_equal_edge_lengths():
    pool = uniform_pool()
    assert overcool_packet_length(pool, AC_BAND, 50) == pytest.approx(overheat_packet_length(pool, AC_BAND, 50))


def test_safe_packet_length_composition():
    pool = uniform_pool()
    assert window_packet_length(AC_BAND, AC) == 0.5
    assert safe_packet_length(pool, AC_BAND, 50) == pytest.approx(0.041237, abs=1e-6)


def test_lower_edge_length_collapses_with_thin_lower_side():
    pool = uniform_pool()
    lengths = [overcool_packet_length(pool, ComfortBand(2 - d2, d2), 50) for d2 in (1.0, 0.995, 0.99)]
    assert lengths[0] > lengths[1] > lengths[2] > 0
    with pytest.raises(NoValidPacketLengthError):
        overcool_packet_length(pool, ComfortBand(1.5, 0.5), 50)


def test_upper_edge_length_collapses_as_duty_nears_one():
    lengths = []
    for t_out in (100.0, 105.0, 112.6):
        hot = uniform_pool(100, params=ThermalParams(20, 40, t_out))
        lengths.append(overheat_packet_length(hot, split_comfort_band(2.0, hot), packet_budget(hot)))
    assert lengths[0] > lengths[1] > lengths[2]
    assert lengths[2] < 0.011


def test_edge_lengths_infinite_when_unreachable():
    pool = uniform_pool(4)
    assert overheat_packet_length(pool, AC_BAND, 4) == math.inf
    assert overcool_packet_length(pool, AC_BAND, 0) == math.inf
    # T_min below T_out - T_g: no running unit can get that cold
    cold = uniform_pool(100, params=ThermalParams(20, 40, 112.0))
    assert overcool_packet_length(cold, split_comfort_band(2.0, cold), 98) == math.inf
    # T_max above T_out: no idle room warms that far
    mild = uniform_pool(4, params=ThermalParams(20, 40, 73.5))
    assert overheat_packet_length(mild, AC_BAND, 0) == math.inf


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(72.0, 74.0), min_size=3, max_size=30),
    st.floats(0.0, 10.0),
    st.floats(0.0, 10.0),
)
def test_lengths_monotone_in_disturbance(sets, e1, e2):
    lo, hi = sorted([e1, e2])
    n = len(sets)
    m = n // 2
    params = ThermalParams(20, 40, float(np.mean(sets)) + m * 40 / n)
    band = ComfortBand(2 * (1 - m / n), 2 * m / n)
    pool = PoolState(sets, sets, band, params)
    assert overheat_packet_length(pool, band, m, hi) <= overheat_packet_length(pool, band, m, lo)
    assert overcool_packet_length(pool, band, m, hi) <= overcool_packet_length(pool, band, m, lo)
    assert safe_packet_length(pool, band, m, hi) <= safe_packet_length(pool, band, m, lo)


def one_step_failures(sets, band, params, m, dt, eps, points):
    """Search a temperature grid at exact mean set point for one-step edge crossings.

    Every room but the last takes each grid value in its band; the last is
    solved from the mean.  The controller ranking serves m rooms; the worst
    disturbance is applied toward the edge under test.  Returns
    (some idle room crosses T_max, some served room crosses T_min).
    """
    n = len(sets)
    c = discretize(params, dt)
    lo, hi = sets - band.delta2, sets + band.delta1
    axes = [np.linspace(lo[i], hi[i], points) for i in range(n - 1)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, n - 1)
    last = n * sets.mean() - grid.sum(1)
    keep = (last >= lo[-1]) & (last <= hi[-1])
    temps = np.column_stack([grid[keep], last[keep]])
    order = np.argsort(-(temps - critical_temperature(hi, c, params)), axis=1, kind="stable")
    u = np.zeros_like(temps)
    np.put_along_axis(u, order[:, :m], 1.0, axis=1)
    over = (u == 0) & (dt_step(temps, u, c, params, eps) > hi + 1e-12)
    under = (u == 1) & (dt_step(temps, u, c, params, -eps) < lo - 1e-12)
    return bool(over.any()), bool(under.any())


def empirical_threshold(sets, band, params, m, eps, edge, points=41):
    """Largest packet length (bisection, log scale) at which the grid finds no crossing."""
    good, bad = 1e-5, 5.0
    for _ in range(30):
        mid = math.sqrt(good * bad)
        if one_step_failures(sets, band, params, m, mid, eps, points)[edge]:
            bad = mid
        else:
            good = mid
    return good


GRID_CASES = [
    ([72.9, 73.2, 73.4, 72.6], 1, 0.0),
    ([72.9, 73.2, 73.4, 72.6], 2, 5.0),
    ([72.7, 73.3, 73.0, 73.1], 3, 10.0),
    ([72.5, 73.5, 73.1], 1, 0.0),
    ([73.0, 73.0, 73.0, 73.0], 2, 0.0),
]


@pytest.mark.parametrize("sets,m,eps", GRID_CASES)
def test_edge_lengths_certified_by_grid_search(sets, m, eps):
    """The closed forms are sound (no crossing below them) and tight to grid resolution."""
    sets = np.array(sets)
    n = len(sets)
    params = ThermalParams(20, 40, sets.mean() + m * 40 / n)
    band = ComfortBand(2 * (1 - m / n), 2 * m / n)
    pool = PoolState(sets, sets, band, params)
    for edge, bound in enumerate(
        [overheat_packet_length(pool, band, m, eps), overcool_packet_length(pool, band, m, eps)]
    ):
        found = empirical_threshold(sets, band, params, m, eps, edge)
        assert bound <= found * (1 + 1e-6)
        assert found <= bound * 1.08


# --- shortfall and ranking -----------------------------------------------

def test_shortfall_packet_length():
    assert shortfall_packet_length(1.0, 50, 40) == pytest.approx(0.8)
    assert shortfall_packet_length(1.0, 50, 60) == 1.0
    with pytest.raises(InvalidParameterError):
        shortfall_packet_length(1.0, 50, 0)


def test_rank_by_urgency_breaks_ties_by_id():
    temps = np.array([73.0, 74.0, 73.0, 72.0])
    assert rank_by_urgency(temps, np.full(4, 73.5)).tolist() == [1, 0, 2, 3]


# --- the controller ------------------------------------------------------

def make_controller(pool, **kw):
    kw.setdefault("band", pool.band)
    kw.setdefault("dt", 1.0)
    return PacketController(pool, ControllerConfig(**kw))


def test_config_validation():
    for bad in [dict(gain=-1), dict(dt=0), dict(sste_epsilon=0), dict(window=-1), dict(budget_cap=-1)]:
        with pytest.raises(InvalidParameterError):
            ControllerConfig(band=AC_BAND, **{"dt": 1.0, **bad})


def test_controller_serves_hottest_rooms():
    pool = uniform_pool(4, temps=[78.0, 79.0, 77.0, 76.0])
    ctl = make_controller(pool)
    u, ids = ctl.decide(pool)
    assert ids.tolist() == [0, 1]
    assert u.sum() == 2


def test_fractional_budget_spreads_remainder():
    pool = uniform_pool(5, params=ThermalParams(20, 40, 85.0))
    ctl = make_controller(pool, integer_budget=False, clamp_low_critical=False)
    u, _ = ctl.decide(pool)
    assert u.sum() == pytest.approx(aggregate_budget(pool))
    assert sorted(u.tolist()) == [0.0, 0.0, 0.0, 0.5, 1.0]


def test_gain_applies_only_before_settling():
    pool = uniform_pool(100, temps=np.full(100, 78.0))
    ctl = make_controller(pool, gain=0.05)
    assert ctl.decide(pool)[0].sum() == 63
    assert not ctl.settled
    pool.temps = np.full(100, 73.0)
    assert ctl.decide(pool)[0].sum() == 50
    assert ctl.settled and ctl.events[0][1] == "settled"


def test_budget_cap():
    pool = uniform_pool(100)
    assert make_controller(pool, budget_cap=40).decide(pool)[0].sum() == 40


def test_low_critical_clamp_after_settling():
    temps = np.full(10, 73.0)
    temps[:5] = 72.05
    temps[5:] = 73.95
    pool = uniform_pool(10, temps=temps)
    ctl = make_controller(pool, dt=1.0)
    assert ctl.t_low_crit[0] > 72.05
    u, ids = ctl.decide(pool)
    assert ctl.settled
    assert set(ids.tolist()) <= set(range(5, 10))


def test_window_plan_is_followed_then_released():
    pool = uniform_pool(100)
    ctl = make_controller(pool, dt=0.5, window=10)
    counts = []
    for _ in range(12):
        u, ids = ctl.decide(pool)
        counts.append(len(ids))
        pool.temps = dt_step(pool.temps, u, ctl.coeffs, pool.params)
    assert counts == [50] * 12
    assert any(e[1] == "window planned" for e in ctl.events)
    assert ctl.plan is None


def test_window_skipped_on_fractional_budget():
    pool = uniform_pool(5, params=ThermalParams(20, 40, 85.0))
    ctl = make_controller(pool, integer_budget=False, window=4)
    ctl.decide(pool)
    assert ctl.events[-1][1].startswith("window skipped")
