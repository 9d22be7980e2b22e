"""Scenario runner: composes feeders and background loads on one clock."""
from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .baseline import ThermostatBank, initial_switches
from .controller import (
    ControllerConfig,
    PacketController,
    overcool_packet_length,
    overheat_packet_length,
    packet_budget,
    safe_packet_length,
    validate_band_split,
    window_packet_length,
)
from .errors import CapacityError, InvalidParameterError, PDLCError, ScenarioError
from .pool import ComfortBand, PoolState, duty_status, violation_mask
from .scenario import FeederSpec, Scenario
from .thermal import Disturbance, ThermalParams, discretize, dt_step

log = logging.getLogger(__name__)

# spawn_key purposes; fixed so adding a feeder never reshuffles another's stream
_SET_POINTS, _INITIAL, _DISTURBANCE, _COIN = range(4)
_BACKGROUND_BASE = 10_000


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


@dataclass(frozen=True)
class ConsumptionStats:
    mean: float
    std_dev: float
    maximum: float
    minimum: float

    def as_dict(self) -> dict:
        return {"mean": self.mean, "std_dev": self.std_dev, "maximum": self.maximum, "minimum": self.minimum}


@dataclass
class FeederInfo:
    name: str
    control: str
    rooms: int
    t_set_ave: float
    s_on: float
    budget: int
    band: ComfortBand
    rated_power_kw: float
    eps_bar_f: float
    safe_packet_length: float | None


@dataclass
class RunLog:
    scenario: Scenario
    arm: str
    feeders: list[FeederInfo]
    background_names: list[str]
    aggregate_kw: np.ndarray
    feeder_kw: dict[str, np.ndarray]
    t_ave: dict[str, np.ndarray]
    t_lo: dict[str, np.ndarray]
    t_hi: dict[str, np.ndarray]
    granted: dict[str, np.ndarray]
    violations: dict[str, np.ndarray]
    sste: dict[str, np.ndarray]
    background_kw: dict[str, np.ndarray]
    grants: list[tuple[int, str, np.ndarray]] = field(default_factory=list)
    violation_records: list[tuple[int, str, int, str]] = field(default_factory=list)
    events: list[tuple[int, str, str]] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.aggregate_kw)

    @property
    def total_violations(self) -> np.ndarray:
        if not self.violations:
            return np.zeros(self.steps, dtype=np.int64)
        return np.sum([v for v in self.violations.values()], axis=0)

    def first_settled_step(self) -> int | None:
        """First step at which every feeder is in equilibrium, or None."""
        if not self.sste:
            return 0
        both = np.logical_and.reduce([s for s in self.sste.values()])
        hits = np.flatnonzero(both)
        return int(hits[0]) if hits.size else None

    def columns(self) -> list[str]:
        cols = ["step", "minutes", "aggregate_kw"]
        for f in self.feeders:
            n = f.name
            cols += [f"{n}_kw", f"{n}_t_ave_f", f"{n}_t_lo_f", f"{n}_t_hi_f", f"{n}_packets", f"{n}_violations"]
        cols += [f"{b}_kw" for b in self.background_names]
        cols.append("violations")
        return cols

    def to_csv(self, fh) -> None:
        """One row per step.  Column order is fixed by :meth:`columns`."""
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.columns())
        dt = self.scenario.dt_minutes
        total = self.total_violations
        for k in range(self.steps):
            row = [k, _fmt(k * dt), _fmt(self.aggregate_kw[k])]
            for f in self.feeders:
                n = f.name
                row += [
                    _fmt(self.feeder_kw[n][k]), _fmt(self.t_ave[n][k]), _fmt(self.t_lo[n][k]),
                    _fmt(self.t_hi[n][k]), int(self.granted[n][k]), int(self.violations[n][k]),
                ]
            row += [_fmt(self.background_kw[b][k]) for b in self.background_names]
            row.append(int(total[k]))
            w.writerow(row)

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()

    def grants_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "feeder", "room_ids"])
        for k, name, ids in self.grants:
            w.writerow([k, name, " ".join(str(int(i)) for i in ids)])
        return buf.getvalue()


def _fmt(x) -> str:
    return format(float(x), ".12g")


@dataclass
class _FeederRun:
    feeder: FeederSpec
    info: FeederInfo
    pool: PoolState
    coeffs: object
    controller: object
    disturbance: Disturbance


def _set_points(feeder: FeederSpec, rng: np.random.Generator) -> np.ndarray:
    sp = feeder.set_points
    if "fixed_f" in sp:
        return np.full(feeder.rooms, float(sp["fixed_f"]))
    if "uniform_f" in sp:
        lo, hi = sp["uniform_f"]
        return rng.uniform(lo, hi, size=feeder.rooms)
    return np.asarray(sp["list_f"], dtype=float)


def _band(feeder: FeederSpec, params: ThermalParams, t_set_ave: float) -> ComfortBand:
    if feeder.band_width_f is not None:
        s_on, s_off = duty_status(params, t_set_ave)
        return ComfortBand(s_off * feeder.band_width_f, s_on * feeder.band_width_f)
    return ComfortBand(feeder.band_delta1_f, feeder.band_delta2_f)


def steady_offsets(band: ComfortBand, n: int, rng: np.random.Generator) -> np.ndarray:
    """Offsets from set point, uniform in band, recentred to zero mean.

    Recentring can push a draw past an edge when the band is lopsided; the
    offsets are then shrunk toward zero just enough to stay strictly inside.
    """
    off = rng.uniform(-band.delta2, band.delta1, size=n)
    off -= off.mean()
    reach = max(
        off.max() / band.delta1 if band.delta1 > 0 else (math.inf if off.max() > 0 else 0.0),
        -off.min() / band.delta2 if band.delta2 > 0 else (math.inf if off.min() < 0 else 0.0),
    )
    if reach >= 0.999:
        off *= 0.999 / reach if math.isfinite(reach) else 0.0
    return off


def _checked_duty_status(feeder: FeederSpec, params: ThermalParams, t_set_ave: float) -> tuple[float, float]:
    try:
        return duty_status(params, t_set_ave)
    except CapacityError as exc:
        raise ScenarioError(
            f"feeder {feeder.name}: capacity requires 0 <= (T_out - T_set_ave)/T_g < 1: {exc}"
        ) from exc


def _bound_or_none(fn, *args) -> float | None:
    try:
        return fn(*args)
    except PDLCError:
        return None


def feeder_bounds(scenario: Scenario) -> list[dict]:
    """Budget, band split and packet-length bounds for every feeder.

    Bounds that do not exist for a feeder (e.g. an empty budget) are None;
    ``inf`` means the corresponding edge cannot be crossed at any length.
    """
    out = []
    for i, feeder in enumerate(scenario.feeders):
        params = ThermalParams(feeder.tau_minutes, feeder.t_gain_f, feeder.t_out_f)
        set_points = _set_points(feeder, _rng(scenario.seed, i, _SET_POINTS))
        t_set_ave = float(set_points.mean())
        s_on, s_off = _checked_duty_status(feeder, params, t_set_ave)
        band = _band(feeder, params, t_set_ave)
        pool = PoolState(set_points, set_points.copy(), band, params, rated_power=feeder.rated_power_kw)
        m = packet_budget(pool)
        split_ok = band.width > 0 and validate_band_split(band, m, feeder.rooms)
        row = {
            "feeder": feeder.name, "rooms": feeder.rooms, "t_set_ave_f": t_set_ave, "s_on": s_on, "s_off": s_off,
            "budget": m, "delta1_f": band.delta1, "delta2_f": band.delta2, "split_ok": bool(split_ok),
            "eps_bar_f": feeder.eps_bar_f,
            "overheat_minutes": _bound_or_none(overheat_packet_length, pool, band, m),
            "overcool_minutes": _bound_or_none(overcool_packet_length, pool, band, m),
            "overheat_disturbed_minutes": _bound_or_none(overheat_packet_length, pool, band, m, feeder.eps_bar_f),
            "overcool_disturbed_minutes": _bound_or_none(overcool_packet_length, pool, band, m, feeder.eps_bar_f),
            "window_minutes": window_packet_length(band, params),
            "safe_minutes": _bound_or_none(safe_packet_length, pool, band, m, feeder.eps_bar_f),
        }
        safe = row["safe_minutes"]
        row["dt_exceeds_safe"] = safe is None or scenario.dt_minutes > safe
        out.append(row)
    return out


def build_feeder(feeder: FeederSpec, index: int, scenario: Scenario, control: str) -> _FeederRun:
    seed = scenario.seed
    params = ThermalParams(feeder.tau_minutes, feeder.t_gain_f, feeder.t_out_f)
    set_points = _set_points(feeder, _rng(seed, index, _SET_POINTS))
    t_set_ave = float(set_points.mean())
    s_on, _ = _checked_duty_status(feeder, params, t_set_ave)
    band = _band(feeder, params, t_set_ave)
    if band.width <= 0:
        raise ScenarioError(f"feeder {feeder.name}: comfort band has zero width")

    init_rng = _rng(seed, index, _INITIAL)
    if scenario.mode == "transient":
        lo, hi = feeder.transient_offset_f
        if lo <= band.delta1:
            raise ScenarioError(
                f"feeder {feeder.name}: transient_offset_f must start above the band (> {band.delta1:g} F)"
            )
        temps = set_points + init_rng.uniform(lo, hi, size=feeder.rooms)
    else:
        temps = set_points + steady_offsets(band, feeder.rooms, init_rng)

    pool = PoolState(set_points, temps, band, params, rated_power=feeder.rated_power_kw)
    coeffs = discretize(params, scenario.dt_minutes)
    budget = packet_budget(pool)
    safe = None
    if budget < feeder.rooms and validate_band_split(band, budget, feeder.rooms):
        try:
            safe = safe_packet_length(pool, band, budget, feeder.eps_bar_f)
        except PDLCError as exc:
            log.info("feeder %s: no packet-length bound: %s", feeder.name, exc)
    if control == "pdlc":
        st = feeder.pdlc
        config = ControllerConfig(
            band=band, dt=scenario.dt_minutes, gain=st.gain_per_f, sste_epsilon=st.sste_epsilon_f,
            window=st.window_intervals, integer_budget=st.integer_budget,
            clamp_low_critical=st.clamp_low_critical, budget_cap=st.budget_cap_packets,
        )
        controller = PacketController(pool, config)
        if safe is not None and scenario.dt_minutes > safe:
            warnings.warn(
                f"feeder {feeder.name}: packet length {scenario.dt_minutes:g} min exceeds the "
                f"guaranteed-safe {safe:.4g} min",
                stacklevel=3,
            )
    elif control == "baseline":
        controller = ThermostatBank(pool, initial_switches(feeder.rooms, s_on, _rng(seed, index, _COIN)))
    else:
        raise InvalidParameterError(f"unknown control {control!r}")

    info = FeederInfo(
        name=feeder.name, control=control, rooms=feeder.rooms, t_set_ave=t_set_ave, s_on=s_on,
        budget=budget, band=band, rated_power_kw=feeder.rated_power_kw, eps_bar_f=feeder.eps_bar_f,
        safe_packet_length=safe,
    )
    disturbance = Disturbance(feeder.eps_bar_f, np.random.SeedSequence(seed, spawn_key=(index, _DISTURBANCE)))
    return _FeederRun(feeder, info, pool, coeffs, controller, disturbance)


def run_scenario(scenario: Scenario, arm: str | None = None, record_details: bool = False) -> RunLog:
    """Run every feeder for ``horizon_steps`` intervals.

    ``arm`` ("pdlc" or "baseline") overrides each feeder's own control
    choice.  Row k of the log holds the state at the start of interval k and
    the load drawn during it.  Identical inputs give identical logs.
    """
    if arm not in (None, "pdlc", "baseline"):
        raise InvalidParameterError(f"unknown arm {arm!r}")
    runs = [build_feeder(f, i, scenario, arm or f.control) for i, f in enumerate(scenario.feeders)]
    horizon = scenario.horizon_steps
    names = [r.feeder.name for r in runs]

    def series(dtype=float):
        return {n: np.zeros(horizon, dtype=dtype) for n in names}

    feeder_kw, t_ave, t_lo, t_hi = series(), series(), series(), series()
    granted, violations, sste = series(np.int64), series(np.int64), series(bool)
    bg_rngs = [_rng(scenario.seed, _BACKGROUND_BASE + j) for j in range(len(scenario.background_loads))]
    background_kw = {b.name: np.zeros(horizon) for b in scenario.background_loads}
    grants, violation_records = [], []

    for k in range(horizon):
        for r in runs:
            pool, n = r.pool, r.feeder.name
            pool.time_index = k
            temps = pool.temps
            t_ave[n][k] = temps.mean()
            t_lo[n][k] = temps.min()
            t_hi[n][k] = temps.max()
            sste[n][k] = abs(t_ave[n][k] - r.info.t_set_ave) < r.feeder.pdlc.sste_epsilon_f
            under, over = violation_mask(pool)
            violations[n][k] = int(under.sum() + over.sum())
            if record_details and violations[n][k]:
                violation_records += [(k, n, int(i), "under") for i in np.flatnonzero(under)]
                violation_records += [(k, n, int(i), "over") for i in np.flatnonzero(over & ~under)]

            u, ids = r.controller.decide(pool)
            pool.switch = (u > 0).astype(np.int8)
            granted[n][k] = len(ids)
            feeder_kw[n][k] = u.sum() * pool.rated_power
            grants.append((k, n, ids))
            eps = r.disturbance.draw(pool.size)
            pool.temps = dt_step(temps, u, r.coeffs, pool.params, eps)
        for b, rng in zip(scenario.background_loads, bg_rngs):
            background_kw[b.name][k] = rng.uniform(b.low_kw, b.high_kw)

    aggregate = np.zeros(horizon)
    for n in names:
        aggregate += feeder_kw[n]
    for b in scenario.background_loads:
        aggregate += background_kw[b.name]

    events = []
    for r in runs:
        events += [(k, r.feeder.name, what) for k, what in getattr(r.controller, "events", [])]
    return RunLog(
        scenario=scenario, arm=arm or "as-is", feeders=[r.info for r in runs],
        background_names=[b.name for b in scenario.background_loads], aggregate_kw=aggregate,
        feeder_kw=feeder_kw, t_ave=t_ave, t_lo=t_lo, t_hi=t_hi, granted=granted,
        violations=violations, sste=sste, background_kw=background_kw, grants=grants,
        violation_records=violation_records, events=events,
    )


def consumption_stats(log: RunLog, warmup: int = 0) -> ConsumptionStats:
    """Mean, population std dev, max and min of aggregate load after ``warmup`` steps."""
    if not 0 <= warmup < log.steps:
        raise InvalidParameterError(f"warmup {warmup} must lie in [0, {log.steps})")
    x = log.aggregate_kw[warmup:]
    return ConsumptionStats(float(x.mean()), float(x.std()), float(x.max()), float(x.min()))


def settled_stats(log: RunLog) -> tuple[ConsumptionStats, int]:
    """Statistics from the first step at which every feeder is in equilibrium."""
    warmup = log.first_settled_step()
    if warmup is None:
        raise InvalidParameterError("the run never reached equilibrium; no steady-state window")
    return consumption_stats(log, warmup), warmup


def transient_profile(log: RunLog, feeder: str | None = None) -> np.ndarray:
    """|T_ave - T_set_ave| per step for a feeder (default: the first PDLC feeder)."""
    info = None
    for f in log.feeders:
        if (feeder is None and f.control == "pdlc") or f.name == feeder:
            info = f
            break
    if info is None:
        raise InvalidParameterError("no matching PDLC feeder in the log")
    return np.abs(log.t_ave[info.name] - info.t_set_ave)
