"""``pdlc`` command line: run scenarios, print packet-length bounds, extract plot series."""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from . import scenario as scen
from .errors import PDLCError
from .sim import RunLog, feeder_bounds, run_scenario, settled_stats, consumption_stats

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_IO = 3

OUT_DIR_ENV = "PDLC_OUT_DIR"


def _arms(arm: str) -> list[str | None]:
    return {"pdlc": ["pdlc"], "baseline": ["baseline"], "both": ["pdlc", "baseline"], "as-is": [None]}[arm]


def _arm_summary(log: RunLog, csv_name: str) -> dict:
    settled = log.first_settled_step()
    if settled is None:
        stats, warmup = consumption_stats(log, 0), 0
    else:
        stats, warmup = settled_stats(log)
    return {
        "csv": csv_name,
        "warmup_steps": warmup,
        "settled": settled is not None,
        "stats_kw": stats.as_dict(),
        "violations": int(log.total_violations.sum()),
        "packets": {f.name: int(log.granted[f.name].sum()) for f in log.feeders},
        "events": [[k, name, what] for k, name, what in log.events],
    }


def run_one(scenario: scen.Scenario, arm: str, out: Path, grants: bool = False) -> dict:
    """Run the requested arms, write their CSVs and ``summary.json`` under ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    summary = {
        "scenario": scenario.name,
        "scenario_sha256": scenario.digest(),
        "seed": scenario.seed,
        "version": __version__,
        "arms": {},
    }
    for a in _arms(arm):
        log = run_scenario(scenario, arm=a)
        label = a or "as-is"
        csv_name = f"{scenario.name}_{label}.csv"
        (out / csv_name).write_text(log.csv_text())
        if grants:
            (out / f"{scenario.name}_{label}_grants.csv").write_text(log.grants_csv_text())
        summary["arms"][label] = _arm_summary(log, csv_name)
    if {"pdlc", "baseline"} <= summary["arms"].keys():
        p, b = summary["arms"]["pdlc"]["stats_kw"], summary["arms"]["baseline"]["stats_kw"]
        summary["std_ratio"] = p["std_dev"] / b["std_dev"] if b["std_dev"] > 0 else None
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def _parse_seeds(text: str) -> list[int]:
    lo, sep, hi = text.partition("..")
    try:
        a, b = int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A..B, got {text!r}") from None
    if not sep or b < a or a < 0:
        raise argparse.ArgumentTypeError(f"expected A..B with 0 <= A <= B, got {text!r}")
    return list(range(a, b + 1))


def _sweep_job(job):
    scenario, arm, out, grants = job
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return run_one(scenario, arm, out, grants)


def cmd_run(args) -> int:
    scenario = scen.load(args.scenario)
    out = Path(args.out or os.environ.get(OUT_DIR_ENV) or "pdlc_out")
    if args.seeds:
        jobs = [(scenario.with_changes(seed=s), args.arm, out / f"seed_{s}", args.grants) for s in args.seeds]
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_sweep_job, jobs))
        else:
            results = [_sweep_job(j) for j in jobs]
        index = {str(r["seed"]): {k: v["stats_kw"] for k, v in r["arms"].items()} for r in results}
        (out / "sweep.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
        print(f"wrote {len(results)} runs under {out}")
        return EXIT_OK
    if args.seed is not None:
        scenario = scenario.with_changes(seed=args.seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        summary = run_one(scenario, args.arm, out, args.grants)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    for label, arm in summary["arms"].items():
        st = arm["stats_kw"]
        print(f"{label}: mean {st['mean']:.3f} kW, std {st['std_dev']:.3f} kW, "
              f"max {st['maximum']:.3f} kW, violations {arm['violations']}")
    print(f"wrote {out / 'summary.json'}")
    return EXIT_OK


def _minutes(x) -> str:
    if x is None:
        return "none"
    if math.isinf(x):
        return "unbounded"
    return f"{x:.6g} min"


def cmd_bounds(args) -> int:
    scenario = scen.load(args.scenario)
    if args.eps_bar is not None:
        from dataclasses import replace
        scenario = scenario.with_changes(
            feeders=tuple(replace(f, eps_bar_f=args.eps_bar) for f in scenario.feeders)
        )
    for row in feeder_bounds(scenario):
        print(f"feeder {row['feeder']} ({row['rooms']} rooms, mean set point {row['t_set_ave_f']:.6g} F)")
        print(f"  packet budget m        {row['budget']}")
        print(f"  s_on / s_off           {row['s_on']:.6g} / {row['s_off']:.6g}")
        print(f"  delta1 / delta2        {row['delta1_f']:.6g} / {row['delta2_f']:.6g} F")
        if not row["split_ok"]:
            print("  band split leaves no room for the one-step bounds")
        print(f"  upper-edge length      {_minutes(row['overheat_minutes'])}")
        print(f"  lower-edge length      {_minutes(row['overcool_minutes'])}")
        eps = f"eps_bar {row['eps_bar_f']:g} F"
        print(f"  upper-edge length at {eps}: {_minutes(row['overheat_disturbed_minutes'])}")
        print(f"  lower-edge length at {eps}: {_minutes(row['overcool_disturbed_minutes'])}")
        print(f"  window length          {_minutes(row['window_minutes'])}")
        print(f"  safe packet length     {_minutes(row['safe_minutes'])}")
        if row["budget"] > 0 and row["dt_exceeds_safe"]:
            print(f"  warning: dt = {scenario.dt_minutes:g} min exceeds the safe packet length")
    return EXIT_OK


def plot_series(lines) -> list[list[str]]:
    """Figure series from a run-log CSV: time, aggregate kW and each feeder's temperature envelope.

    Raises ValueError naming the 1-based line of the first malformed row.
    """
    rows = list(csv.reader(lines))
    if not rows:
        return []
    header = rows[0]
    if header[:3] != ["step", "minutes", "aggregate_kw"]:
        raise ValueError("line 1: header must start with step,minutes,aggregate_kw")
    feeders = [c[: -len("_t_ave_f")] for c in header if c.endswith("_t_ave_f")]
    picks = ["minutes", "aggregate_kw"]
    for f in feeders:
        picks += [f"{f}_t_ave_f", f"{f}_t_lo_f", f"{f}_t_hi_f"]
    idx = [header.index(c) for c in picks]
    out = [picks]
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ValueError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            values = [float(row[i]) for i in idx]
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric field") from None
        out.append([format(v, ".12g") for v in values])
    return out


def cmd_plotdata(args) -> int:
    try:
        with open(args.log, newline="") as fh:
            series = plot_series(fh)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {args.log}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        csv.writer(fh, lineterminator="\n").writerows(series)
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def cmd_presets(args) -> int:
    if args.name:
        sys.stdout.write(scen.load(args.name).to_json())
    else:
        for name in scen.builtin_names():
            print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdlc", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a scenario and write CSV logs plus a JSON summary")
    p.add_argument("scenario", help="scenario JSON file or preset name")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--seeds", type=_parse_seeds, help="seed sweep A..B (inclusive); one subdirectory per seed")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for a seed sweep")
    p.add_argument("--arm", choices=["pdlc", "baseline", "both", "as-is"], default="both")
    p.add_argument("--out", help=f"output directory (default ${OUT_DIR_ENV} or ./pdlc_out)")
    p.add_argument("--grants", action="store_true", help="also write the per-step grant log")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bounds", help="print packet budget, band split and packet-length bounds")
    p.add_argument("scenario")
    p.add_argument("--eps-bar", type=float, help="override every feeder's disturbance bound (F)")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("plotdata", help="extract figure series from a run-log CSV")
    p.add_argument("log")
    p.add_argument("--out", help="write to a file instead of stdout")
    p.set_defaults(func=cmd_plotdata)

    p = sub.add_parser("presets", help="list built-in scenarios, or print one")
    p.add_argument("name", nargs="?")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PDLCError as exc:
        problems = getattr(exc, "problems", [str(exc)])
        print("error: scenario rejected", file=sys.stderr)
        for p in problems:
            print(f"  - {p}", file=sys.stderr)
        return EXIT_INVALID
    except BrokenPipeError:
        return EXIT_OK
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
