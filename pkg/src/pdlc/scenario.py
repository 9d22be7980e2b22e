"""Scenario documents: dataclasses, JSON schema, load/save and built-in presets.

Every physical quantity carries its unit in the key name (``_f`` for
degrees Fahrenheit, ``_minutes``, ``_kw``).  Unknown keys are rejected.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import ScenarioError

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}

PDLC_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "gain_per_f": _NONNEG,
        "sste_epsilon_f": _POS,
        "window_intervals": {"type": "integer", "minimum": 0},
        "integer_budget": {"type": "boolean"},
        "clamp_low_critical": {"type": "boolean"},
        "budget_cap_packets": {"type": ["integer", "null"], "minimum": 0},
    },
}

FEEDER_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["name", "rooms", "tau_minutes", "t_gain_f", "t_out_f", "set_points", "rated_power_kw"],
    "properties": {
        "name": {"type": "string", "pattern": "^[A-Za-z][A-Za-z0-9_]*$"},
        "rooms": {"type": "integer", "minimum": 1},
        "tau_minutes": _POS,
        "t_gain_f": _POS,
        "t_out_f": _NUM,
        "set_points": {
            "type": "object",
            "additionalProperties": False,
            "minProperties": 1,
            "maxProperties": 1,
            "properties": {
                "fixed_f": _NUM,
                "uniform_f": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
                "list_f": {"type": "array", "items": _NUM, "minItems": 1},
            },
        },
        "band_width_f": _POS,
        "band_delta1_f": _NONNEG,
        "band_delta2_f": _NONNEG,
        "rated_power_kw": _POS,
        "eps_bar_f": _NONNEG,
        "control": {"enum": ["pdlc", "baseline"]},
        "transient_offset_f": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        "pdlc": PDLC_SCHEMA,
    },
}

SCENARIO_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["name", "dt_minutes", "horizon_steps", "feeders"],
    "properties": {
        "name": {"type": "string"},
        "dt_minutes": _POS,
        "horizon_steps": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "mode": {"enum": ["steady", "transient"]},
        "feeders": {"type": "array", "items": FEEDER_SCHEMA},
        "background_loads": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name", "low_kw", "high_kw"],
                "properties": {
                    "name": {"type": "string", "pattern": "^[A-Za-z][A-Za-z0-9_]*$"},
                    "low_kw": _NONNEG,
                    "high_kw": _NONNEG,
                },
            },
        },
    },
}


@dataclass(frozen=True)
class PDLCSettings:
    gain_per_f: float = 0.0
    sste_epsilon_f: float = 0.1
    window_intervals: int = 0
    integer_budget: bool = True
    clamp_low_critical: bool = True
    budget_cap_packets: int | None = None


@dataclass(frozen=True)
class FeederSpec:
    name: str
    rooms: int
    tau_minutes: float
    t_gain_f: float
    t_out_f: float
    set_points: dict
    rated_power_kw: float
    band_width_f: float | None = None
    band_delta1_f: float | None = None
    band_delta2_f: float | None = None
    eps_bar_f: float = 0.0
    control: str = "pdlc"
    transient_offset_f: tuple = (4.0, 6.0)
    pdlc: PDLCSettings = field(default_factory=PDLCSettings)


@dataclass(frozen=True)
class BackgroundLoad:
    name: str
    low_kw: float
    high_kw: float


@dataclass(frozen=True)
class Scenario:
    name: str
    dt_minutes: float
    horizon_steps: int
    feeders: tuple = ()
    background_loads: tuple = ()
    seed: int = 0
    mode: str = "steady"

    def with_changes(self, **kw) -> "Scenario":
        data = {**self.__dict__, **kw}
        return Scenario(**data)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "dt_minutes": self.dt_minutes,
            "horizon_steps": self.horizon_steps,
            "seed": self.seed,
            "mode": self.mode,
            "feeders": [_feeder_dict(f) for f in self.feeders],
            "background_loads": [asdict(b) for b in self.background_loads],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def _feeder_dict(f: FeederSpec) -> dict:
    out = {k: v for k, v in f.__dict__.items() if v is not None and k != "pdlc"}
    out["transient_offset_f"] = list(f.transient_offset_f)
    out["set_points"] = {k: list(v) if isinstance(v, tuple) else v for k, v in f.set_points.items()}
    out["pdlc"] = asdict(f.pdlc)
    return out


def _freeze_set_points(sp: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in sp.items()}


def _semantic_problems(doc: dict) -> list[str]:
    problems = []
    names = [f["name"] for f in doc.get("feeders", [])] + [b["name"] for b in doc.get("background_loads", [])]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        problems.append(f"duplicate feeder/load names: {dupes}")
    for i, f in enumerate(doc.get("feeders", [])):
        where = f"feeders[{i}] ({f['name']})"
        has_width = "band_width_f" in f
        has_split = "band_delta1_f" in f or "band_delta2_f" in f
        if has_width == has_split:
            problems.append(f"{where}: give either band_width_f or both band_delta1_f and band_delta2_f")
        elif has_split and not ("band_delta1_f" in f and "band_delta2_f" in f):
            problems.append(f"{where}: band_delta1_f and band_delta2_f go together")
        sp = f["set_points"]
        if "list_f" in sp and len(sp["list_f"]) != f["rooms"]:
            problems.append(f"{where}: set_points.list_f has {len(sp['list_f'])} entries for {f['rooms']} rooms")
        if "uniform_f" in sp and sp["uniform_f"][0] > sp["uniform_f"][1]:
            problems.append(f"{where}: set_points.uniform_f is inverted")
        off = f.get("transient_offset_f")
        if off is not None and off[0] > off[1]:
            problems.append(f"{where}: transient_offset_f is inverted")
    for i, b in enumerate(doc.get("background_loads", [])):
        if b["low_kw"] > b["high_kw"]:
            problems.append(f"background_loads[{i}] ({b['name']}): low_kw > high_kw")
    return problems


def validate(doc: dict) -> None:
    """Raise :class:`ScenarioError` listing every schema and consistency problem."""
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    problems = []
    for err in sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path))):
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        problems.append(f"{path}: {err.message}")
    if problems:
        raise ScenarioError(problems)
    problems = _semantic_problems(doc)
    if problems:
        raise ScenarioError(problems)


def from_dict(doc: dict) -> Scenario:
    validate(doc)
    feeders = []
    for f in doc["feeders"]:
        f = dict(f)
        f["pdlc"] = PDLCSettings(**f.get("pdlc", {}))
        f["set_points"] = _freeze_set_points(f["set_points"])
        if "transient_offset_f" in f:
            f["transient_offset_f"] = tuple(f["transient_offset_f"])
        feeders.append(FeederSpec(**f))
    return Scenario(
        name=doc["name"],
        dt_minutes=doc["dt_minutes"],
        horizon_steps=doc["horizon_steps"],
        feeders=tuple(feeders),
        background_loads=tuple(BackgroundLoad(**b) for b in doc.get("background_loads", [])),
        seed=doc.get("seed", 0),
        mode=doc.get("mode", "steady"),
    )


def loads(text: str) -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"not valid JSON: {exc}") from exc
    return from_dict(doc)


def builtin_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("pdlc.scenarios").iterdir() if p.name.endswith(".json"))


def load(path_or_name: str | Path) -> Scenario:
    """Load a scenario file, or a built-in preset by name (e.g. ``ac_pool``)."""
    path = Path(path_or_name)
    if path.exists():
        return loads(path.read_text())
    name = str(path_or_name)
    if name in builtin_names():
        return loads(resources.files("pdlc.scenarios").joinpath(f"{name}.json").read_text())
    raise ScenarioError(f"no scenario file or preset named {name!r} (presets: {builtin_names()})")
