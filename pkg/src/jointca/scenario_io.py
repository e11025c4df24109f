"""Scenario files (JSON) and per-iteration trace tables (CSV)."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .engine import Carrier, RunTrace, Scenario, ScenarioError, Settings, User
from .protocol import DecayPolicy
from .utility import UtilityFunction

TRACE_HEADER = ["iteration", "ue_id", "carrier_id", "bid", "price", "rate"]

_TOP_KEYS = {"carriers", "users", "settings"}
_CARRIER_KEYS = {"id", "capacity"}
_USER_KEYS = {"id", "utility", "coverage"}
_SETTINGS_KEYS = {"delta", "max_iterations", "initial_bid", "decay", "tol"}


class ScenarioParseError(ValueError):
    pass


def fmt(x) -> str:
    """Nine significant digits, the precision used in every emitted table."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.9g}"


def load_scenario(path) -> Scenario:
    path = Path(path)
    text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(doc, source=str(path))


def scenario_from_dict(doc, source="<scenario>") -> Scenario:
    """Build and validate a scenario, collecting every problem before raising."""
    problems = []
    if not isinstance(doc, dict):
        raise ScenarioError([f"{source}: top level must be an object"])
    for key in sorted(set(doc) - _TOP_KEYS):
        problems.append(f"unknown top-level field {key!r}")
    for key in ("carriers", "users"):
        if key not in doc:
            problems.append(f"missing required field {key!r}")

    carriers = []
    for n, c in enumerate(doc.get("carriers") or []):
        where = f"carriers[{n}]"
        if not isinstance(c, dict):
            problems.append(f"{where}: must be an object")
            continue
        problems += [f"{where}: unknown field {k!r}" for k in sorted(set(c) - _CARRIER_KEYS)]
        problems += [f"{where}: missing field {k!r}" for k in sorted(_CARRIER_KEYS - set(c))]
        if _CARRIER_KEYS <= set(c):
            cap = c["capacity"]
            if not _is_number(cap):
                problems.append(f"{where}.capacity: must be a number, got {cap!r}")
                continue
            carriers.append(Carrier(_id(c["id"]), float(cap)))

    users = []
    for n, u in enumerate(doc.get("users") or []):
        where = f"users[{n}]"
        if not isinstance(u, dict):
            problems.append(f"{where}: must be an object")
            continue
        problems += [f"{where}: unknown field {k!r}" for k in sorted(set(u) - _USER_KEYS)]
        problems += [f"{where}: missing field {k!r}" for k in sorted(_USER_KEYS - set(u))]
        if not _USER_KEYS <= set(u):
            continue
        try:
            utility = utility_from_dict(u["utility"])
        except (ValueError, TypeError) as exc:
            problems.append(f"{where}.utility: {exc}")
            continue
        cov = u["coverage"]
        if not isinstance(cov, list):
            problems.append(f"{where}.coverage: must be a list of carrier ids")
            continue
        users.append(User(_id(u["id"]), utility, tuple(_id(c) for c in cov)))

    settings = Settings()
    raw = doc.get("settings", {})
    if not isinstance(raw, dict):
        problems.append("settings: must be an object")
        raw = {}
    problems += [f"settings: unknown field {k!r}" for k in sorted(set(raw) - _SETTINGS_KEYS)]
    kwargs = {}
    for key in ("delta", "initial_bid", "tol"):
        if key in raw:
            if _is_number(raw[key]):
                kwargs[key] = float(raw[key])
            else:
                problems.append(f"settings.{key}: must be a number, got {raw[key]!r}")
    if "max_iterations" in raw:
        v = raw["max_iterations"]
        if isinstance(v, int) and not isinstance(v, bool):
            kwargs["max_iterations"] = v
        else:
            problems.append(f"settings.max_iterations: must be an integer, got {v!r}")
    if "decay" in raw:
        try:
            kwargs["decay"] = decay_from_value(raw["decay"])
        except (ValueError, TypeError) as exc:
            problems.append(f"settings.decay: {exc}")
    if kwargs:
        settings = replace(settings, **kwargs)

    if problems:
        raise ScenarioError(problems)
    return Scenario(tuple(carriers), tuple(users), settings).validate()


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _id(v):
    if isinstance(v, bool) or not isinstance(v, (int, str)):
        raise ScenarioError([f"ids must be integers or strings, got {v!r}"])
    return v


def utility_from_dict(d) -> UtilityFunction:
    if not isinstance(d, dict):
        raise TypeError("utility must be an object")
    kind = d.get("type")
    if kind == "sigmoidal":
        extra = set(d) - {"type", "a", "b"}
        if extra or not {"a", "b"} <= set(d):
            raise ValueError("sigmoidal utility needs exactly fields a and b")
        return UtilityFunction.sigmoidal(_num(d["a"]), _num(d["b"]))
    if kind in ("log", "logarithmic"):
        extra = set(d) - {"type", "k", "r_max"}
        if extra or not {"k", "r_max"} <= set(d):
            raise ValueError("log utility needs exactly fields k and r_max")
        return UtilityFunction.logarithmic(_num(d["k"]), _num(d["r_max"]))
    raise ValueError(f"utility type must be 'sigmoidal' or 'log', got {kind!r}")


def _num(v):
    if not _is_number(v):
        raise ValueError(f"expected a number, got {v!r}")
    return float(v)


def decay_from_value(v) -> DecayPolicy:
    if isinstance(v, str):
        return DecayPolicy.parse(v)
    if isinstance(v, dict):
        kind = v.get("type")
        if kind == "off":
            return DecayPolicy.off()
        if kind in ("exp", "exponential"):
            return DecayPolicy.exponential(_num(v.get("h1")), _num(v.get("h2")))
        if kind in ("rat", "rational"):
            return DecayPolicy.rational(_num(v.get("h3")))
        raise ValueError(f"unknown decay type {kind!r}")
    raise TypeError("decay must be a string like 'exp:10,50' or an object")


def decay_to_value(policy: DecayPolicy) -> dict:
    if policy.kind == "exponential":
        return {"type": "exponential", "h1": policy.h1, "h2": policy.h2}
    if policy.kind == "rational":
        return {"type": "rational", "h3": policy.h3}
    return {"type": "off"}


def scenario_to_dict(scenario: Scenario) -> dict:
    s = scenario.settings
    return {
        "carriers": [{"id": c.id, "capacity": c.capacity} for c in scenario.carriers],
        "users": [{"id": u.id, "utility": u.utility.to_dict(), "coverage": list(u.coverage)} for u in scenario.users],
        "settings": {
            "delta": s.delta,
            "max_iterations": s.max_iterations,
            "initial_bid": s.initial_bid,
            "decay": decay_to_value(s.decay),
            "tol": s.tol,
        },
    }


def dump_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=2) + "\n")


def trace_rows(trace: RunTrace):
    mask = trace.scenario.coverage_mask()
    for rec in trace.records:
        for k, cid in enumerate(trace.carrier_ids):
            price = rec.prices[k]
            for i, ue in enumerate(trace.ue_ids):
                if mask[k, i]:
                    bid = rec.bids[k, i]
                    yield [rec.n, ue, cid, bid, price, bid / price]


def emit_trace(trace: RunTrace, path) -> None:
    """Write ``iteration,ue_id,carrier_id,bid,price,rate`` rows for covered pairs."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_HEADER)
        for row in trace_rows(trace):
            w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])


@dataclass
class TraceRow:
    iteration: int
    ue_id: object
    carrier_id: object
    bid: float
    price: float
    rate: float


def read_trace(path) -> list[TraceRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != TRACE_HEADER:
            raise ValueError(f"unexpected trace header {header}")
        return [
            TraceRow(int(n), _parse_id(ue), _parse_id(cid), float(bid), float(price), float(rate))
            for n, ue, cid, bid, price, rate in reader
        ]


def _parse_id(text):
    try:
        return int(text)
    except ValueError:
        return text
