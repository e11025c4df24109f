"""Capacity sweeps: one engine run per capacity value, one table row per user."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Optional

from .engine import Scenario, ScenarioError, builtin_table1_scenario, run
from .scenario_io import fmt, load_scenario, scenario_from_dict
from .utility import evaluate


@dataclass
class SweepSpec:
    base: Scenario
    carrier_id: Hashable
    values: list
    output: Optional[Path] = None

    def __post_init__(self):
        problems = []
        if not self.values:
            problems.append("sweep values must be nonempty")
        for v in self.values:
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                problems.append(f"sweep value {v!r} must be finite and > 0")
        if self.carrier_id not in self.base.carrier_ids:
            problems.append(f"swept carrier {self.carrier_id!r} is not in the base scenario")
        if problems:
            raise ScenarioError(problems)


@dataclass
class SweepRow:
    r_swept: float
    ue_id: Hashable
    rates: dict  # carrier id -> rate
    total: float
    prices: dict  # carrier id -> final price
    iterations: int
    converged: bool
    utility: float = math.nan
    failed: bool = False
    error: str = ""

    def cells(self, carrier_ids) -> list[str]:
        if self.failed:
            blank = ["nan"] * (2 * len(carrier_ids) + 1)
            return [fmt(self.r_swept), str(self.ue_id), *blank, "0", "failed"]
        return [
            fmt(self.r_swept),
            str(self.ue_id),
            *(fmt(self.rates[c]) for c in carrier_ids),
            fmt(self.total),
            *(fmt(self.prices[c]) for c in carrier_ids),
            fmt(self.iterations),
            fmt(self.converged),
        ]


@dataclass
class SweepResult:
    carrier_ids: list
    rows: list = field(default_factory=list)

    @property
    def header(self) -> list[str]:
        return (
            ["R_swept", "ue_id"]
            + [f"r_carrier_{c}" for c in self.carrier_ids]
            + ["total"]
            + [f"p_{c}" for c in self.carrier_ids]
            + ["iterations", "converged"]
        )

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header)
            for row in self.rows:
                w.writerow(row.cells(self.carrier_ids))

    def at(self, r_swept) -> list[SweepRow]:
        return [r for r in self.rows if r.r_swept == r_swept]


def rows_for_trace(scenario: Scenario, trace, r_swept: float) -> list[SweepRow]:
    """Tabulate each user's final allocation from a finished run."""
    rows = []
    for u in scenario.users:
        rates = {c: trace.allocation.get((u.id, c), 0.0) for c in scenario.carrier_ids}
        total = math.fsum(rates.values())
        rows.append(
            SweepRow(
                r_swept, u.id, rates, total, dict(trace.final_prices), trace.iterations_used, trace.converged,
                utility=evaluate(u.utility, total),
            )
        )
    return rows


def rows_for(scenario: Scenario, r_swept: float) -> list[SweepRow]:
    try:
        trace = run(scenario)
    except Exception as exc:  # a failed point is reported, the sweep goes on
        return [SweepRow(r_swept, u.id, {}, math.nan, {}, 0, False, failed=True, error=str(exc)) for u in scenario.users]
    return rows_for_trace(scenario, trace, r_swept)


def _point(args):
    spec_base, carrier_id, value = args
    return rows_for(spec_base.with_capacity(carrier_id, value), float(value))


def run_sweep(spec: SweepSpec, workers: int = 1) -> SweepResult:
    """Rows come out ordered by (capacity value, user order), whatever ``workers`` is."""
    jobs = [(spec.base, spec.carrier_id, v) for v in sorted(set(float(v) for v in spec.values))]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_point, jobs))
    else:
        chunks = [_point(j) for j in jobs]
    result = SweepResult(spec.base.carrier_ids)
    for chunk in chunks:
        result.rows.extend(chunk)
    if spec.output is not None:
        out = Path(spec.output)
        out.mkdir(parents=True, exist_ok=True)
        result.write_csv(out / "sweep.csv")
    return result


def table1_sweep_spec(values=None, r2: float = 70.0, output=None, settings=None) -> SweepSpec:
    """R1 from 30 to 200 in steps of 10 with R2 fixed, unless ``values`` is given."""
    values = list(range(30, 201, 10)) if values is None else list(values)
    base = builtin_table1_scenario(values[0], r2, settings)
    return SweepSpec(base, 1, values, output)


def load_sweep_spec(path) -> SweepSpec:
    """Read a sweep file.

    ``base`` is either a scenario path (relative to the sweep file), an inline
    scenario object, or ``{"builtin": "table1", "R1": .., "R2": ..}``.
    ``values`` is a list or ``{"start", "stop", "step"}`` (stop inclusive).
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}"]) from None
    allowed = {"base", "carrier", "values", "output"}
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ScenarioError([f"unknown sweep field {k!r}" for k in unknown])
    base = doc.get("base")
    if isinstance(base, str):
        scenario = load_scenario((path.parent / base) if not Path(base).is_absolute() else base)
    elif isinstance(base, dict) and "builtin" in base:
        if base["builtin"] != "table1":
            raise ScenarioError([f"unknown builtin scenario {base['builtin']!r}"])
        scenario = builtin_table1_scenario(float(base.get("R1", 100.0)), float(base.get("R2", 70.0)))
    elif isinstance(base, dict):
        scenario = scenario_from_dict(base)
    else:
        raise ScenarioError(["sweep needs a 'base' scenario"])

    values = doc.get("values")
    if isinstance(values, dict):
        start, stop, step = (float(values[k]) for k in ("start", "stop", "step"))
        if step <= 0:
            raise ScenarioError(["values.step must be > 0"])
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        values = [start + i * step for i in range(count)]
    if not isinstance(values, list):
        raise ScenarioError(["sweep 'values' must be a list or a start/stop/step object"])
    output = doc.get("output")
    if output is not None and not Path(output).is_absolute():
        output = path.parent / output
    return SweepSpec(scenario, doc.get("carrier", scenario.carrier_ids[0]), values, output)
