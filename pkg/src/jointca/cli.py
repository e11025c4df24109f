"""Command line entry point: ``jointca run|sweep|regime|table1``."""

from __future__ import annotations

import argparse
import contextlib
import csv
import math
import random
import sys
from dataclasses import replace

import numpy as np

from . import _kernels
from .engine import ScenarioError, builtin_table1_scenario, classify_regime, run
from .protocol import DecayPolicy
from .scenario_io import ScenarioParseError, emit_trace, load_scenario
from .sweep import SweepResult, load_sweep_spec, rows_for_trace, run_sweep


class RandomnessUsed(RuntimeError):
    pass


@contextlib.contextmanager
def forbid_randomness():
    """Make every stdlib / numpy RNG entry point raise while the block runs."""

    def trap(name):
        def _raise(*args, **kwargs):
            raise RandomnessUsed(f"{name} called during a --seedless run")

        return _raise

    targets = [(random, n) for n in ("random", "randint", "uniform", "choice", "shuffle", "seed", "gauss")]
    targets += [(np.random, n) for n in ("random", "rand", "randn", "randint", "default_rng", "seed", "uniform", "normal")]
    saved = [(mod, n, getattr(mod, n)) for mod, n in targets]
    try:
        for mod, n, _ in saved:
            setattr(mod, n, trap(f"{mod.__name__}.{n}"))
        yield
    finally:
        for mod, n, fn in saved:
            setattr(mod, n, fn)


def _override(scenario, args):
    changes = {}
    if args.decay is not None:
        changes["decay"] = DecayPolicy.parse(args.decay)
    if args.delta is not None:
        changes["delta"] = args.delta
    if args.max_iters is not None:
        changes["max_iterations"] = args.max_iters
    if not changes:
        return scenario
    return replace(scenario, settings=replace(scenario.settings, **changes)).validate()


def _run_and_print(scenario, args, out):
    trace = run(scenario)
    if args.trace:
        emit_trace(trace, args.trace)
    # sweep schema minus the swept-capacity column
    result = SweepResult(scenario.carrier_ids, rows_for_trace(scenario, trace, math.nan))
    w = csv.writer(out)
    w.writerow(result.header[1:])
    for row in result.rows:
        w.writerow(row.cells(scenario.carrier_ids)[1:])
    return 0 if trace.converged else 3


def cmd_run(args, out):
    scenario = _override(load_scenario(args.scenario), args)
    return _run_and_print(scenario, args, out)


def cmd_table1(args, out):
    scenario = _override(builtin_table1_scenario(args.r1, args.r2), args)
    return _run_and_print(scenario, args, out)


def cmd_sweep(args, out):
    spec = load_sweep_spec(args.spec)
    spec = replace(spec, base=_override(spec.base, args))
    if args.output:
        spec = replace(spec, output=args.output)
    result = run_sweep(spec, workers=args.workers)
    if spec.output is None:
        w = csv.writer(out)
        w.writerow(result.header)
        for row in result.rows:
            w.writerow(row.cells(result.carrier_ids))
    else:
        print(f"wrote {len(result.rows)} rows to {spec.output}/sweep.csv", file=sys.stderr)
    return 0


def cmd_regime(args, out):
    scenario = _override(load_scenario(args.scenario), args)
    rep = classify_regime(scenario)
    w = csv.writer(out)
    w.writerow(["carrier_id", "capacity", "inflection_sum", "price_bound", "slope_bound"])
    for cid in scenario.carrier_ids:
        pb, sb = rep.price_bounds[cid], rep.slope_bounds[cid]
        w.writerow([cid, f"{rep.capacities[cid]:.9g}", f"{rep.carrier_sums[cid]:.9g}",
                    "" if pb is None else f"{pb:.9g}", "" if sb is None else f"{sb:.9g}"])
    out.write(f"classification,{rep.classification}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--decay", help="off | exp:h1,h2 | rat:h3")
    common.add_argument("--delta", type=float, help="bid convergence threshold")
    common.add_argument("--max-iters", type=int, dest="max_iters")
    common.add_argument("--trace", help="write the per-iteration trace CSV here")
    common.add_argument("--seedless", action="store_true", help="fail if any random number generator is touched")

    p = argparse.ArgumentParser(prog="jointca", description="Utility-proportional-fair allocation with joint carrier aggregation")
    p.add_argument("--backend", action="store_true", help="print the kernel backend (numba or python) and exit")
    sub = p.add_subparsers(dest="command")

    r = sub.add_parser("run", parents=[common], help="run one scenario file")
    r.add_argument("scenario")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", parents=[common], help="run a capacity sweep")
    s.add_argument("spec")
    s.add_argument("--output", help="directory for sweep.csv (overrides the spec)")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    g = sub.add_parser("regime", parents=[common], help="classify a scenario as Abundant, Scarce or Borderline")
    g.add_argument("scenario")
    g.set_defaults(func=cmd_regime)

    t = sub.add_parser("table1", parents=[common], help="run the built-in 12-user two-carrier scenario")
    t.add_argument("--r1", type=float, required=True)
    t.add_argument("--r2", type=float, required=True)
    t.set_defaults(func=cmd_table1)
    return p


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.backend:
        print(_kernels.backend_name(), file=out)
        return 0
    if not args.command:
        parser.print_help(sys.stderr)
        return 2
    guard = forbid_randomness() if args.seedless else contextlib.nullcontext()
    try:
        with guard:
            return args.func(args, out)
    except (ScenarioError, ScenarioParseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
