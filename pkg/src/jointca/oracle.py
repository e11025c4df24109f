"""Centralised brute-force solver for the log-utility allocation problem.

Used only to check the distributed protocol on small instances. The search
runs over per-user *total* rates on a grid, since the objective depends on
totals only; feasibility of a vector of totals is the Hall condition of the
user/carrier transportation problem (for every carrier subset, users whose
coverage lies inside it cannot need more than its capacity).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from . import _kernels
from .engine import RunTrace, Scenario
from .utility import log_evaluate

MAX_GRID_POINTS = 10**8
FEAS_ABS = 1e-9
FEAS_REL = 1e-9


class InfeasibleAllocation(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("infeasible allocation:\n  " + "\n  ".join(self.violations))


class GridTooLarge(ValueError):
    def __init__(self, estimate, limit=MAX_GRID_POINTS):
        self.estimate = estimate
        self.limit = limit
        super().__init__(f"grid search would visit about {estimate:.3g} points (limit {limit:.0e}); use a coarser resolution")


@dataclass
class AllocationMatrix:
    carrier_ids: list
    ue_ids: list
    rates: np.ndarray  # (K, M)
    mask: np.ndarray  # (K, M) coverage

    @classmethod
    def from_trace(cls, trace: RunTrace) -> "AllocationMatrix":
        sc = trace.scenario
        return cls(sc.carrier_ids, sc.ue_ids, trace.rate_matrix(), sc.coverage_mask())

    @classmethod
    def from_dict(cls, scenario: Scenario, entries: dict) -> "AllocationMatrix":
        """Build from ``{(ue_id, carrier_id): rate}``; pairs outside coverage are kept and rejected later."""
        rates = np.zeros((len(scenario.carriers), len(scenario.users)))
        row = {c: k for k, c in enumerate(scenario.carrier_ids)}
        col = {u: i for i, u in enumerate(scenario.ue_ids)}
        for (ue, cid), r in entries.items():
            rates[row[cid], col[ue]] = r
        return cls(scenario.carrier_ids, scenario.ue_ids, rates, scenario.coverage_mask())

    def totals(self) -> np.ndarray:
        return self.rates.sum(axis=0)

    def entries(self) -> dict:
        return {
            (ue, cid): float(self.rates[k, i])
            for k, cid in enumerate(self.carrier_ids)
            for i, ue in enumerate(self.ue_ids)
            if self.mask[k, i]
        }


def feasibility_violations(scenario: Scenario, alloc: AllocationMatrix) -> list[str]:
    out = []
    if list(alloc.carrier_ids) != scenario.carrier_ids or list(alloc.ue_ids) != scenario.ue_ids:
        return ["allocation ids do not match the scenario"]
    mask = scenario.coverage_mask()
    for k, cid in enumerate(scenario.carrier_ids):
        for i, ue in enumerate(scenario.ue_ids):
            r = alloc.rates[k, i]
            if not math.isfinite(r):
                out.append(f"r[{cid},{ue}] is not finite")
            elif r < -FEAS_ABS:
                out.append(f"r[{cid},{ue}] = {r:.9g} < 0")
            elif not mask[k, i] and r != 0.0:
                out.append(f"r[{cid},{ue}] = {r:.9g} but user {ue!r} is not covered by carrier {cid!r}")
    for k, c in enumerate(scenario.carriers):
        used = math.fsum(alloc.rates[k])
        if used > c.capacity * (1 + FEAS_REL) + FEAS_ABS:
            out.append(f"carrier {c.id!r}: sum of rates {used:.9g} exceeds capacity {c.capacity:.9g}")
    return out


def primal_objective(scenario: Scenario, alloc: AllocationMatrix) -> float:
    """``sum_i log U_i(total rate of i)``; ``-inf`` if some user gets nothing."""
    problems = feasibility_violations(scenario, alloc)
    if problems:
        raise InfeasibleAllocation(problems)
    totals = np.maximum(alloc.totals(), 0.0)
    return math.fsum(log_evaluate(u.utility, t) for u, t in zip(scenario.users, totals))


def default_resolution(scenario: Scenario) -> float:
    return 0.1 if len(scenario.users) <= 4 else 0.5


def _hall_system(scenario: Scenario):
    """Rows: nonempty carrier subsets. member[s, i] = coverage(i) within subset s."""
    ids = scenario.carrier_ids
    caps = scenario.capacities
    subsets = [frozenset(c) for size in range(1, len(ids) + 1) for c in itertools.combinations(ids, size)]
    member = np.array([[int(s.issuperset(u.coverage)) for u in scenario.users] for s in subsets], dtype=np.int64)
    cap = np.array([math.fsum(caps[c] for c in s) for s in subsets])
    return subsets, member, cap


def grid_size_estimate(scenario: Scenario, resolution: float) -> int:
    """Upper bound on enumerated grid points (all users but the last are enumerated)."""
    _, member, cap = _hall_system(scenario)
    m = len(scenario.users)
    nmax = _user_caps(member, cap / resolution)
    if m == 1:
        return 1
    product = math.prod(int(v) for v in nmax[:-1])
    n_total = int(math.floor(scenario.total_capacity / resolution + _kernels._FLOOR_EPS))
    simplex = math.comb(max(n_total - 1, 0), m - 1)
    return min(product, simplex)


def _user_caps(member, cap_units):
    m = member.shape[1]
    out = np.empty(m, dtype=np.int64)
    for i in range(m):
        out[i] = int(math.floor(cap_units[member[:, i] == 1].min() + _kernels._FLOOR_EPS))
    return out


def grid_solve(scenario: Scenario, resolution: float | None = None, max_points: int = MAX_GRID_POINTS) -> AllocationMatrix:
    """Exhaustive maximiser of the log-utility sum over grid totals.

    Totals start at ``resolution`` (never zero). The best vector of totals is
    split over carriers by greedy filling, with a linear-programming fallback.
    """
    scenario.validate()
    if resolution is None:
        resolution = default_resolution(scenario)
    if not resolution > 0:
        raise ValueError(f"resolution must be > 0, got {resolution!r}")
    estimate = grid_size_estimate(scenario, resolution)
    if estimate > max_points:
        raise GridTooLarge(estimate, max_points)

    _, member, cap = _hall_system(scenario)
    cap_units = cap / resolution
    nmax = _user_caps(member, cap_units)
    if (nmax < 1).any():
        raise ValueError("resolution is coarser than some user's reachable capacity")
    m = len(scenario.users)
    need_after = np.array([[member[s, j + 1 :].sum() for j in range(m)] for s in range(member.shape[0])], dtype=float)

    k = _kernels.active()
    kinds = np.array([u.utility.kernel_args()[0] for u in scenario.users], dtype=np.int64)
    p0 = np.array([u.utility.kernel_args()[1] for u in scenario.users])
    p1 = np.array([u.utility.kernel_args()[2] for u in scenario.users])
    table = k.utility_table(kinds, p0, p1, nmax, resolution)
    best_idx, best_obj, leaves = k.grid_scan(table, member, cap_units, nmax, need_after)
    if not np.isfinite(best_obj):
        raise ValueError("no feasible grid point; every user needs at least one grid step")
    totals = best_idx.astype(float) * resolution
    return split_totals(scenario, totals)


def split_totals(scenario: Scenario, totals) -> AllocationMatrix:
    """Assign per-user totals to in-range carriers without exceeding capacities."""
    totals = np.asarray(totals, dtype=float)
    mask = scenario.coverage_mask()
    caps = np.array([c.capacity for c in scenario.carriers])
    rates = _greedy_split(totals, mask, caps)
    if rates is None:
        rates = _lp_split(totals, mask, caps)
    return AllocationMatrix(scenario.carrier_ids, scenario.ue_ids, rates, mask)


def _greedy_split(totals, mask, caps):
    # users with the fewest carriers first; each draws from the carrier with most room left
    room = caps.astype(float).copy()
    rates = np.zeros(mask.shape)
    order = sorted(range(len(totals)), key=lambda i: (mask[:, i].sum(), i))
    for i in order:
        need = totals[i]
        carriers = [k for k in np.flatnonzero(mask[:, i])]
        while need > FEAS_ABS:
            k = max(carriers, key=lambda c: (room[c], -c))
            take = min(need, room[k])
            if take <= FEAS_ABS:
                return None
            rates[k, i] += take
            room[k] -= take
            need -= take
        if need > 0:
            # rounding remainder below FEAS_ABS
            k = max(carriers, key=lambda c: (room[c], -c))
            rates[k, i] += need
            room[k] -= need
    return rates


def _lp_split(totals, mask, caps):
    pairs = [(k, i) for k in range(mask.shape[0]) for i in range(mask.shape[1]) if mask[k, i]]
    n = len(pairs)
    a_eq = np.zeros((mask.shape[1], n))
    a_ub = np.zeros((mask.shape[0], n))
    for j, (k, i) in enumerate(pairs):
        a_eq[i, j] = 1.0
        a_ub[k, j] = 1.0
    res = linprog(np.zeros(n), A_ub=a_ub, b_ub=caps, A_eq=a_eq, b_eq=totals, bounds=[(0, None)] * n, method="highs")
    if not res.success:
        raise InfeasibleAllocation([f"totals cannot be split over carriers: {res.message}"])
    rates = np.zeros(mask.shape)
    for j, (k, i) in enumerate(pairs):
        rates[k, i] = max(res.x[j], 0.0)
    return rates


@dataclass
class DeviationReport:
    max_abs: float
    mean_abs: float
    per_user: dict  # ue_id -> distributed total - oracle total
    distributed_objective: float
    oracle_objective: float

    @property
    def objective_gap(self) -> float:
        """``primal(distributed) - primal(oracle)``; at most grid slack when the oracle is exact."""
        return self.distributed_objective - self.oracle_objective


def compare(trace: RunTrace, oracle_alloc: AllocationMatrix) -> DeviationReport:
    sc = trace.scenario
    if list(oracle_alloc.ue_ids) != sc.ue_ids or list(oracle_alloc.carrier_ids) != sc.carrier_ids:
        raise ValueError("oracle allocation does not match the trace's scenario")
    if oracle_alloc.rates.shape != (len(sc.carriers), len(sc.users)):
        raise ValueError(f"allocation shape {oracle_alloc.rates.shape} does not match scenario")
    dist = AllocationMatrix.from_trace(trace)
    diff = dist.totals() - oracle_alloc.totals()
    return DeviationReport(
        max_abs=float(np.abs(diff).max()),
        mean_abs=float(np.abs(diff).mean()),
        per_user=dict(zip(sc.ue_ids, diff.tolist())),
        distributed_objective=primal_objective(sc, dist),
        oracle_objective=primal_objective(sc, oracle_alloc),
    )
