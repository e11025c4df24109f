"""Scenario model, synchronous bid/price rounds, and convergence diagnostics."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Hashable, Optional

import numpy as np

from . import protocol
from .protocol import CarrierAgentState, DecayPolicy, PriceQuote, UserAgentState
from .utility import DEFAULT_TOL, UtilityFunction, steady_price_bound, inflection_rate, slope_at_inflection

ABUNDANT_FRACTION = 0.5
MAX_REGIME_CARRIERS = 16


class ScenarioError(ValueError):
    """Invalid scenario; ``violations`` lists every problem found."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid scenario:\n  " + "\n  ".join(self.violations))


@dataclass(frozen=True)
class Settings:
    delta: float = 1e-3
    max_iterations: int = 5000
    initial_bid: float = 1.0
    decay: DecayPolicy = field(default_factory=lambda: DecayPolicy.exponential(10.0, 50.0))
    tol: float = DEFAULT_TOL


@dataclass(frozen=True)
class Carrier:
    id: Hashable
    capacity: float


@dataclass(frozen=True)
class User:
    id: Hashable
    utility: UtilityFunction
    coverage: tuple


@dataclass(frozen=True)
class Scenario:
    carriers: tuple
    users: tuple
    settings: Settings = field(default_factory=Settings)

    def __post_init__(self):
        object.__setattr__(self, "carriers", tuple(self.carriers))
        object.__setattr__(self, "users", tuple(self.users))

    @property
    def carrier_ids(self) -> list:
        return [c.id for c in self.carriers]

    @property
    def ue_ids(self) -> list:
        return [u.id for u in self.users]

    @property
    def capacities(self) -> dict:
        return {c.id: c.capacity for c in self.carriers}

    @property
    def total_capacity(self) -> float:
        return math.fsum(c.capacity for c in self.carriers)

    def coverage_mask(self) -> np.ndarray:
        """Boolean (K, M) mask, True where user i is in range of carrier l."""
        col = {cid: k for k, cid in enumerate(self.carrier_ids)}
        mask = np.zeros((len(self.carriers), len(self.users)), dtype=bool)
        for i, u in enumerate(self.users):
            for cid in u.coverage:
                if cid in col:
                    mask[col[cid], i] = True
        return mask

    def covered_users(self, carrier_id) -> list:
        return [u for u in self.users if carrier_id in u.coverage]

    def with_settings(self, **changes) -> "Scenario":
        return replace(self, settings=replace(self.settings, **changes))

    def with_capacity(self, carrier_id, capacity: float) -> "Scenario":
        if carrier_id not in self.carrier_ids:
            raise ScenarioError([f"unknown carrier {carrier_id!r}"])
        carriers = tuple(Carrier(c.id, float(capacity)) if c.id == carrier_id else c for c in self.carriers)
        return replace(self, carriers=carriers)

    def violations(self) -> list[str]:
        out = []
        if not self.carriers:
            out.append("at least one carrier is required")
        if not self.users:
            out.append("at least one user is required")
        ids = [c.id for c in self.carriers]
        if len(set(ids)) != len(ids):
            out.append("carrier ids must be unique")
        for c in self.carriers:
            if not (isinstance(c.capacity, (int, float)) and math.isfinite(c.capacity) and c.capacity > 0):
                out.append(f"carrier {c.id!r}: capacity must be finite and > 0, got {c.capacity!r}")
        uids = [u.id for u in self.users]
        if len(set(uids)) != len(uids):
            out.append("user ids must be unique")
        known = set(ids)
        for u in self.users:
            if not u.coverage:
                out.append(f"user {u.id!r}: coverage must be nonempty")
            if len(set(u.coverage)) != len(u.coverage):
                out.append(f"user {u.id!r}: coverage lists a carrier twice")
            for cid in u.coverage:
                if cid not in known:
                    out.append(f"user {u.id!r}: coverage references missing carrier {cid!r}")
            if not isinstance(u.utility, UtilityFunction):
                out.append(f"user {u.id!r}: utility must be a UtilityFunction")
        s = self.settings
        if not (isinstance(s.delta, (int, float)) and s.delta > 0):
            out.append(f"settings.delta must be > 0, got {s.delta!r}")
        if not (isinstance(s.max_iterations, int) and s.max_iterations >= 1):
            out.append(f"settings.max_iterations must be an integer >= 1, got {s.max_iterations!r}")
        if not (isinstance(s.initial_bid, (int, float)) and s.initial_bid > 0):
            out.append(f"settings.initial_bid must be > 0, got {s.initial_bid!r}")
        if not (isinstance(s.tol, (int, float)) and s.tol > 0):
            out.append(f"settings.tol must be > 0, got {s.tol!r}")
        if not isinstance(s.decay, DecayPolicy):
            out.append("settings.decay must be a DecayPolicy")
        return out

    def validate(self) -> "Scenario":
        problems = self.violations()
        if problems:
            raise ScenarioError(problems)
        return self


TABLE1_UTILITIES = (
    UtilityFunction.sigmoidal(5, 10),
    UtilityFunction.sigmoidal(3, 20),
    UtilityFunction.sigmoidal(1, 30),
    UtilityFunction.logarithmic(15, 100),
    UtilityFunction.logarithmic(3, 100),
    UtilityFunction.logarithmic(0.5, 100),
)


def builtin_table1_scenario(R1: float, R2: float, settings: Optional[Settings] = None) -> Scenario:
    """Two carriers, 12 UEs: UEs 1-6 in range of carrier 1 only, UEs 7-12 of both."""
    if not (R1 > 0 and R2 > 0):
        raise ScenarioError([f"capacities must be > 0, got R1={R1!r}, R2={R2!r}"])
    users = []
    for i in range(1, 13):
        utility = TABLE1_UTILITIES[(i - 1) % 6]
        coverage = (1,) if i <= 6 else (1, 2)
        users.append(User(i, utility, coverage))
    return Scenario(
        carriers=(Carrier(1, float(R1)), Carrier(2, float(R2))),
        users=tuple(users),
        settings=settings or Settings(),
    )


@dataclass
class IterationRecord:
    n: int
    bids: np.ndarray  # (K, M), zero where not covered
    prices: np.ndarray  # (K,)
    stops: np.ndarray  # (K,) bool

    def rates(self) -> np.ndarray:
        return self.bids / self.prices[:, None]


@dataclass
class RunTrace:
    scenario: Scenario
    records: list
    converged: bool
    allocation: dict  # (ue_id, carrier_id) -> rate, covered pairs only

    @property
    def iterations_used(self) -> int:
        return len(self.records)

    @property
    def carrier_ids(self) -> list:
        return self.scenario.carrier_ids

    @property
    def ue_ids(self) -> list:
        return self.scenario.ue_ids

    def bid_history(self) -> np.ndarray:
        """(N, K, M) bid array over all recorded iterations."""
        return np.stack([r.bids for r in self.records])

    def price_history(self) -> np.ndarray:
        return np.stack([r.prices for r in self.records])

    @property
    def final_prices(self) -> dict:
        last = self.records[-1]
        return dict(zip(self.carrier_ids, last.prices.tolist()))

    def rate_matrix(self) -> np.ndarray:
        out = np.zeros((len(self.carrier_ids), len(self.ue_ids)))
        col = {u: i for i, u in enumerate(self.ue_ids)}
        row = {c: k for k, c in enumerate(self.carrier_ids)}
        for (ue, cid), r in self.allocation.items():
            out[row[cid], col[ue]] = r
        return out

    def totals(self) -> dict:
        m = self.rate_matrix().sum(axis=0)
        return dict(zip(self.ue_ids, m.tolist()))


def run(scenario: Scenario) -> RunTrace:
    """Iterate carrier-quote / UE-bid rounds until every carrier stops together."""
    scenario.validate()
    s = scenario.settings
    carrier_ids = scenario.carrier_ids
    ue_ids = scenario.ue_ids
    krow = {c: k for k, c in enumerate(carrier_ids)}
    mcol = {u: i for i, u in enumerate(ue_ids)}
    r_cap = scenario.total_capacity

    ues = [
        UserAgentState(
            u.id, u.utility, tuple(u.coverage), decay=s.decay, initial_bid=s.initial_bid, r_cap=r_cap, tol=s.tol
        )
        for u in scenario.users
    ]
    carriers = [
        CarrierAgentState.fresh(c.id, c.capacity, [u.id for u in scenario.covered_users(c.id)], s.delta)
        for c in scenario.carriers
    ]

    inbox = {c: [] for c in carrier_ids}
    for i, ue in enumerate(ues):
        bids, ues[i] = protocol.initial_bids(ue)
        for b in bids:
            inbox[b.carrier_id].append(b)

    records = []
    converged = False
    n = 1
    while True:
        bid_mat = np.zeros((len(carrier_ids), len(ue_ids)))
        for cid, bids in inbox.items():
            for b in bids:
                bid_mat[krow[cid], mcol[b.ue_id]] = b.amount
        quotes: dict = {}
        for k, car in enumerate(carriers):
            quotes[car.carrier_id], carriers[k] = protocol.carrier_update(car, inbox[car.carrier_id], n)
        records.append(
            IterationRecord(
                n,
                bid_mat,
                np.array([quotes[c].price for c in carrier_ids]),
                np.array([quotes[c].stop for c in carrier_ids], dtype=bool),
            )
        )
        if all(q.stop for q in quotes.values()):
            converged = True
            break
        if n >= s.max_iterations:
            break
        n += 1
        inbox = {c: [] for c in carrier_ids}
        for i, ue in enumerate(ues):
            in_range: list[PriceQuote] = [quotes[c] for c in ue.coverage]
            bids, ues[i] = protocol.ue_update(ue, in_range, n)
            for b in bids:
                inbox[b.carrier_id].append(b)

    allocation = {}
    for car in carriers:
        rates = protocol.final_allocation(car) if converged else protocol.allocation_at(car)
        for ue, r in rates.items():
            allocation[(ue, car.carrier_id)] = r
    return RunTrace(scenario, records, converged, allocation)


@dataclass
class RegimeReport:
    carrier_sums: dict  # carrier id -> sum of inflection rates over covered users
    capacities: dict
    class_sums: dict  # frozenset of carrier ids -> sum over users whose coverage is exactly that set
    nested_sums: dict  # frozenset -> (sum over users with coverage inside the set, capacity of the set)
    classification: str
    price_bounds: dict  # carrier id -> max over covered sigmoidal users of a d/(1-d) + a/2, or None
    slope_bounds: dict  # same with a d/(1-2d) + a/2, the exact slope at r = b
    argmax_b_bounds: dict  # a d/(1-d) + a/2 for the covered user with the largest b

    def bound(self, carrier_id) -> float:
        """Larger of the two bound expressions; ``inf`` for carriers with no sigmoidal user."""
        vals = [v for v in (self.price_bounds[carrier_id], self.slope_bounds[carrier_id]) if v is not None]
        return max(vals) if vals else math.inf


def classify_regime(scenario: Scenario) -> RegimeReport:
    """Abundant / Scarce / Borderline from inflection-rate sums versus capacities."""
    scenario.validate()
    caps = scenario.capacities
    if len(caps) > MAX_REGIME_CARRIERS:
        raise ScenarioError([f"regime analysis enumerates carrier subsets; at most {MAX_REGIME_CARRIERS} carriers"])

    carrier_sums, price_bounds, slope_bounds, argmax_b = {}, {}, {}, {}
    for cid in scenario.carrier_ids:
        covered = scenario.covered_users(cid)
        carrier_sums[cid] = math.fsum(inflection_rate(u.utility) for u in covered)
        sig = [u.utility for u in covered if u.utility.is_sigmoidal]
        if sig:
            price_bounds[cid] = max(steady_price_bound(u) for u in sig)
            slope_bounds[cid] = max(slope_at_inflection(u) for u in sig)
            argmax_b[cid] = steady_price_bound(max(sig, key=lambda u: u.b))
        else:
            price_bounds[cid] = slope_bounds[cid] = argmax_b[cid] = None

    class_sums: dict = {}
    for u in scenario.users:
        key = frozenset(u.coverage)
        class_sums[key] = class_sums.get(key, 0.0) + inflection_rate(u.utility)

    nested = {}
    ids = scenario.carrier_ids
    for size in range(1, len(ids) + 1):
        for combo in itertools.combinations(ids, size):
            subset = frozenset(combo)
            demand = math.fsum(inflection_rate(u.utility) for u in scenario.users if subset.issuperset(u.coverage))
            nested[subset] = (demand, math.fsum(caps[c] for c in combo))

    if all(carrier_sums[c] <= ABUNDANT_FRACTION * caps[c] for c in ids):
        label = "Abundant"
    elif any(demand > cap for demand, cap in nested.values()):
        label = "Scarce"
    else:
        label = "Borderline"
    return RegimeReport(carrier_sums, dict(caps), class_sums, nested, label, price_bounds, slope_bounds, argmax_b)


@dataclass
class FluctuationReport:
    amplitude: float  # max over (ue, carrier) of max - min bid over the window
    alternations: int  # max over (ue, carrier) of sign flips between successive bid deltas
    worst_pair: Optional[tuple]  # (ue_id, carrier_id) attaining the amplitude

    @property
    def settled(self) -> bool:
        return self.amplitude == 0.0


def detect_fluctuation(trace: RunTrace, window: int) -> FluctuationReport:
    """Bid oscillation over the last ``window`` iterations of a trace."""
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if window > trace.iterations_used:
        raise ValueError(f"window {window} exceeds the {trace.iterations_used} recorded iterations")
    hist = trace.bid_history()[-window:]
    mask = trace.scenario.coverage_mask()
    spread = (hist.max(axis=0) - hist.min(axis=0)) * mask
    k, i = np.unravel_index(int(np.argmax(spread)), spread.shape)
    amplitude = float(spread[k, i])

    alternations = 0
    if window >= 3:
        sign = np.sign(np.diff(hist, axis=0))
        flips = (sign[1:] * sign[:-1] < 0).sum(axis=0) * mask
        alternations = int(flips.max())
    worst = (trace.ue_ids[i], trace.carrier_ids[k]) if amplitude > 0 else None
    return FluctuationReport(amplitude, alternations, worst)
