"""Message-passing protocol between UE agents and carrier (eNodeB) agents.

UEs turn shadow prices into bids with minimum-price carrier ordering and an
optional fluctuation-decay clamp; carriers turn bids into shadow prices and
decide when to stop. Every operation is a pure state transition: the input
state is never mutated and a fresh state is returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Hashable, Iterable, Mapping

from .utility import DEFAULT_TOL, UtilityFunction, inverse_log_slope

P_FLOOR = 1e-9

Id = Hashable


class ProtocolError(ValueError):
    """Malformed or inconsistent messages between agents."""


class StateError(RuntimeError):
    """Operation not allowed in the agent's current state."""


@dataclass(frozen=True)
class Bid:
    ue_id: Id
    carrier_id: Id
    amount: float
    iteration: int


@dataclass(frozen=True)
class PriceQuote:
    carrier_id: Id
    price: float
    iteration: int
    stop: bool = False


@dataclass(frozen=True)
class DecayPolicy:
    """Fluctuation decay ``Off``, ``Exponential(h1, h2)`` or ``Rational(h3)``."""

    kind: str = "off"
    h1: float = math.nan
    h2: float = math.nan
    h3: float = math.nan

    def __post_init__(self):
        if self.kind == "exponential":
            _require_positive(h1=self.h1, h2=self.h2)
        elif self.kind == "rational":
            _require_positive(h3=self.h3)
        elif self.kind != "off":
            raise ValueError(f"unknown decay kind {self.kind!r}")

    @classmethod
    def off(cls) -> "DecayPolicy":
        return cls("off")

    @classmethod
    def exponential(cls, h1: float, h2: float) -> "DecayPolicy":
        return cls("exponential", h1=float(h1), h2=float(h2))

    @classmethod
    def rational(cls, h3: float) -> "DecayPolicy":
        return cls("rational", h3=float(h3))

    @classmethod
    def parse(cls, text: str) -> "DecayPolicy":
        """Parse ``off``, ``exp:h1,h2`` or ``rat:h3``."""
        text = text.strip().lower()
        if text == "off":
            return cls.off()
        name, _, args = text.partition(":")
        try:
            values = [float(v) for v in args.split(",")] if args else []
        except ValueError:
            raise ValueError(f"bad decay parameters in {text!r}") from None
        if name in ("exp", "exponential") and len(values) == 2:
            return cls.exponential(*values)
        if name in ("rat", "rational") and len(values) == 1:
            return cls.rational(*values)
        raise ValueError(f"decay must be off, exp:h1,h2 or rat:h3, got {text!r}")

    @property
    def active(self) -> bool:
        return self.kind != "off"

    def __str__(self) -> str:
        if self.kind == "exponential":
            return f"exp:{self.h1:g},{self.h2:g}"
        if self.kind == "rational":
            return f"rat:{self.h3:g}"
        return "off"


def _require_positive(**params):
    for name, value in params.items():
        if not (math.isfinite(value) and value > 0):
            raise ValueError(f"decay parameter {name} must be finite and > 0, got {value!r}")


def decay_limit(policy: DecayPolicy, n: int) -> float:
    """Largest allowed bid change at iteration ``n``; ``inf`` when decay is off."""
    if n < 1:
        raise ValueError(f"iteration must be >= 1, got {n}")
    if policy.kind == "exponential":
        return policy.h1 * math.exp(-n / policy.h2)
    if policy.kind == "rational":
        return policy.h3 / n
    return math.inf


@dataclass(frozen=True)
class UserAgentState:
    ue_id: Id
    utility: UtilityFunction
    coverage: tuple
    prev_bids: Mapping[Id, float] = field(default_factory=dict)
    decay: DecayPolicy = field(default_factory=DecayPolicy.off)
    initial_bid: float = 1.0
    r_cap: float = math.inf
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if not self.coverage:
            raise ValueError(f"UE {self.ue_id!r} has an empty coverage set")
        if len(set(self.coverage)) != len(self.coverage):
            raise ValueError(f"UE {self.ue_id!r} lists a carrier twice in its coverage")
        extra = set(self.prev_bids) - set(self.coverage)
        if extra:
            raise ValueError(f"UE {self.ue_id!r} holds bids for uncovered carriers {sorted(map(str, extra))}")
        if not self.initial_bid > 0:
            raise ValueError("initial_bid must be > 0")


@dataclass(frozen=True)
class CarrierAgentState:
    carrier_id: Id
    capacity: float
    prev_bids: Mapping[Id, float]
    delta: float = 1e-3
    price_history: tuple = ()
    stopped: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.capacity) and self.capacity > 0):
            raise ValueError(f"carrier {self.carrier_id!r} capacity must be > 0")
        if not self.delta > 0:
            raise ValueError("delta must be > 0")

    @classmethod
    def fresh(cls, carrier_id, capacity, ue_ids: Iterable[Id], delta=1e-3) -> "CarrierAgentState":
        # w_{li}(0) = 0 for every covered UE
        return cls(carrier_id, float(capacity), {ue: 0.0 for ue in ue_ids}, float(delta))

    @property
    def last_price(self) -> float:
        if not self.price_history:
            raise StateError(f"carrier {self.carrier_id!r} has not priced yet")
        return self.price_history[-1]


def initial_bids(state: UserAgentState) -> tuple[list[Bid], UserAgentState]:
    """Opening bids ``w(1)``: ``initial_bid`` to every in-range carrier."""
    bids = [Bid(state.ue_id, c, state.initial_bid, 1) for c in state.coverage]
    return bids, replace(state, prev_bids={c: state.initial_bid for c in state.coverage})


def ue_update(
    state: UserAgentState, quotes: Iterable[PriceQuote], n: int
) -> tuple[list[Bid], UserAgentState]:
    """Compute the bids for iteration ``n`` from the latest in-range quotes.

    Carriers are visited in ascending price (ties by carrier id). The m-th
    carrier receives the demand at its price minus what the cheaper carriers
    already cover, priced at its own price, then clamped by the decay policy.
    """
    by_carrier = {}
    for q in quotes:
        if q.carrier_id in by_carrier:
            raise ProtocolError(f"duplicate quote from carrier {q.carrier_id!r}")
        by_carrier[q.carrier_id] = q
    missing = [c for c in state.coverage if c not in by_carrier]
    if missing:
        raise ProtocolError(f"UE {state.ue_id!r} has no quote from in-range carriers {missing}")
    extra = [c for c in by_carrier if c not in state.coverage]
    if extra:
        raise ProtocolError(f"UE {state.ue_id!r} got quotes from out-of-range carriers {extra}")
    for q in by_carrier.values():
        if not (math.isfinite(q.price) and q.price > 0):
            raise ProtocolError(f"carrier {q.carrier_id!r} quoted invalid price {q.price!r}")

    order = sorted(state.coverage, key=lambda c: (by_carrier[c].price, c))
    limit = decay_limit(state.decay, n)
    covered = 0.0
    bids = []
    new_prev = {}
    for c in order:
        price = by_carrier[c].price
        demand = inverse_log_slope(state.utility, price, state.r_cap, state.tol)
        increment = max(0.0, demand - covered)
        covered += increment
        w = price * increment
        prev = state.prev_bids.get(c, 0.0)
        if abs(w - prev) > limit:
            w = prev + math.copysign(limit, w - prev)
        bids.append(Bid(state.ue_id, c, w, n))
        new_prev[c] = w
    # report in coverage order, not price order
    bids.sort(key=lambda b: state.coverage.index(b.carrier_id))
    return bids, replace(state, prev_bids=new_prev)


def carrier_update(
    state: CarrierAgentState, bids: Iterable[Bid], n: int
) -> tuple[PriceQuote, CarrierAgentState]:
    """Price the received bids and test for convergence.

    The quote carries ``sum(bids) / capacity`` (floored at ``P_FLOOR``) in both
    branches; ``stop`` is set when every covered UE moved its bid by less than
    ``delta`` since the previous round.
    """
    received = {}
    for b in bids:
        if b.carrier_id != state.carrier_id:
            raise ProtocolError(f"bid for carrier {b.carrier_id!r} delivered to {state.carrier_id!r}")
        if b.ue_id in received:
            raise ProtocolError(f"duplicate bid from UE {b.ue_id!r}")
        if not (math.isfinite(b.amount) and b.amount >= 0):
            raise ProtocolError(f"UE {b.ue_id!r} sent invalid bid {b.amount!r}")
        received[b.ue_id] = b.amount
    if received.keys() != state.prev_bids.keys():
        missing = sorted(map(str, state.prev_bids.keys() - received.keys()))
        extra = sorted(map(str, received.keys() - state.prev_bids.keys()))
        raise ProtocolError(
            f"carrier {state.carrier_id!r} expected one bid per covered UE (missing {missing}, unexpected {extra})"
        )

    stop = all(abs(received[ue] - state.prev_bids[ue]) < state.delta for ue in received)
    total = math.fsum(received[ue] for ue in state.prev_bids)
    price = total / state.capacity if total > 0 else P_FLOOR
    if price < P_FLOOR:
        price = P_FLOOR
    new_state = replace(
        state,
        prev_bids=received,
        price_history=state.price_history + (price,),
        stopped=stop,
    )
    return PriceQuote(state.carrier_id, price, n, stop), new_state


def final_allocation(carrier: CarrierAgentState) -> dict:
    """Rates ``w / p`` from the stopping round; only valid once the carrier stopped."""
    if not carrier.stopped:
        raise StateError(f"carrier {carrier.carrier_id!r} has not stopped")
    return allocation_at(carrier)


def allocation_at(carrier: CarrierAgentState) -> dict:
    """Rates implied by the carrier's latest bids and price, stopped or not."""
    p = carrier.last_price
    return {ue: w / p for ue, w in carrier.prev_bids.items()}
