"""Application utility functions and the slope machinery of their logarithms.

Two families are supported: the normalised sigmoidal utility used for
real-time traffic and the normalised logarithmic utility used for
delay-tolerant traffic. The UE subproblem only needs ``S(r) = d/dr log U(r)``
and its inverse, so those are the main entry points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from . import _kernels

R_FLOOR = 1e-6
DEFAULT_TOL = 1e-9


class DomainError(ValueError):
    """A rate or price outside the domain of a utility operation."""


class UtilityKind(str, Enum):
    SIGMOIDAL = "sigmoidal"
    LOGARITHMIC = "log"


@dataclass(frozen=True)
class UtilityFunction:
    """Sigmoidal ``(a, b)`` or logarithmic ``(k, r_max)`` utility.

    Use the :meth:`sigmoidal` / :meth:`logarithmic` constructors rather than
    filling the fields by hand.
    """

    kind: UtilityKind
    a: float = math.nan
    b: float = math.nan
    k: float = math.nan
    r_max: float = math.nan

    def __post_init__(self):
        if self.kind is UtilityKind.SIGMOIDAL:
            _positive("a", self.a)
            _positive("b", self.b)
        elif self.kind is UtilityKind.LOGARITHMIC:
            _positive("k", self.k)
            _positive("r_max", self.r_max)
        else:  # pragma: no cover
            raise ValueError(f"unknown utility kind {self.kind!r}")

    @classmethod
    def sigmoidal(cls, a: float, b: float) -> "UtilityFunction":
        return cls(UtilityKind.SIGMOIDAL, a=float(a), b=float(b))

    @classmethod
    def logarithmic(cls, k: float, r_max: float) -> "UtilityFunction":
        return cls(UtilityKind.LOGARITHMIC, k=float(k), r_max=float(r_max))

    @property
    def is_sigmoidal(self) -> bool:
        return self.kind is UtilityKind.SIGMOIDAL

    @property
    def c(self) -> float:
        """Normalising gain ``(1 + e^{ab}) / e^{ab}``; sigmoidal only."""
        self._require_sigmoidal()
        return 1.0 + math.exp(-self.a * self.b)

    @property
    def d(self) -> float:
        """Offset ``1 / (1 + e^{ab})``; sigmoidal only."""
        self._require_sigmoidal()
        return _kernels.PY.sigmoid(-self.a * self.b)

    @property
    def log_d(self) -> float:
        self._require_sigmoidal()
        return -_kernels.PY.softplus(self.a * self.b)

    def kernel_args(self) -> tuple[int, float, float]:
        if self.is_sigmoidal:
            return _kernels.SIGMOIDAL, self.a, self.b
        return _kernels.LOGARITHMIC, self.k, self.r_max

    def to_dict(self) -> dict:
        if self.is_sigmoidal:
            return {"type": "sigmoidal", "a": self.a, "b": self.b}
        return {"type": "log", "k": self.k, "r_max": self.r_max}

    def __str__(self) -> str:
        if self.is_sigmoidal:
            return f"Sig(a={self.a:g}, b={self.b:g})"
        return f"Log(k={self.k:g}, r_max={self.r_max:g})"

    def _require_sigmoidal(self):
        if not self.is_sigmoidal:
            raise AttributeError("c and d are defined for sigmoidal utilities only")


def _positive(name, value):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be a finite positive number, got {value!r}")


def _check_rate(r, strict):
    if not math.isfinite(r):
        raise DomainError(f"rate must be finite, got {r!r}")
    if strict and r <= 0:
        raise DomainError(f"rate must be > 0, got {r!r}")
    if r < 0:
        raise DomainError(f"rate must be >= 0, got {r!r}")


def evaluate(u: UtilityFunction, r: float) -> float:
    """Utility ``U(r)`` in ``[0, 1]``; ``U(0) == 0`` exactly."""
    r = float(r)
    _check_rate(r, strict=False)
    return _kernels.active().utility(*u.kernel_args(), r)


def log_evaluate(u: UtilityFunction, r: float) -> float:
    """``log U(r)``, computed without forming ``U`` (stable far below the inflection)."""
    r = float(r)
    _check_rate(r, strict=False)
    return _kernels.active().log_utility(*u.kernel_args(), r)


def log_slope(u: UtilityFunction, r: float) -> float:
    r = float(r)
    _check_rate(r, strict=True)
    return _kernels.active().slope(*u.kernel_args(), r)


def log_slope_curvature(u: UtilityFunction, r: float) -> tuple[float, float]:
    """Return ``(dS/dr, d2S/dr2)`` of the log-utility slope ``S``."""
    r = float(r)
    _check_rate(r, strict=True)
    d1, d2 = _kernels.active().slope_derivs(*u.kernel_args(), r)
    return float(d1), float(d2)


def inverse_log_slope(
    u: UtilityFunction,
    p: float,
    r_cap: float,
    tol: float = DEFAULT_TOL,
    r_floor: float = R_FLOOR,
) -> float:
    """Solve ``S(r) = p`` on ``[r_floor, r_cap]`` by bisection.

    Prices at or above ``S(r_floor)`` give ``r_floor``; prices at or below
    ``S(r_cap)`` give ``r_cap``.
    """
    p, r_cap, tol = float(p), float(r_cap), float(tol)
    if not (math.isfinite(p) and p > 0):
        raise DomainError(f"price must be finite and > 0, got {p!r}")
    if not (math.isfinite(r_cap) and r_cap > 0):
        raise DomainError(f"r_cap must be finite and > 0, got {r_cap!r}")
    if not tol > 0:
        raise DomainError(f"tol must be > 0, got {tol!r}")
    if r_cap <= r_floor:
        return r_cap
    return float(_kernels.active().inverse_slope(*u.kernel_args(), p, r_floor, r_cap, tol))


def inflection_rate(u: UtilityFunction) -> float:
    """Demand floor: ``b`` for sigmoidal utilities, 0 for concave ones."""
    return u.b if u.is_sigmoidal else 0.0


def slope_at_inflection(u: UtilityFunction) -> float:
    """``S(b) = a d / (1 - 2d) + a/2`` for a sigmoidal utility."""
    ab = u.a * u.b
    # d / (1 - 2d) == 1 / (e^{ab} - 1)
    head = 0.0 if ab > 700 else u.a / math.expm1(ab)
    return head + 0.5 * u.a


def steady_price_bound(u: UtilityFunction) -> float:
    """``a d / (1 - d) + a/2``; differs from :func:`slope_at_inflection` by O(e^{-ab})."""
    head = 0.0 if u.a * u.b > 700 else u.a * math.exp(-u.a * u.b)
    return head + 0.5 * u.a
