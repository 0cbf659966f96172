"""Reinforcement weight sequences.

A weight sequence assigns to every colour count ``k >= 0`` a positive weight
``w_k``; the chance of drawing a colour holding ``k`` balls is proportional to
``w_k``.  Indexing is 0-based throughout: ``w_0`` is the weight of an empty
colour.

Five kinds are supported:

========================  ==========================================
kind                      ``w_k``
========================  ==========================================
``constant(c)``           ``c``
``polynomial(rho)``       ``(k + 1) ** rho``
``exponential(rho)``      ``rho ** k``
``counterexample(rho,d)`` ``1`` if ``k % d == 0`` else ``rho ** k``
``table(values, tail)``   ``values[k]``, then the tail rule
========================  ==========================================

Table tail rules: ``repeat-last`` keeps the last listed value, while
``extend-polynomial`` / ``extend-exponential`` switch to ``(k+1)**rho`` /
``rho**k`` for ``k >= len(values)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy.special import zeta

__all__ = [
    "KINDS",
    "TAIL_RULES",
    "WeightSequence",
    "TailSumVerdict",
    "UnsupportedArithmetic",
    "weight_at",
    "log_weight_at",
    "tail_inverse_sum",
    "tail_inverse_square_sum",
    "is_non_decreasing",
    "satisfies_srh",
]

KINDS = ("constant", "polynomial", "exponential", "counterexample", "table")
TAIL_RULES = ("repeat-last", "extend-polynomial", "extend-exponential")

# ln of the largest float and of the smallest normal float
_LOG_FLOAT_MAX = math.log(np.finfo(float).max)
_LOG_FLOAT_TINY = math.log(np.finfo(float).tiny)


class UnsupportedArithmetic(ValueError):
    """Exact rational evaluation was requested for an irrational weight."""


@dataclass(frozen=True)
class WeightSequence:
    kind: str
    c: float = 1.0
    rho: float = 1.0
    d: int = 1
    values: tuple[float, ...] = ()
    tail: str = "repeat-last"

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown weight kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "constant" and not self.c > 0:
            raise ValueError("constant weights need c > 0")
        if self.kind == "polynomial" and not self.rho >= 0:
            raise ValueError("polynomial weights need rho >= 0")
        if self.kind == "exponential" and not self.rho > 0:
            raise ValueError("exponential weights need rho > 0")
        if self.kind == "counterexample":
            if not self.rho > 1:
                raise ValueError("counterexample weights need rho > 1")
            if self.d < 2:
                raise ValueError("counterexample weights need d >= 2")
        if self.kind == "table":
            if not self.values:
                raise ValueError("table weights need at least one value")
            if any(not v > 0 for v in self.values):
                raise ValueError("table weights must be positive")
            if self.tail not in TAIL_RULES:
                raise ValueError(f"unknown tail rule {self.tail!r}; expected one of {TAIL_RULES}")
            if self.tail == "extend-polynomial" and not self.rho >= 0:
                raise ValueError("extend-polynomial tail needs rho >= 0")
            if self.tail == "extend-exponential" and not self.rho > 0:
                raise ValueError("extend-exponential tail needs rho > 0")

    # constructors -----------------------------------------------------------

    @classmethod
    def constant(cls, c: float = 1.0) -> "WeightSequence":
        return cls("constant", c=c)

    @classmethod
    def polynomial(cls, rho: float) -> "WeightSequence":
        return cls("polynomial", rho=rho)

    @classmethod
    def exponential(cls, rho: float) -> "WeightSequence":
        return cls("exponential", rho=rho)

    @classmethod
    def counterexample(cls, rho: float, d: int) -> "WeightSequence":
        return cls("counterexample", rho=rho, d=int(d))

    @classmethod
    def table(cls, values: Sequence[float], tail: str = "repeat-last", rho: float = 1.0) -> "WeightSequence":
        return cls("table", values=tuple(values), tail=tail, rho=rho)

    @classmethod
    def from_dict(cls, spec: dict[str, Any], base_dir: Path | None = None) -> "WeightSequence":
        """Build a sequence from a config mapping such as ``{"kind": "polynomial", "rho": 2}``.

        For the table kind, ``values`` may be an inline list or a path to a
        text file holding one value per line (blank lines and ``#`` comments
        are skipped).
        """
        spec = dict(spec)
        kind = spec.pop("kind", None)
        if kind is None:
            raise ValueError("weight description needs a 'kind'")
        if kind == "table":
            values = spec.pop("values", None)
            if values is None:
                raise ValueError("table weights need 'values'")
            if isinstance(values, (str, Path)):
                path = Path(values)
                if base_dir is not None and not path.is_absolute():
                    path = base_dir / path
                values = [
                    float(line.split("#")[0])
                    for line in path.read_text().splitlines()
                    if line.split("#")[0].strip()
                ]
            return cls.table(
                [float(v) for v in values],
                tail=spec.pop("tail", "repeat-last"),
                rho=float(spec.pop("rho", 1.0)),
            )
        allowed = {"constant": {"c"}, "polynomial": {"rho"}, "exponential": {"rho"}, "counterexample": {"rho", "d"}}
        if kind not in allowed:
            raise ValueError(f"unknown weight kind {kind!r}; expected one of {KINDS}")
        extra = set(spec) - allowed[kind]
        if extra:
            raise ValueError(f"unexpected parameters for {kind} weights: {sorted(extra)}")
        kwargs: dict[str, Any] = {k: float(v) for k, v in spec.items() if k != "d"}
        if "d" in spec:
            kwargs["d"] = int(spec["d"])
        return cls(kind, **kwargs)

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "constant":
            return {"kind": "constant", "c": self.c}
        if self.kind in ("polynomial", "exponential"):
            return {"kind": self.kind, "rho": self.rho}
        if self.kind == "counterexample":
            return {"kind": "counterexample", "rho": self.rho, "d": self.d}
        out: dict[str, Any] = {"kind": "table", "values": list(self.values), "tail": self.tail}
        if self.tail != "repeat-last":
            out["rho"] = self.rho
        return out

    def __str__(self) -> str:
        params = ", ".join(f"{k}={v}" for k, v in self.to_dict().items() if k != "kind")
        return f"{self.kind}({params})"

    # evaluation -------------------------------------------------------------

    def weight_at(self, k: int) -> float:
        return weight_at(self, k)

    def log_weight_at(self, k: int) -> float:
        return log_weight_at(self, k)

    def log_weights(self, ks: np.ndarray) -> np.ndarray:
        """Vectorised ``log_weight_at`` over an integer array."""
        ks = np.asarray(ks, dtype=np.int64)
        if np.any(ks < 0):
            raise ValueError("weight index must be >= 0")
        kf = ks.astype(float)
        if self.kind == "constant":
            return np.full(ks.shape, math.log(self.c))
        if self.kind == "polynomial":
            return self.rho * np.log1p(kf)
        if self.kind == "exponential":
            return kf * math.log(self.rho)
        if self.kind == "counterexample":
            return np.where(ks % self.d == 0, 0.0, kf * math.log(self.rho))
        return _table_log_weights(self, ks)

    def inverse_weights(self, ks: np.ndarray) -> np.ndarray:
        """``1 / w_k`` for an integer array, underflowing to 0 instead of overflowing."""
        return np.exp(-self.log_weights(ks))

    def exact_weight_at(self, k: int) -> Fraction:
        """``w_k`` as an exact rational.

        Float parameters are read as the exact binary rationals they hold.
        Raises :class:`UnsupportedArithmetic` when ``w_k`` is irrational.
        """
        if k < 0:
            raise ValueError("weight index must be >= 0")
        if self.kind == "constant":
            return Fraction(self.c)
        if self.kind == "polynomial":
            return _exact_power(k + 1, self.rho)
        if self.kind == "exponential":
            return Fraction(self.rho) ** k
        if self.kind == "counterexample":
            return Fraction(1) if k % self.d == 0 else Fraction(self.rho) ** k
        n = len(self.values)
        if k < n:
            return Fraction(self.values[k])
        if self.tail == "repeat-last":
            return Fraction(self.values[-1])
        if self.tail == "extend-polynomial":
            return _exact_power(k + 1, self.rho)
        return Fraction(self.rho) ** k

    @property
    def supports_exact(self) -> bool:
        if self.kind == "polynomial" or (self.kind == "table" and self.tail == "extend-polynomial"):
            return float(self.rho).is_integer()
        return True


def _exact_power(base: int, rho: float) -> Fraction:
    if not float(rho).is_integer():
        raise UnsupportedArithmetic(f"(k+1)**{rho} is not rational; use float mode")
    return Fraction(base) ** int(rho)


def _table_log_weights(seq: WeightSequence, ks: np.ndarray) -> np.ndarray:
    vals = np.log(np.asarray(seq.values, dtype=float))
    n = len(vals)
    inside = ks < n
    out = np.empty(ks.shape, dtype=float)
    out[inside] = vals[ks[inside]]
    beyond = ks[~inside].astype(float)
    if seq.tail == "repeat-last":
        out[~inside] = vals[-1]
    elif seq.tail == "extend-polynomial":
        out[~inside] = seq.rho * np.log1p(beyond)
    else:
        out[~inside] = beyond * math.log(seq.rho)
    return out


def log_weight_at(seq: WeightSequence, k: int) -> float:
    """``ln w_k``; exact by formula for exponential kinds so it never overflows."""
    if k < 0:
        raise ValueError("weight index must be >= 0")
    kind = seq.kind
    if kind == "constant":
        return math.log(seq.c)
    if kind == "polynomial":
        return seq.rho * math.log1p(k)
    if kind == "exponential":
        return k * math.log(seq.rho)
    if kind == "counterexample":
        return 0.0 if k % seq.d == 0 else k * math.log(seq.rho)
    n = len(seq.values)
    if k < n:
        return math.log(seq.values[k])
    if seq.tail == "repeat-last":
        return math.log(seq.values[-1])
    if seq.tail == "extend-polynomial":
        return seq.rho * math.log1p(k)
    return k * math.log(seq.rho)


def weight_at(seq: WeightSequence, k: int) -> float:
    """``w_k`` as a float.

    Raises ``OverflowError`` when ``w_k`` leaves the normal float range (in
    either direction); use :func:`log_weight_at` for large exponential indices.
    """
    if k < 0:
        raise ValueError("weight index must be >= 0")
    kind = seq.kind
    if kind == "constant":
        return float(seq.c)
    if kind == "table" and k < len(seq.values):
        return float(seq.values[k])
    if kind == "counterexample" and k % seq.d == 0:
        return 1.0
    if kind == "table" and seq.tail == "repeat-last":
        return float(seq.values[-1])
    lw = log_weight_at(seq, k)
    if lw > _LOG_FLOAT_MAX:
        raise OverflowError(f"w_{k} of {seq} exceeds the float range (ln w = {lw:.6g})")
    if lw < _LOG_FLOAT_TINY:
        raise OverflowError(f"w_{k} of {seq} underflows the float range (ln w = {lw:.6g})")
    if kind in ("polynomial",) or (kind == "table" and seq.tail == "extend-polynomial"):
        return float(k + 1) ** seq.rho
    return float(seq.rho) ** k


# tail sums -------------------------------------------------------------------


@dataclass(frozen=True)
class TailSumVerdict:
    status: str  # "converged" | "diverged" | "inconclusive"
    value: float | None = None
    terms_used: int = 1
    detail: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        if self.status not in ("converged", "diverged", "inconclusive"):
            raise ValueError(f"bad status {self.status!r}")
        if (self.value is not None) != (self.status == "converged"):
            raise ValueError("value is present iff converged")
        if self.value is not None and self.value < 0:
            raise ValueError("tail sum must be non-negative")
        if self.terms_used < 1:
            raise ValueError("terms_used must be >= 1")

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def _power_tail(rho: float, start: int, power: int) -> float | None:
    """``sum_{k >= start} (k+1) ** (-power*rho)`` or ``None`` when divergent."""
    s = power * rho
    if s <= 1:
        return None
    return float(zeta(s, start + 1))


def _geometric_tail(rho: float, start: int, power: int) -> float | None:
    """``sum_{k >= start} rho ** (-power*k)`` or ``None`` when divergent."""
    if rho <= 1:
        return None
    log_q = -power * math.log(rho)
    return math.exp(start * log_q) / -math.expm1(log_q)


def _tail_sum(seq: WeightSequence, start: int, tolerance: float, max_terms: int, power: int) -> TailSumVerdict:
    if start < 0:
        raise ValueError("'from' index must be >= 0")
    if not tolerance > 0:
        raise ValueError("tolerance must be > 0")
    kind = seq.kind
    if kind == "constant":
        return TailSumVerdict("diverged", detail="constant weights: every term equals 1/c")
    if kind == "counterexample":
        return TailSumVerdict("diverged", detail="w_k = 1 on every multiple of d")
    if kind == "polynomial":
        v = _power_tail(seq.rho, start, power)
        if v is None:
            return TailSumVerdict("diverged", detail=f"p-series with exponent {power * seq.rho} <= 1")
        return TailSumVerdict("converged", v, 1, "Hurwitz zeta")
    if kind == "exponential":
        v = _geometric_tail(seq.rho, start, power)
        if v is None:
            return TailSumVerdict("diverged", detail="geometric ratio >= 1")
        return TailSumVerdict("converged", v, 1, "geometric series")

    # table: explicit head, analytic tail
    n = len(seq.values)
    if seq.tail == "repeat-last":
        return TailSumVerdict("diverged", detail="repeat-last tail is constant")
    tail = (
        _power_tail(seq.rho, max(start, n), power)
        if seq.tail == "extend-polynomial"
        else _geometric_tail(seq.rho, max(start, n), power)
    )
    if tail is None:
        return TailSumVerdict("diverged", detail=f"{seq.tail} tail diverges")
    head = [v ** -power for v in seq.values[start:]]
    if len(head) > max_terms:
        return TailSumVerdict(
            "inconclusive",
            terms_used=max(max_terms, 1),
            detail=f"{len(head)} explicit table terms exceed max_terms={max_terms}",
        )
    return TailSumVerdict("converged", math.fsum(head) + tail, len(head) + 1, "table head + analytic tail")


def tail_inverse_sum(
    seq: WeightSequence, start: int = 0, tolerance: float = 1e-12, max_terms: int = 10**6
) -> TailSumVerdict:
    """``sum_{i >= start} 1 / w_i`` with an analytic convergence verdict.

    Polynomial tails are Hurwitz zeta values and exponential tails are
    geometric, so both are returned in closed form (well inside
    ``tolerance``).  ``start=0`` gives the strong-reinforcement constant
    ``s_inf``.
    """
    return _tail_sum(seq, start, tolerance, max_terms, power=1)


def tail_inverse_square_sum(
    seq: WeightSequence, start: int = 0, tolerance: float = 1e-12, max_terms: int = 10**6
) -> TailSumVerdict:
    """``sum_{i >= start} 1 / w_i**2``; same contract as :func:`tail_inverse_sum`."""
    return _tail_sum(seq, start, tolerance, max_terms, power=2)


def satisfies_srh(seq: WeightSequence) -> TailSumVerdict:
    return tail_inverse_sum(seq, 0)


def is_non_decreasing(seq: WeightSequence, horizon: int = 1000) -> bool:
    """Whether ``w`` is non-decreasing over all indices.

    Analytic kinds are decided exactly; tables are checked term by term and
    at the junction with their tail rule.  ``horizon`` bounds the explicit
    check for tables longer than it.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    kind = seq.kind
    if kind == "constant":
        return True
    if kind == "polynomial":
        return seq.rho >= 0
    if kind == "exponential":
        return seq.rho >= 1
    if kind == "counterexample":
        # w_{d-1} = rho**(d-1) > 1 = w_d
        return False
    vals = seq.values[: horizon + 1]
    if any(b < a for a, b in zip(vals, vals[1:])):
        return False
    if len(seq.values) > horizon + 1:
        return True
    n = len(seq.values)
    if seq.tail == "repeat-last":
        return True
    if seq.tail == "extend-polynomial":
        return seq.rho >= 0 and math.log(seq.values[-1]) <= seq.rho * math.log1p(n)
    return seq.rho >= 1 and math.log(seq.values[-1]) <= n * math.log(seq.rho)
