"""Exact finite-horizon computations.

``coarse_distribution`` runs the forward recursion of the coarse chain over
the antidiagonal ``r + g = d*n``; ``enumerate_fine_paths`` sums the
probabilities of every fine colour sequence.  The two are independent routes
to the same law, so agreement certifies that sampling the fine chain at block
ends reproduces the coarse chain.

Both support ``arithmetic="rational"`` (``fractions.Fraction``, requires
rational weights) and ``arithmetic="float"``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import IO, Callable, Iterable, Union

from .urn import GREEN, RED, UrnState, draw_probability
from .weights import UnsupportedArithmetic, WeightSequence

Number = Union[Fraction, float]

MAX_ENUMERATION_TICKS = 24


@dataclass
class ExactDistribution:
    d: int
    horizon: int
    entries: dict[UrnState, Number]
    arithmetic: str = "rational"

    def __post_init__(self) -> None:
        for s, p in self.entries.items():
            if s.r + s.g != self.d * self.horizon:
                raise ValueError(f"state {s} is off the antidiagonal r+g={self.d * self.horizon}")
            if p < 0:
                raise ValueError(f"negative probability at {s}")

    def total(self) -> Number:
        if self.arithmetic == "rational":
            return sum(self.entries.values(), Fraction(0))
        return math.fsum(self.entries.values())

    def __getitem__(self, state: tuple[int, int]) -> Number:
        return self.entries.get(UrnState(*state), Fraction(0) if self.arithmetic == "rational" else 0.0)

    def items(self) -> list[tuple[UrnState, Number]]:
        return sorted(self.entries.items(), key=lambda kv: -kv[0].r)

    def max_abs_difference(self, other: "ExactDistribution") -> float:
        keys = set(self.entries) | set(other.entries)
        return max((abs(float(self[k]) - float(other[k])) for k in keys), default=0.0)

    def to_csv(self, out: IO[str] | str | Path, header_lines: Iterable[str] = ()) -> None:
        if isinstance(out, (str, Path)):
            with open(out, "w", newline="") as fh:
                self.to_csv(fh, header_lines)
            return
        for line in header_lines:
            out.write(f"# {line}\n")
        w = csv.writer(out, lineterminator="\n")
        w.writerow(("r", "g", "probability", "fraction"))
        for s, p in self.items():
            frac = str(p) if isinstance(p, Fraction) else ""
            w.writerow((s.r, s.g, f"{float(p):.17g}", frac))


# arithmetic helpers ------------------------------------------------------------


def _pi_pair(seq: WeightSequence, r: int, g: int, arithmetic: str) -> tuple[Number, Number]:
    """(P[red], P[green]) at state (r, g)."""
    if arithmetic == "rational":
        wr, wg = seq.exact_weight_at(r), seq.exact_weight_at(g)
        return wr / (wr + wg), wg / (wr + wg)
    if arithmetic == "float":
        return draw_probability(seq, (r, g)), draw_probability(seq, (g, r))
    raise ValueError(f"arithmetic must be 'rational' or 'float', not {arithmetic!r}")


def _inv_weight(seq: WeightSequence, k: int, arithmetic: str) -> Number:
    if arithmetic == "rational":
        return 1 / seq.exact_weight_at(k)
    return math.exp(-seq.log_weight_at(k))


def _check_arithmetic(seq: WeightSequence, arithmetic: str) -> None:
    if arithmetic == "rational" and not seq.supports_exact:
        raise UnsupportedArithmetic(f"{seq} has irrational weights; use arithmetic='float'")
    if arithmetic not in ("rational", "float"):
        raise ValueError(f"arithmetic must be 'rational' or 'float', not {arithmetic!r}")


# coarse recursion --------------------------------------------------------------


def coarse_distribution(seq: WeightSequence, d: int, n: int, arithmetic: str = "rational") -> ExactDistribution:
    """Law of the coarse chain after ``n`` steps."""
    if d < 1 or n < 0:
        raise ValueError("need d >= 1 and n >= 0")
    _check_arithmetic(seq, arithmetic)
    one: Number = Fraction(1) if arithmetic == "rational" else 1.0
    dist: dict[UrnState, Number] = {UrnState(0, 0): one}
    for _ in range(n):
        nxt: dict[UrnState, Number] = {}
        for (r, g), p in dist.items():
            pr, pg = _pi_pair(seq, r, g, arithmetic)
            for a in range(d + 1):
                q = p * math.comb(d, a) * pr**a * pg ** (d - a)
                s = UrnState(r + a, g + d - a)
                nxt[s] = nxt.get(s, 0) + q
        dist = nxt
    return ExactDistribution(d, n, dist, arithmetic)


# fine enumeration --------------------------------------------------------------


def _walk_fine_tree(
    seq: WeightSequence,
    d: int,
    ticks: int,
    arithmetic: str,
    on_leaf: Callable[[int, int, Number], None],
    on_node: Callable[[int, int, int, int, Number, Number], None] | None = None,
) -> None:
    """Depth-first walk over all ``2**ticks`` colour sequences.

    ``on_node(r, g, sr, sg, p_red, p_green)`` is called at every internal
    node with the snapshot in force for the next tick and its two edge
    probabilities.
    """
    one: Number = Fraction(1) if arithmetic == "rational" else 1.0
    cache: dict[tuple[int, int], tuple[Number, Number]] = {}

    def edges(sr: int, sg: int) -> tuple[Number, Number]:
        key = (sr, sg)
        if key not in cache:
            cache[key] = _pi_pair(seq, sr, sg, arithmetic)
        return cache[key]

    def visit(t: int, r: int, g: int, sr: int, sg: int, prob: Number) -> None:
        if t == ticks:
            on_leaf(r, g, prob)
            return
        # the next tick t+1 draws from the state at tick floor_d(t+1) = d*(t//d)
        if t % d == 0:
            sr, sg = r, g
        p_red, p_green = edges(sr, sg)
        if on_node is not None:
            on_node(r, g, sr, sg, p_red, p_green)
        visit(t + 1, r + 1, g, sr, sg, prob * p_red)
        visit(t + 1, r, g + 1, sr, sg, prob * p_green)

    visit(0, 0, 0, 0, 0, one)


def _check_enumeration_size(d: int, n_blocks: int) -> int:
    if d < 1 or n_blocks < 0:
        raise ValueError("need d >= 1 and n_blocks >= 0")
    ticks = d * n_blocks
    if ticks > MAX_ENUMERATION_TICKS:
        raise ValueError(
            f"d*n_blocks = {ticks} exceeds the enumeration bound of {MAX_ENUMERATION_TICKS} ticks "
            f"(2**{ticks} paths)"
        )
    return ticks


def enumerate_fine_paths(
    seq: WeightSequence, d: int, n_blocks: int, arithmetic: str = "rational"
) -> ExactDistribution:
    """Law of the fine chain at tick ``d * n_blocks`` by brute-force path enumeration."""
    ticks = _check_enumeration_size(d, n_blocks)
    _check_arithmetic(seq, arithmetic)
    dist: dict[UrnState, Number] = {}

    def leaf(r: int, g: int, prob: Number) -> None:
        s = UrnState(r, g)
        dist[s] = dist.get(s, 0) + prob

    _walk_fine_tree(seq, d, ticks, arithmetic, leaf)
    return ExactDistribution(d, n_blocks, dist, arithmetic)


@dataclass
class MartingaleCertificate:
    nodes: int
    max_abs: float
    max_rel: float
    exact_zero: bool | None = None
    failures: list[tuple[int, int, int, int]] = field(default_factory=list)


def martingale_tree_check(
    seq: WeightSequence, d: int, n_blocks: int, arithmetic: str = "rational"
) -> MartingaleCertificate:
    """Conditional expectation of the snapshot-weighted increment at every tree node.

    At a node with snapshot ``(sr, sg)`` the red child moves the snapshot
    martingale by ``+1/w_sr`` and the green child by ``-1/w_sg``; the
    edge-probability-weighted sum of the two must vanish.
    """
    ticks = _check_enumeration_size(d, n_blocks)
    _check_arithmetic(seq, arithmetic)
    cert = MartingaleCertificate(0, 0.0, 0.0, True if arithmetic == "rational" else None)

    def node(r: int, g: int, sr: int, sg: int, p_red: Number, p_green: Number) -> None:
        up = _inv_weight(seq, sr, arithmetic)
        down = _inv_weight(seq, sg, arithmetic)
        drift = p_red * up - p_green * down
        cert.nodes += 1
        a = abs(float(drift))
        cert.max_abs = max(cert.max_abs, a)
        cert.max_rel = max(cert.max_rel, a / float(up + down))
        if arithmetic == "rational" and drift != 0:
            cert.exact_zero = False
            cert.failures.append((r, g, sr, sg))

    _walk_fine_tree(seq, d, ticks, arithmetic, lambda r, g, p: None, node)
    return cert


# monochromatic runs and the counterexample bound --------------------------------


def monochromatic_run_probability(
    seq: WeightSequence,
    d: int,
    start: UrnState | tuple[int, int],
    colour: int | str,
    K: int,
    arithmetic: str = "float",
) -> Number:
    """Probability that the next ``K`` coarse steps add only ``colour`` balls.

    Step ``k`` is evaluated at the state reached after ``k-1`` forced steps,
    so each factor is the coarse transition probability ``pi**d`` of the
    forced move.  Float mode accumulates in log space.
    """
    r, g = start
    if (r + g) % d:
        raise ValueError(f"{tuple(start)} is not a coarse state for d={d}")
    if K < 0:
        raise ValueError("K must be >= 0")
    if isinstance(colour, str):
        colour = {"red": RED, "green": GREEN}[colour]
    if colour not in (RED, GREEN):
        raise ValueError(f"unknown colour {colour!r}")
    if arithmetic == "rational":
        _check_arithmetic(seq, arithmetic)
        out = Fraction(1)
        for _ in range(K):
            pr, pg = _pi_pair(seq, r, g, "rational")
            out *= (pr if colour == RED else pg) ** d
            r, g = (r + d, g) if colour == RED else (r, g + d)
        return out
    log_p = 0.0
    for _ in range(K):
        # log pi(a, b) = -log1p(exp(log w_b - log w_a))
        if colour == RED:
            x = seq.log_weight_at(g) - seq.log_weight_at(r)
        else:
            x = seq.log_weight_at(r) - seq.log_weight_at(g)
        log_p -= d * (x + math.log1p(math.exp(-x)) if x > 0 else math.log1p(math.exp(x)))
        r, g = (r + d, g) if colour == RED else (r, g + d)
    return math.exp(log_p)


def counterexample_lower_bound(
    rho: float, d: int, K: int | float | None = None, tolerance: float = 1e-12
) -> float:
    """``prod_{k=1}^{K} (1 + rho**(-(k-1)*d))**(-d)``.

    ``K=None`` (or ``math.inf``) requests the infinite product, truncated once
    the remaining log-tail, bounded by ``d * rho**(-K*d) / (1 - rho**(-d))``
    via ``log(1+x) <= x``, drops below ``tolerance``.
    """
    value, _ = counterexample_lower_bound_terms(rho, d, K, tolerance)
    return value


def counterexample_lower_bound_terms(
    rho: float, d: int, K: int | float | None = None, tolerance: float = 1e-12
) -> tuple[float, int]:
    if not rho > 1 or d < 2:
        raise ValueError("need rho > 1 and d >= 2")
    log_step = -d * math.log(rho)
    log_p = 0.0
    if K is not None and K != math.inf:
        for k in range(1, int(K) + 1):
            log_p -= d * math.log1p(math.exp((k - 1) * log_step))
        return math.exp(log_p), int(K)
    k = 0
    denom = -math.expm1(log_step)
    while True:
        k += 1
        log_p -= d * math.log1p(math.exp((k - 1) * log_step))
        tail = d * math.exp(k * log_step) / denom
        if tail < tolerance:
            return math.exp(log_p), k


# escape-bound constants --------------------------------------------------------


def alpha_constant(d: int, s_inf: float) -> float:
    """``(24 + 16 d s_inf) ** -2``."""
    if d < 1 or not (0 < s_inf < math.inf):
        raise ValueError("need d >= 1 and 0 < s_inf < inf")
    return (24.0 + 16.0 * d * s_inf) ** -2


def lemma_bound_check(alpha: float, d: int, s_inf: float) -> float:
    """Escape-probability lower bound
    ``(1/2 - 4a - 2 sqrt(a) - 4 d a s) / (2a + 4 sqrt(a) + 7/2)``."""
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    ra = math.sqrt(alpha)
    num = 0.5 - 4 * alpha - 2 * ra - 4 * d * alpha * s_inf
    den = 2 * alpha + 4 * ra + 3.5
    return num / den


ESCAPE_FLOOR = 1.0 / 12.0


def lemma_bound_holds(d: int, s_inf: float) -> tuple[float, bool]:
    """Ratio at ``alpha = alpha_constant(d, s_inf)`` and whether it reaches 1/12."""
    ratio = lemma_bound_check(alpha_constant(d, s_inf), d, s_inf)
    return ratio, ratio >= ESCAPE_FLOOR
