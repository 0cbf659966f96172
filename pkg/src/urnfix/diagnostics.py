"""Path-wise processes along a fine path.

* ``N_k``: signed sum of ``1/w`` at the drawn colour's count *before* the tick.
* ``M_k``: the same sum with weights taken at the block snapshot; a martingale.
* ``X_k``: minimum of the snapshot counts.
* ``B_k``: ``sum_{i >= X_k} 1/w_i**2``.

Series are indexed by tick ``k = 0..K`` with ``N_0 = M_0 = 0``.  ``X_0`` is
taken from the empty urn, i.e. ``X_0 = 0``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from .urn import COLOUR_NAMES, RED, FinePath, UrnState, draw_probability
from .weights import WeightSequence, is_non_decreasing, tail_inverse_square_sum


def _drawn_counts(path: FinePath) -> tuple[np.ndarray, np.ndarray]:
    red = path.colours == RED
    return red, np.where(red, path.r[:-1], path.g[:-1])


def compute_N(path: FinePath, seq: WeightSequence) -> np.ndarray:
    """Running sum of per-tick increments ``+-1/w`` at the pre-tick count."""
    red, counts = _drawn_counts(path)
    inc = seq.inverse_weights(counts)
    out = np.zeros(path.ticks + 1)
    np.cumsum(np.where(red, inc, -inc), out=out[1:])
    return out


def compute_N_closed_form(path: FinePath, seq: WeightSequence) -> np.ndarray:
    """``sum_{i<R_k} 1/w_i - sum_{i<G_k} 1/w_i`` from a prefix table of inverse weights."""
    top = int(max(path.r[-1], path.g[-1]))
    prefix = np.zeros(top + 1)
    prefix[1:] = np.cumsum(seq.inverse_weights(np.arange(top)))
    return prefix[path.r] - prefix[path.g]


def compute_M(path: FinePath, seq: WeightSequence, d: int | None = None) -> np.ndarray:
    """Running sum with weights at the snapshot ``floor_d(k, d)`` counts."""
    d = path.d if d is None else d
    red = path.colours == RED
    snaps = d * ((np.arange(1, path.ticks + 1) - 1) // d)
    counts = np.where(red, path.r[snaps], path.g[snaps])
    inc = seq.inverse_weights(counts)
    out = np.zeros(path.ticks + 1)
    np.cumsum(np.where(red, inc, -inc), out=out[1:])
    return out


def compute_X(path: FinePath, d: int | None = None) -> np.ndarray:
    d = path.d if d is None else d
    x = np.zeros(path.ticks + 1, dtype=np.int64)
    snaps = d * ((np.arange(1, path.ticks + 1) - 1) // d)
    x[1:] = np.minimum(path.r[snaps], path.g[snaps])
    return x


class SquareTail:
    """Memoised ``sum_{i >= x} 1/w_i**2`` keyed by ``x``."""

    def __init__(self, seq: WeightSequence, tolerance: float = 1e-12):
        self.seq = seq
        self.tolerance = tolerance
        self._memo: dict[int, float] = {}
        self.converged = tail_inverse_square_sum(seq, 0, tolerance).converged

    def __call__(self, x: int) -> float:
        if not self.converged:
            return math.nan
        if x not in self._memo:
            v = tail_inverse_square_sum(self.seq, x, self.tolerance)
            self._memo[x] = v.value if v.converged else math.nan
        return self._memo[x]


def compute_X_B(
    path: FinePath, seq: WeightSequence, d: int | None = None, tolerance: float = 1e-12
) -> tuple[np.ndarray, np.ndarray | None]:
    """``X`` and ``B`` series; ``B`` is ``None`` when the square tail diverges."""
    x = compute_X(path, d)
    tail = SquareTail(seq, tolerance)
    if not tail.converged:
        return x, None
    uniq, inverse = np.unique(x, return_inverse=True)
    vals = np.array([tail(int(v)) for v in uniq])
    return x, vals[inverse]


@dataclass
class DiagnosticsTrace:
    path: FinePath
    N: np.ndarray
    M: np.ndarray
    X: np.ndarray
    B: np.ndarray | None

    @property
    def d(self) -> int:
        return self.path.d

    def to_csv(self, out: IO[str] | str | Path, header_lines: Iterable[str] = ()) -> None:
        """``k,r,g,colour,N,M,X,B`` with 17 significant digits; B empty when unavailable."""
        if isinstance(out, (str, Path)):
            with open(out, "w", newline="") as fh:
                self.to_csv(fh, header_lines)
            return
        for line in header_lines:
            out.write(f"# {line}\n")
        w = csv.writer(out, lineterminator="\n")
        w.writerow(("k", "r", "g", "colour", "N", "M", "X", "B"))
        p = self.path
        colours = [""] + [COLOUR_NAMES[int(c)] for c in p.colours]
        Bs = [""] * len(p) if self.B is None else [f"{b:.17g}" for b in self.B.tolist()]
        for k, (r, g, n, m, x) in enumerate(
            zip(p.r.tolist(), p.g.tolist(), self.N.tolist(), self.M.tolist(), self.X.tolist())
        ):
            w.writerow((k, r, g, colours[k], f"{n:.17g}", f"{m:.17g}", x, Bs[k]))


def trace(path: FinePath, seq: WeightSequence, tolerance: float = 1e-12) -> DiagnosticsTrace:
    x, b = compute_X_B(path, seq, path.d, tolerance)
    return DiagnosticsTrace(path, compute_N(path, seq), compute_M(path, seq), x, b)


def martingale_residual(seq: WeightSequence, d: int, snapshot: UrnState | tuple[int, int], exact: bool = False):
    """Drift of the snapshot martingale at ``snapshot``: ``pi/w_r - (1-pi)/w_g``.

    Float mode returns the residual relative to ``1/w_r + 1/w_g``; exact mode
    returns the rational residual itself.
    """
    r, g = snapshot
    if (r + g) % d:
        raise ValueError(f"{tuple(snapshot)} is not a block snapshot for d={d}")
    if exact:
        wr, wg = seq.exact_weight_at(r), seq.exact_weight_at(g)
        pi = wr / (wr + wg)
        return pi / wr - (1 - pi) / wg
    # 1/w_r and 1/w_g rescaled by their maximum so neither overflows
    lr, lg = seq.log_weight_at(r), seq.log_weight_at(g)
    top = max(-lr, -lg)
    inv_r, inv_g = math.exp(-lr - top), math.exp(-lg - top)
    res = draw_probability(seq, (r, g)) * inv_r - draw_probability(seq, (g, r)) * inv_g
    return res / (inv_r + inv_g)


@dataclass
class CouplingGap:
    max_gap: float
    bound: float
    ok: bool


def coupling_gap_check(
    tr: DiagnosticsTrace, k0: int, seq: WeightSequence, d: int | None = None, slack: float = 1e-12
) -> CouplingGap:
    """Largest ``|M_k - M_k0 + N_k0 - N_k|`` over ``k >= k0`` against ``2d / w_{X_k0}``.

    Only claimed for non-decreasing weights; raises ``ValueError`` otherwise.
    """
    d = tr.d if d is None else d
    if not is_non_decreasing(seq):
        raise ValueError(f"coupling bound needs non-decreasing weights; {seq} is not")
    if not 0 <= k0 <= tr.path.ticks:
        raise ValueError(f"k0={k0} outside the trace")
    gaps = coupling_gaps(tr, [k0])
    bound = 2 * d * math.exp(-seq.log_weight_at(int(tr.X[k0])))
    return CouplingGap(float(gaps[0]), bound, bool(gaps[0] <= bound + slack))


def coupling_gaps(tr: DiagnosticsTrace, k0s: Iterable[int]) -> np.ndarray:
    """Vectorised suffix maxima of ``|D_k - D_k0|`` with ``D = M - N``."""
    D = tr.M - tr.N
    suf_max = np.maximum.accumulate(D[::-1])[::-1]
    suf_min = np.minimum.accumulate(D[::-1])[::-1]
    k0s = np.asarray(list(k0s), dtype=np.int64)
    return np.maximum(suf_max[k0s] - D[k0s], D[k0s] - suf_min[k0s])


def coupling_sweep(tr: DiagnosticsTrace, seq: WeightSequence, slack: float = 1e-12) -> tuple[bool, float]:
    """Check every block-aligned ``k0``; returns (all ok, worst gap/bound ratio)."""
    if not is_non_decreasing(seq):
        raise ValueError(f"coupling bound needs non-decreasing weights; {seq} is not")
    d = tr.d
    k0s = np.arange(0, tr.path.ticks + 1, d)
    gaps = coupling_gaps(tr, k0s)
    bounds = 2 * d * seq.inverse_weights(tr.X[k0s])
    return bool(np.all(gaps <= bounds + slack)), float(np.max(gaps / bounds))


@dataclass
class Fixation:
    fixated: bool
    colour: str | None
    onset_tick: int | None


def fixation_detector(path: FinePath, window: int) -> Fixation:
    """Trailing-window fixation verdict.

    Fixated iff the final ``window`` draws share a colour; the onset is the
    first tick of that final monochromatic run.
    """
    if window < 1 or path.ticks < window:
        raise ValueError(f"need 1 <= window <= path length ({path.ticks})")
    c = path.colours
    last = c[-1]
    changes = np.flatnonzero(c != last)
    onset = int(changes[-1]) + 2 if changes.size else 1
    run = path.ticks - onset + 1
    if run >= window:
        return Fixation(True, COLOUR_NAMES[int(last)], onset)
    return Fixation(False, None, None)


def default_window(d: int, horizon: int) -> int:
    return max(10 * d, int(0.05 * horizon))
