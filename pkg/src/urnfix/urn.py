"""Urn states, draw probabilities and the coarse / fine urn chains.

The coarse chain adds ``d`` balls per step, each independently red with
probability ``pi(r, g) = w_r / (w_r + w_g)``.  The fine chain adds one ball
per tick; tick ``k`` draws with the configuration frozen at tick
``floor_d(k, d)``, the last tick whose ball count was a multiple of ``d``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, NamedTuple

import numpy as np

from . import _kernels
from .weights import WeightSequence

RED = 1
GREEN = 0
COLOUR_NAMES = {RED: "red", GREEN: "green"}

# uniforms drawn per batch when simulating long paths
CHUNK = 1 << 16


class UrnState(NamedTuple):
    r: int
    g: int

    @property
    def total(self) -> int:
        return self.r + self.g


def floor_d(k: int, d: int) -> int:
    """Largest multiple of ``d`` strictly below ``k`` (``k >= 1``)."""
    if k < 1 or d < 1:
        raise ValueError("floor_d needs k >= 1 and d >= 1")
    return d * ((k - 1) // d)


def draw_probability(seq: WeightSequence, state: UrnState | tuple[int, int]) -> float:
    """Probability of drawing red from ``state``, evaluated in log space."""
    r, g = state
    if r < 0 or g < 0:
        raise ValueError(f"invalid urn state {state}")
    x = seq.log_weight_at(g) - seq.log_weight_at(r)
    if x > 0:
        e = math.exp(-x)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(x))


def as_generator(rng: np.random.Generator | int | None) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.Generator(np.random.Philox(rng))


# paths -----------------------------------------------------------------------


@dataclass
class CoarsePath:
    d: int
    r: np.ndarray
    g: np.ndarray

    def __len__(self) -> int:
        return len(self.r)

    @property
    def n_steps(self) -> int:
        return len(self.r) - 1

    def state(self, n: int) -> UrnState:
        return UrnState(int(self.r[n]), int(self.g[n]))

    @property
    def states(self) -> list[UrnState]:
        return [UrnState(int(a), int(b)) for a, b in zip(self.r, self.g)]

    def validate(self) -> None:
        """Check the urn-path conditions: start at (0,0), monotone, +d per step."""
        if self.r[0] != 0 or self.g[0] != 0:
            raise AssertionError("urn path must start at (0, 0)")
        if np.any(np.diff(self.r) < 0) or np.any(np.diff(self.g) < 0):
            raise AssertionError("counts must be non-decreasing")
        total = self.r + self.g
        if not np.array_equal(total, self.d * np.arange(len(total))):
            raise AssertionError("step n must hold d*n balls")


@dataclass
class FinePath:
    d: int
    r: np.ndarray
    g: np.ndarray
    colours: np.ndarray = field(repr=False)  # colours[k-1] is the colour drawn at tick k

    def __len__(self) -> int:
        return len(self.r)

    @property
    def ticks(self) -> int:
        return len(self.r) - 1

    def state(self, k: int) -> UrnState:
        return UrnState(int(self.r[k]), int(self.g[k]))

    def snapshot_ticks(self) -> np.ndarray:
        """``floor_d(k, d)`` for ticks ``k = 1..ticks``."""
        k = np.arange(1, self.ticks + 1, dtype=np.int64)
        return self.d * ((k - 1) // self.d)

    def coarse(self) -> CoarsePath:
        return CoarsePath(self.d, self.r[:: self.d].copy(), self.g[:: self.d].copy())

    @classmethod
    def from_colours(cls, d: int, colours: Iterable[int]) -> "FinePath":
        c = np.asarray(list(colours) if not isinstance(colours, np.ndarray) else colours, dtype=np.int8)
        r = np.zeros(len(c) + 1, dtype=np.int64)
        r[1:] = np.cumsum(c == RED)
        g = np.arange(len(c) + 1, dtype=np.int64) - r
        return cls(d, r, g, c)

    def validate(self) -> None:
        if self.r[0] != 0 or self.g[0] != 0:
            raise AssertionError("fine path must start at (0, 0)")
        dr, dg = np.diff(self.r), np.diff(self.g)
        if not np.all(dr + dg == 1) or not (np.all((dr == 0) | (dr == 1))):
            raise AssertionError("exactly one ball must be added per tick")
        if not np.array_equal(dr, (self.colours == RED).astype(dr.dtype)):
            raise AssertionError("colour record disagrees with the count increments")


# single steps ------------------------------------------------------------------


def coarse_step(seq: WeightSequence, state: UrnState, d: int, rng: np.random.Generator) -> UrnState:
    """One coarse step: ``d`` independent Bernoulli(pi) draws."""
    if (state.r + state.g) % d:
        raise ValueError(f"state {state} does not hold a multiple of d={d} balls")
    pi = draw_probability(seq, state)
    a = int(np.count_nonzero(rng.random(d) < pi))
    return UrnState(state.r + a, state.g + d - a)


def fine_step(seq: WeightSequence, path: FinePath, rng: np.random.Generator) -> FinePath:
    """Extend ``path`` by one tick, drawing with the block snapshot."""
    k = path.ticks
    snap = path.state(floor_d(k + 1, path.d))
    red = rng.random() < draw_probability(seq, snap)
    c = RED if red else GREEN
    r_new = path.r[-1] + (1 if red else 0)
    g_new = path.g[-1] + (0 if red else 1)
    return FinePath(
        path.d,
        np.append(path.r, r_new),
        np.append(path.g, g_new),
        np.append(path.colours, np.int8(c)),
    )


def empty_fine_path(d: int) -> FinePath:
    z = np.zeros(1, dtype=np.int64)
    return FinePath(d, z.copy(), z.copy(), np.zeros(0, dtype=np.int8))


# whole paths -------------------------------------------------------------------


def simulate_coarse(
    seq: WeightSequence, d: int, n_steps: int, rng: np.random.Generator | int | None = None
) -> CoarsePath:
    if d < 1 or n_steps < 0:
        raise ValueError("need d >= 1 and n_steps >= 0")
    rng = as_generator(rng)
    p = _kernels.weight_params(seq)
    r = np.zeros(n_steps + 1, dtype=np.int64)
    g = np.zeros(n_steps + 1, dtype=np.int64)
    steps_per_chunk = max(1, CHUNK // d)
    rc, gc, n = 0, 0, 0
    while n < n_steps:
        m = min(steps_per_chunk, n_steps - n)
        u = rng.random(m * d)
        rc, gc = _kernels.coarse_path_kernel(p, d, u, rc, gc, r[n + 1 : n + 1 + m], g[n + 1 : n + 1 + m])
        n += m
    return CoarsePath(d, r, g)


def simulate_fine(
    seq: WeightSequence, d: int, k_ticks: int, rng: np.random.Generator | int | None = None
) -> FinePath:
    """Simulate ``k_ticks`` of the fine chain.

    With the same stream, ``simulate_fine(..., d * n).coarse()`` reproduces
    ``simulate_coarse(..., n)`` exactly, since tick ``t`` and ball ``t`` of the
    coarse chain consume the same uniform.
    """
    if d < 1 or k_ticks < 0:
        raise ValueError("need d >= 1 and k_ticks >= 0")
    rng = as_generator(rng)
    p = _kernels.weight_params(seq)
    colours = np.empty(k_ticks, dtype=np.int8)
    r, g, sr, sg, t = 0, 0, 0, 0, 0
    while t < k_ticks:
        m = min(CHUNK, k_ticks - t)
        u = rng.random(m)
        r, g, sr, sg = _kernels.fine_path_kernel(p, d, u, r, g, sr, sg, t, colours[t : t + m])
        t += m
    return FinePath.from_colours(d, colours)


# CSV dumps ---------------------------------------------------------------------

PATH_COLUMNS = ("index", "r", "g", "colour")


def write_path_csv(path: CoarsePath | FinePath, out: IO[str] | str | Path, header_lines: Iterable[str] = ()) -> None:
    """Dump a path as ``index,r,g,colour``; colour is empty for coarse paths and index 0."""
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="") as fh:
            write_path_csv(path, fh, header_lines)
        return
    for line in header_lines:
        out.write(f"# {line}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(PATH_COLUMNS)
    fine = isinstance(path, FinePath)
    for i, (a, b) in enumerate(zip(path.r.tolist(), path.g.tolist())):
        colour = COLOUR_NAMES[int(path.colours[i - 1])] if fine and i > 0 else ""
        w.writerow((i, a, b, colour))
