"""Reproducible batch experiments on the fine chain.

Random streams
--------------
Run ``i`` of a batch with master seed ``s`` draws from
``Generator(Philox(SeedSequence(s, spawn_key=(i,))))``.  Philox is a
counter-based generator and ``SeedSequence`` hashes ``(s, i)`` into its key,
so every run owns an independent stream that does not depend on scheduling.
Sweep point ``j`` uses the master seed
``SeedSequence(s, spawn_key=(j,)).generate_state(1, uint64)[0]``.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import _kernels
from .diagnostics import SquareTail, default_window
from .urn import CHUNK, COLOUR_NAMES, simulate_fine
from .weights import WeightSequence

SCHEMA_VERSION = 1
WILSON_Z = 1.959964


class ConfigError(ValueError):
    """Inconsistent experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    weights: WeightSequence
    d: int = 1
    horizon_ticks: int = 10_000
    runs: int = 100
    master_seed: int = 0
    fixation_window: int | None = None
    diagnostics: bool = False

    def __post_init__(self) -> None:
        if not isinstance(self.weights, WeightSequence):
            raise ConfigError("weights must be a WeightSequence")
        if self.d < 1:
            raise ConfigError("d must be >= 1")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.horizon_ticks < self.d:
            raise ConfigError(f"horizon_ticks={self.horizon_ticks} must be >= d={self.d}")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must fit in 64 unsigned bits")
        if self.fixation_window is not None and not 1 <= self.fixation_window <= self.horizon_ticks:
            raise ConfigError(f"fixation_window={self.fixation_window} must lie in [1, horizon_ticks]")

    @property
    def window(self) -> int:
        if self.fixation_window is not None:
            return self.fixation_window
        return min(default_window(self.d, self.horizon_ticks), self.horizon_ticks)

    def to_dict(self) -> dict[str, Any]:
        return {
            "weights": self.weights.to_dict(),
            "d": self.d,
            "horizon_ticks": self.horizon_ticks,
            "runs": self.runs,
            "master_seed": self.master_seed,
            "fixation_window": self.window,
            "diagnostics": self.diagnostics,
        }


def run_stream(master_seed: int, run_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(master_seed, spawn_key=(run_index,))))


def point_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence(master_seed, spawn_key=(index,)).generate_state(1, np.uint64)[0])


@dataclass
class RunRecord:
    run_index: int
    fixated: bool
    colour: str | None
    onset_tick: int | None
    final_r: int
    final_g: int
    terminal_N: float
    terminal_X: int
    terminal_B: float | None
    terminal_M: float | None = None
    coupling_ok: bool | None = None


def _run_one(cfg: ExperimentConfig, index: int, params: tuple, tail: SquareTail) -> RunRecord:
    rng = run_stream(cfg.master_seed, index)
    if cfg.diagnostics:
        return _run_one_traced(cfg, index, rng, tail)
    state = np.array([0, 0, 0, 0, 0, 0.0, -1, 0], dtype=np.float64)
    done = 0
    while done < cfg.horizon_ticks:
        m = min(CHUNK, cfg.horizon_ticks - done)
        _kernels.streaming_kernel(params, cfg.d, rng.random(m), state)
        done += m
    r, g, sr, sg, _, n_val, last, run_start = state
    run_len = cfg.horizon_ticks - int(run_start) + 1
    fixated = run_len >= cfg.window
    x = int(min(sr, sg))
    b = tail(x)
    return RunRecord(
        index,
        fixated,
        COLOUR_NAMES[int(last)] if fixated else None,
        int(run_start) if fixated else None,
        int(r),
        int(g),
        float(n_val),
        x,
        None if math.isnan(b) else b,
    )


def _run_one_traced(cfg: ExperimentConfig, index: int, rng: np.random.Generator, tail: SquareTail) -> RunRecord:
    from .diagnostics import compute_M, compute_N, compute_X, coupling_sweep, fixation_detector, DiagnosticsTrace
    from .weights import is_non_decreasing

    path = simulate_fine(cfg.weights, cfg.d, cfg.horizon_ticks, rng)
    fx = fixation_detector(path, cfg.window)
    N = compute_N(path, cfg.weights)
    M = compute_M(path, cfg.weights)
    X = compute_X(path)
    x = int(X[-1])
    b = tail(x)
    ok = None
    if is_non_decreasing(cfg.weights):
        ok, _ = coupling_sweep(DiagnosticsTrace(path, N, M, X, None), cfg.weights)
    return RunRecord(
        index, fx.fixated, fx.colour, fx.onset_tick,
        int(path.r[-1]), int(path.g[-1]), float(N[-1]), x,
        None if math.isnan(b) else b, float(M[-1]), ok,
    )


def wilson_interval(successes: int, trials: int, z: float = WILSON_Z) -> tuple[float, float]:
    if trials < 1 or not 0 <= successes <= trials:
        raise ValueError("need 0 <= successes <= trials and trials >= 1")
    p = successes / trials
    z2 = z * z
    denom = 1 + z2 / trials
    centre = (p + z2 / (2 * trials)) / denom
    half = z / denom * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials))
    lo, hi = max(0.0, centre - half), min(1.0, centre + half)
    # the interval must contain p even after rounding
    return min(lo, p), max(hi, p)


@dataclass
class FixationEstimate:
    p_hat: float
    interval: tuple[float, float]
    fixated: int
    runs: int


def estimate_fixation_probability(records: Sequence[RunRecord] | Sequence[bool]) -> FixationEstimate:
    if len(records) < 1:
        raise ValueError("need at least one record")
    hits = sum(bool(r.fixated) if isinstance(r, RunRecord) else bool(r) for r in records)
    n = len(records)
    return FixationEstimate(hits / n, wilson_interval(hits, n), hits, n)


@dataclass
class RunBatchResult:
    config: ExperimentConfig
    records: list[RunRecord]
    estimate: FixationEstimate = field(init=False)
    mean_onset: float | None = field(init=False)

    def __post_init__(self) -> None:
        self.estimate = estimate_fixation_probability(self.records)
        onsets = [r.onset_tick for r in self.records if r.fixated]
        self.mean_onset = math.fsum(onsets) / len(onsets) if onsets else None

    @property
    def frequency(self) -> float:
        return self.estimate.p_hat

    def aggregate(self) -> dict[str, Any]:
        lo, hi = self.estimate.interval
        return {
            "runs": self.estimate.runs,
            "fixated": self.estimate.fixated,
            "fixation_frequency": self.estimate.p_hat,
            "wilson95_lo": lo,
            "wilson95_hi": hi,
            "mean_onset_tick": self.mean_onset,
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config.to_dict(),
            "aggregate": self.aggregate(),
            "records": [asdict(r) for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def write_csv(self, out: str | Path) -> None:
        cols = [f.name for f in RunRecord.__dataclass_fields__.values()]
        with open(out, "w", newline="") as fh:
            fh.write(f"# schema_version={SCHEMA_VERSION}\n")
            fh.write(f"# config: {json.dumps(self.config.to_dict(), sort_keys=True)}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in self.records:
                w.writerow(["" if v is None else _fmt(v) for v in asdict(r).values()])


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def run_batch(config: ExperimentConfig, threads: int = 1) -> RunBatchResult:
    """Run ``config.runs`` independent simulations.

    Records are reduced in run-index order, so the result does not depend on
    ``threads``.
    """
    if threads < 1:
        raise ConfigError("threads must be >= 1")
    params = _kernels.weight_params(config.weights)
    tail = SquareTail(config.weights)
    if threads == 1:
        records = [_run_one(config, i, params, tail) for i in range(config.runs)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(lambda i: _run_one(config, i, params, tail), range(config.runs)))
    return RunBatchResult(config, records)


# sweeps ------------------------------------------------------------------------

_RUN_KEYS = {"d", "horizon_ticks", "runs", "fixation_window", "diagnostics"}
_WEIGHT_KEYS = {"c", "rho", "values", "tail", "kind"}


def apply_point(base: ExperimentConfig, point: dict[str, Any]) -> ExperimentConfig:
    """Apply one grid point; ``d`` also updates counterexample weights."""
    run_kw: dict[str, Any] = {}
    weights = base.weights.to_dict()
    for key, value in point.items():
        name = key.split(".", 1)[1] if key.startswith("weights.") else key
        if key.startswith("weights.") or name in _WEIGHT_KEYS:
            weights[name] = value
        elif name in _RUN_KEYS:
            run_kw[name] = value
        else:
            raise ConfigError(f"unknown sweep axis {key!r}")
    if "d" in run_kw and weights.get("kind") == "counterexample" and not any(k.endswith("weights.d") for k in point):
        weights["d"] = run_kw["d"]
    try:
        seq = WeightSequence.from_dict(weights)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return replace(base, weights=seq, **run_kw)


@dataclass
class SweepRow:
    index: int
    point: dict[str, Any]
    master_seed: int
    result: RunBatchResult | None
    error: str | None = None

    def flat(self) -> dict[str, Any]:
        row: dict[str, Any] = {"index": self.index, **self.point, "master_seed": self.master_seed}
        agg = self.result.aggregate() if self.result else dict.fromkeys(
            ("runs", "fixated", "fixation_frequency", "wilson95_lo", "wilson95_hi", "mean_onset_tick")
        )
        row.update(agg)
        row["error"] = self.error
        return row


def grid_points(axes: dict[str, Iterable[Any]]) -> list[dict[str, Any]]:
    if not axes:
        raise ConfigError("sweep grid is empty")
    names = list(axes)
    values = [list(axes[n]) for n in names]
    if any(not v for v in values):
        raise ConfigError("every sweep axis needs at least one value")
    return [dict(zip(names, combo)) for combo in itertools.product(*values)]


def sweep(base: ExperimentConfig, axes: dict[str, Iterable[Any]], threads: int = 1) -> list[SweepRow]:
    """One batch per grid point; a failing point is recorded and the sweep continues."""
    rows = []
    for j, point in enumerate(grid_points(axes)):
        seed = point_seed(base.master_seed, j)
        try:
            cfg = replace(apply_point(base, point), master_seed=seed)
            rows.append(SweepRow(j, point, seed, run_batch(cfg, threads)))
        except (ValueError, OverflowError) as exc:
            rows.append(SweepRow(j, point, seed, None, f"{type(exc).__name__}: {exc}"))
    return rows


def sweep_to_json(rows: list[SweepRow], base: ExperimentConfig, axes: dict[str, Any]) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "base_config": base.to_dict(),
        "axes": {k: list(v) for k, v in axes.items()},
        "rows": [r.flat() for r in rows],
    }
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_sweep_csv(rows: list[SweepRow], out: str | Path) -> None:
    flat = [r.flat() for r in rows]
    cols: list[str] = []
    for row in flat:
        cols.extend(k for k in row if k not in cols)
    with open(out, "w", newline="") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in flat:
            w.writerow(["" if row.get(c) is None else _fmt(row[c]) for c in cols])
