"""Pilot run that fixes the fixation-frequency floors used by the acceptance suite.

Runs the desk-scale protocol (horizon 1e5 ticks, window 1e3, 500 runs) with
the pilot seed and records, per configuration, the measured frequency and its
Wilson 95% lower bound.  The lower bound is the floor the acceptance run
(which uses a different seed) must reach.

    python scripts/pilot_floors.py [--out tests/data/pilot_floors.json]
"""

from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

from urnfix.montecarlo import ExperimentConfig, run_batch
from urnfix.weights import WeightSequence

PILOT_SEED = 20240101
HORIZON = 100_000
WINDOW = 1_000
RUNS = 500

CONFIGS = {
    "poly2_d1": (WeightSequence.polynomial(2), 1),
    "poly1_d1": (WeightSequence.polynomial(1), 1),
    "monotone_poly2_d2": (WeightSequence.polynomial(2), 2),
    "monotone_poly2_d5": (WeightSequence.polynomial(2), 5),
    "counterexample_rho2_d2": (WeightSequence.counterexample(2, 2), 2),
}


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "tests" / "data" / "pilot_floors.json"))
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    out = {
        "pilot_seed": PILOT_SEED,
        "horizon_ticks": HORIZON,
        "fixation_window": WINDOW,
        "runs": RUNS,
        "floor_rule": "Wilson 95% lower bound of the pilot frequency",
        "configs": {},
    }
    for name, (seq, d) in CONFIGS.items():
        t0 = time.perf_counter()
        cfg = ExperimentConfig(seq, d, HORIZON, RUNS, PILOT_SEED, WINDOW)
        res = run_batch(cfg, args.threads)
        agg = res.aggregate()
        out["configs"][name] = {
            "weights": seq.to_dict(),
            "d": d,
            "fixated": agg["fixated"],
            "frequency": agg["fixation_frequency"],
            "wilson95_lo": agg["wilson95_lo"],
            "wilson95_hi": agg["wilson95_hi"],
            "floor": agg["wilson95_lo"],
        }
        print(f"{name}: {agg['fixated']}/{RUNS} fixated, floor {agg['wilson95_lo']:.4f} ({time.perf_counter() - t0:.1f}s)")
    Path(args.out).write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
