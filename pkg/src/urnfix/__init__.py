"""Simulation, exact computation and diagnostics for reinforced urns that add d balls per step."""

from .weights import (
    TailSumVerdict,
    UnsupportedArithmetic,
    WeightSequence,
    is_non_decreasing,
    log_weight_at,
    satisfies_srh,
    tail_inverse_square_sum,
    tail_inverse_sum,
    weight_at,
)
from .urn import (
    CoarsePath,
    FinePath,
    UrnState,
    coarse_step,
    draw_probability,
    fine_step,
    floor_d,
    simulate_coarse,
    simulate_fine,
)
from .exact import (
    ExactDistribution,
    alpha_constant,
    coarse_distribution,
    counterexample_lower_bound,
    enumerate_fine_paths,
    lemma_bound_check,
    lemma_bound_holds,
    martingale_tree_check,
    monochromatic_run_probability,
)
from .diagnostics import (
    DiagnosticsTrace,
    compute_M,
    compute_N,
    compute_N_closed_form,
    compute_X_B,
    coupling_gap_check,
    fixation_detector,
    martingale_residual,
    trace,
)
from .montecarlo import (
    ExperimentConfig,
    RunBatchResult,
    estimate_fixation_probability,
    run_batch,
    sweep,
    wilson_interval,
)

__version__ = "0.1.0"
