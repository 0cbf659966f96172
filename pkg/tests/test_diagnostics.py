import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from urnfix.diagnostics import (
    compute_M,
    compute_N,
    compute_N_closed_form,
    compute_X,
    compute_X_B,
    coupling_gap_check,
    coupling_gaps,
    coupling_sweep,
    default_window,
    fixation_detector,
    martingale_residual,
    trace,
)
from urnfix.urn import GREEN, RED, FinePath, simulate_fine
from urnfix.weights import WeightSequence, tail_inverse_square_sum

POLY1 = WeightSequence.polynomial(1)
POLY2 = WeightSequence.polynomial(2)


def slow_N_M(path, seq, d):
    """Tick-by-tick loop straight from the definitions."""
    N, M = [0.0], [0.0]
    for k in range(1, path.ticks + 1):
        red = path.colours[k - 1] == RED
        s = d * ((k - 1) // d)
        pre = path.r[k - 1] if red else path.g[k - 1]
        snap = path.r[s] if red else path.g[s]
        sign = 1 if red else -1
        N.append(N[-1] + sign / seq.weight_at(int(pre)))
        M.append(M[-1] + sign / seq.weight_at(int(snap)))
    return np.array(N), np.array(M)


class TestN:
    def test_two_reds(self):
        path = FinePath.from_colours(1, [RED, RED])
        assert compute_N(path, POLY1)[-1] == pytest.approx(1.5)

    def test_alternating(self):
        path = FinePath.from_colours(1, [RED, GREEN])
        assert compute_N(path, WeightSequence.exponential(3))[-1] == 0

    def test_closed_form_long_path(self):
        path = simulate_fine(POLY2, 3, 10_000, 1)
        assert np.max(np.abs(compute_N(path, POLY2) - compute_N_closed_form(path, POLY2))) <= 1e-10

    @settings(max_examples=30, deadline=None)
    @given(d=st.integers(1, 5), seed=st.integers(0, 2**31), rho=st.floats(0.5, 3))
    def test_matches_definition_loop(self, d, seed, rho):
        seq = WeightSequence.polynomial(rho)
        path = simulate_fine(seq, d, 300, seed)
        N, M = slow_N_M(path, seq, d)
        np.testing.assert_allclose(compute_N(path, seq), N, atol=1e-12)
        np.testing.assert_allclose(compute_M(path, seq), M, atol=1e-12)


class TestM:
    def test_d_one_equals_N(self):
        path = simulate_fine(POLY2, 1, 2000, 3)
        np.testing.assert_array_equal(compute_M(path, POLY2), compute_N(path, POLY2))

    def test_first_block_all_red(self):
        d = 4
        path = FinePath.from_colours(d, [RED] * d)
        assert compute_M(path, POLY2)[d] == pytest.approx(d / POLY2.weight_at(0))

    def test_constant_weights(self):
        c = 2.5
        path = simulate_fine(WeightSequence.constant(c), 3, 999, 4)
        np.testing.assert_allclose(compute_M(path, WeightSequence.constant(c)), (path.r - path.g) / c, atol=1e-12)


class TestResidual:
    def test_constant(self):
        assert martingale_residual(WeightSequence.constant(3), 2, (4, 2)) == 0

    def test_exponential(self):
        assert abs(martingale_residual(WeightSequence.exponential(3), 5, (4, 1))) <= 1e-15

    def test_exact(self):
        assert martingale_residual(POLY1, 5, (2, 3), exact=True) == 0

    @settings(max_examples=200)
    @given(r=st.integers(0, 3000), g=st.integers(0, 3000), rho=st.floats(0.1, 50))
    def test_float_identity(self, r, g, rho):
        for seq in (WeightSequence.exponential(rho), WeightSequence.polynomial(rho)):
            assert abs(martingale_residual(seq, 1, (r, g))) <= 1e-15


class TestXB:
    def test_all_red(self):
        path = FinePath.from_colours(2, [RED] * 10)
        x, b = compute_X_B(path, POLY2, 2)
        assert np.all(x == 0)
        assert np.allclose(b, tail_inverse_square_sum(POLY2, 0).value)

    def test_balanced_d2(self):
        path = FinePath.from_colours(2, [RED, GREEN, RED, RED, GREEN, GREEN, GREEN])
        x = compute_X(path)
        # snapshot ticks 0,0,2,2,4,4,6 for k = 1..7
        assert list(x) == [0, 0, 0, 1, 1, 1, 1, 3]

    def test_divergent_square_tail(self):
        path = simulate_fine(WeightSequence.constant(1), 2, 10, 0)
        assert compute_X_B(path, WeightSequence.constant(1))[1] is None

    def test_monotone_along_paths(self):
        for seed in range(5):
            path = simulate_fine(WeightSequence.polynomial(0.8), 3, 5000, seed)
            x, b = compute_X_B(path, WeightSequence.polynomial(0.8))
            assert np.all(np.diff(x) >= 0) and np.all(np.diff(b) <= 0)

    def test_B_vanishes_as_X_grows(self):
        seq = WeightSequence.polynomial(1)
        path = simulate_fine(seq, 2, 20_000, 8)
        x, b = compute_X_B(path, seq)
        assert x[-1] > 1000
        assert b[-1] == pytest.approx(tail_inverse_square_sum(seq, int(x[-1])).value)
        assert b[-1] < 1e-3 < b[0]


class TestCoupling:
    def test_d_one_gap_zero(self):
        tr = trace(simulate_fine(POLY2, 1, 500, 0), POLY2)
        res = coupling_gap_check(tr, 10, POLY2)
        assert res.max_gap == 0 and res.bound > 0 and res.ok

    def test_constant_gap_zero(self):
        seq = WeightSequence.constant(1)
        tr = trace(simulate_fine(seq, 4, 400, 0), seq)
        assert coupling_gap_check(tr, 8, seq).max_gap == 0

    def test_refuses_non_monotone(self):
        seq = WeightSequence.counterexample(2, 2)
        tr = trace(simulate_fine(seq, 2, 100, 0), seq)
        with pytest.raises(ValueError):
            coupling_gap_check(tr, 0, seq)

    def test_gaps_match_brute_force(self):
        tr = trace(simulate_fine(POLY1, 3, 300, 5), POLY1)
        k0s = list(range(0, 301, 3))
        brute = [max(abs(tr.M[k] - tr.M[k0] + tr.N[k0] - tr.N[k]) for k in range(k0, 301)) for k0 in k0s]
        np.testing.assert_allclose(coupling_gaps(tr, k0s), brute, atol=1e-15)

    def test_sweep_polynomial(self):
        for seed in range(20):
            path = simulate_fine(POLY2, 3, 3000, seed)
            ok, worst = coupling_sweep(trace(path, POLY2), POLY2)
            assert ok and worst <= 1


class TestFixation:
    def test_all_red(self):
        fx = fixation_detector(FinePath.from_colours(1, [RED] * 20), 20)
        assert fx.fixated and fx.colour == "red" and fx.onset_tick == 1

    def test_alternating(self):
        path = FinePath.from_colours(1, [RED, GREEN] * 10)
        assert not fixation_detector(path, 2).fixated
        assert fixation_detector(path, 1).fixated

    def test_onset(self):
        fx = fixation_detector(FinePath.from_colours(1, [RED, GREEN, RED, GREEN, GREEN, GREEN]), 3)
        assert fx.fixated and fx.colour == "green" and fx.onset_tick == 4

    def test_window_too_long(self):
        with pytest.raises(ValueError):
            fixation_detector(FinePath.from_colours(1, [RED]), 2)

    def test_default_window(self):
        assert default_window(2, 100) == 20
        assert default_window(2, 10_000) == 500

    @settings(max_examples=100)
    @given(colours=st.lists(st.sampled_from([RED, GREEN]), min_size=1, max_size=60), window=st.integers(1, 60))
    def test_matches_definition(self, colours, window):
        if window > len(colours):
            return
        fx = fixation_detector(FinePath.from_colours(1, colours), window)
        assert fx.fixated == (len(set(colours[-window:])) == 1)
        if fx.fixated:
            onset = fx.onset_tick
            assert len(set(colours[onset - 1 :])) == 1
            assert onset == 1 or colours[onset - 2] != colours[-1]


def test_trace_csv_format():
    path = FinePath.from_colours(2, [RED, GREEN])
    buf = io.StringIO()
    trace(path, POLY2).to_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "k,r,g,colour,N,M,X,B"
    # B_0 = zeta(4) = pi^4/90
    assert lines[1].startswith("0,0,0,,0,0,0,")
    assert float(lines[1].split(",")[-1]) == pytest.approx(math.pi**4 / 90, rel=1e-15)
    assert lines[2].split(",")[:5] == ["1", "1", "0", "red", "1"]
    # tick 2 is green with G=0 before the tick, so N drops by 1/w_0
    assert lines[3].split(",")[4] == "0"
