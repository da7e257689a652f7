from __future__ import annotations

import numpy as np
import pytest

from spotformer.framing import make_frames
from spotformer.solver import OPTIMAL, FrameSolution
from spotformer.spotformer import (SolverError, Spotformer, build_frame_problem, energy_weights,
                                   process_signals, residual_tolerance, transfer_omegas)
from spotformer import spotformer as spot_mod


def noise(rng, spot, n=160):
    return 0.05 * rng.standard_normal((n, spot.n_loudspeakers))


def test_energy_weights_cutoff(small_spot):
    a = energy_weights(small_spot.grid)
    f = small_spot.grid.bin_freqs()
    assert np.all(a[f <= 100] == 0) and np.all(a[f > 100] == 1)
    np.testing.assert_array_equal(a[1:], a[1:][::-1])


def test_transfer_omegas_nyquist_positive(small_spot):
    om = transfer_omegas(small_spot.grid)
    N = small_spot.grid.fft_len
    assert om[N // 2] == pytest.approx(np.pi * small_spot.grid.sample_rate)
    np.testing.assert_allclose(om[1:N // 2], -om[N - 1:N // 2:-1])


def test_bypass_identity(small_spot, rng):
    x = noise(rng, small_spot, 203)
    res = process_signals(small_spot, x, 5.0, bypass=True)
    assert res.bypass and not res.frames
    np.testing.assert_allclose(res.signals, x, atol=1e-12)


def test_silent_input(small_spot):
    x = np.zeros((96, small_spot.n_loudspeakers))
    res = process_signals(small_spot, x, 5.0)
    assert not np.any(res.signals)
    assert all(r.objective == 0 for r in res.frames)
    assert res.n_fallbacks == 0


def test_process_respects_budgets(small_spot, rng):
    x = noise(rng, small_spot)
    for d in (0.0, 1.0, 10.0):
        res = process_signals(small_spot, x, d, on_failure="fail")
        assert len(res.frames) == len(make_frames(x, small_spot.grid))
        for r in res.frames:
            assert r.max_residual <= residual_tolerance(d)
            assert r.objective <= r.reference_objective
            assert r.status == OPTIMAL


def test_n_jobs_equivalence(small_spot, rng):
    x = noise(rng, small_spot, 96)
    a = process_signals(small_spot, x, 2.0, n_jobs=1)
    b = process_signals(small_spot, x, 2.0, n_jobs=2)
    np.testing.assert_array_equal(a.signals, b.signals)


def test_failure_policy(small_spot, rng, monkeypatch, caplog):
    x = noise(rng, small_spot, 64)

    def broken(problem, options=None):
        return FrameSolution(frame=problem.ref_frame * 0, objective=0.0,
                             max_constraint_residual=1.0, solver_status=OPTIMAL,
                             reference_objective=1.0, distortions=np.ones(1))

    monkeypatch.setattr(spot_mod, "solve_frame", broken)
    with pytest.raises(SolverError, match="frame 0"):
        process_signals(small_spot, x, 1.0, on_failure="fail")
    res = process_signals(small_spot, x, 1.0, on_failure="fallback")
    assert res.n_fallbacks == len(res.frames)
    # every frame fell back to the reference, so the output is the bypass output
    np.testing.assert_allclose(res.signals, x, atol=1e-12)
    assert "using the reference frame" in caplog.text


def test_input_validation(small_spot, rng):
    with pytest.raises(ValueError):
        process_signals(small_spot, rng.standard_normal((50, 3)), 1.0)
    bad = noise(rng, small_spot, 50)
    bad[3, 1] = np.nan
    with pytest.raises(ValueError):
        process_signals(small_spot, bad, 1.0)
    with pytest.raises(ValueError):
        process_signals(small_spot, noise(rng, small_spot, 50), 1.0, on_failure="ignore")
    with pytest.raises(ValueError):
        small_spot.build_frame_problem(np.zeros((31, 5)), 1.0)
    with pytest.raises(ValueError):
        small_spot.build_frame_problem(np.zeros((32, 5)), -1.0)


def test_alpha_validation(small_spot):
    g = small_spot.grid
    frame = np.zeros((g.frame_len, 5))
    args = (g, small_spot.covariance.factors, small_spot.transfer)
    alpha = np.ones(g.fft_len)
    alpha[3] = 0.0
    with pytest.raises(ValueError, match="symmetric"):
        build_frame_problem(frame, *args, alpha, small_spot.calib, 1.0)
    with pytest.raises(ValueError):
        build_frame_problem(frame, *args, -np.ones(g.fft_len), small_spot.calib, 1.0)


def test_residual_tolerance():
    assert residual_tolerance(0.0) == 1e-9
    assert residual_tolerance(20.0) == pytest.approx(2e-5)


def test_spotforming_lowers_region_energy(small_spot, rng):
    """Free-field energy at the array drops while the budget is respected."""
    x = noise(rng, small_spot, 400)
    res = process_signals(small_spot, x, 20.0)
    ref_obj = sum(r.reference_objective for r in res.frames)
    obj = sum(r.objective for r in res.frames)
    assert obj < 0.7 * ref_obj
