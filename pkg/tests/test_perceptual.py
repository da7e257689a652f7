from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spotformer.framing import FrameGrid, forward_spectrum
from spotformer.perceptual import (MaskingCalibration, apply_lf_override, calibrate,
                                   calibration_stimuli, control_point_masker,
                                   default_calibration, distortion, erb_space,
                                   inverse_masking_curve, masking_weights, tone_spectrum)

GRID = FrameGrid()
CAL = default_calibration(GRID)


def random_spectrum(rng, scale=1.0):
    return scale * forward_spectrum(rng.standard_normal((GRID.frame_len, 1)), GRID)[:, 0]


def test_erb_grid_endpoints():
    fc = erb_space(50, 8000, 64)
    assert fc[0] == pytest.approx(50) and fc[-1] == pytest.approx(8000)
    assert np.all(np.diff(fc) > 0)


def test_masker_examples(rng):
    V = rng.standard_normal((512, 3)) + 1j * rng.standard_normal((512, 3))
    S = rng.standard_normal((512, 3)) + 1j * rng.standard_normal((512, 3))
    assert not np.any(control_point_masker(np.zeros_like(S), V))
    np.testing.assert_allclose(control_point_masker(2 * S, V), 2 * control_point_masker(S, V))
    np.testing.assert_allclose(control_point_masker(S[:, :1], V[:, :1]), S[:, 0] * V[:, 0])
    with pytest.raises(ValueError):
        control_point_masker(S, V[:, :2])


def test_zero_masker_weights_are_quiet_threshold():
    w = inverse_masking_curve(np.zeros(512), GRID, CAL)
    assert np.all(np.isfinite(w)) and np.all(w > 0)
    w_loud = inverse_masking_curve(np.full(512, 1e3), GRID, CAL)
    assert np.all(w >= w_loud)


def test_lf_override_exact(rng):
    mw = masking_weights(random_spectrum(rng), GRID, CAL)
    raw = inverse_masking_curve(random_spectrum(np.random.default_rng(1234)), GRID, CAL)
    low = GRID.bin_freqs() <= 100.0
    assert low.sum() == 7                                  # bins 0..3 and their mirrors
    np.testing.assert_array_equal(mw.weights[low], 100.0 * raw.max())
    assert np.all(mw.weights[~low] == raw[~low])


@given(seed=st.integers(0, 2 ** 32 - 1), gain=st.floats(1e-4, 1e2))
def test_weights_decrease_under_10x_scaling(seed, gain):
    m = random_spectrum(np.random.default_rng(seed), gain)
    w1 = inverse_masking_curve(m, GRID, CAL)
    w10 = inverse_masking_curve(10 * m, GRID, CAL)
    assert np.all(w10 < w1)


@given(seed=st.integers(0, 2 ** 32 - 1), phase=st.floats(0, 2 * np.pi))
def test_weights_phase_invariant(seed, phase):
    m = random_spectrum(np.random.default_rng(seed))
    np.testing.assert_allclose(inverse_masking_curve(m * np.exp(1j * phase), GRID, CAL),
                               inverse_masking_curve(m, GRID, CAL), rtol=1e-13)


def test_weights_conjugate_symmetric(rng):
    w = masking_weights(random_spectrum(rng), GRID, CAL).weights
    k = np.arange(1, 512)
    np.testing.assert_array_equal(w[k], w[512 - k])


def test_non_finite_masker_rejected():
    m = np.zeros(512, dtype=complex)
    m[3] = np.nan
    with pytest.raises(FloatingPointError):
        masking_weights(m, GRID, CAL)


@given(seed=st.integers(0, 2 ** 32 - 1), c=st.floats(-100, 100))
def test_distortion_seminorm(seed, c):
    rng = np.random.default_rng(seed)
    w = np.abs(rng.standard_normal(512))
    a = rng.standard_normal(512) + 1j * rng.standard_normal(512)
    b = rng.standard_normal(512) + 1j * rng.standard_normal(512)
    assert distortion(w, np.zeros(512)) == 0
    assert distortion(w, c * a) == pytest.approx(c * c * distortion(w, a), rel=1e-12, abs=1e-300)
    assert distortion(w, 2 * a) == pytest.approx(4 * distortion(w, a), rel=1e-14)
    assert np.sqrt(distortion(w, a + b)) <= np.sqrt(distortion(w, a)) + np.sqrt(distortion(w, b)) + 1e-12


def test_half_spectrum_consistency(rng):
    """D of a real disturbance equals the folded half-spectrum sum."""
    w = masking_weights(random_spectrum(rng), GRID, CAL).weights
    eps = forward_spectrum(rng.standard_normal((256, 1)), GRID)[:, 0]
    half = np.sum(GRID.fold_weights() * w[:257] ** 2 * np.abs(eps[:257]) ** 2)
    assert half == pytest.approx(distortion(w, eps), rel=1e-12)


def test_calibration_fixture():
    masker, probe = calibration_stimuli(GRID)
    w = masking_weights(masker, GRID, CAL, lf_override=False)
    assert distortion(w, probe) == pytest.approx(1.0, abs=1e-6)
    # probe twice the amplitude (20 log10 2 dB up)
    assert distortion(w, 2 * probe) == pytest.approx(4.0, abs=1e-3)
    assert distortion(w, 0 * probe) == 0.0


def test_calibration_in_quiet():
    """A 1 kHz probe at the absolute threshold, no masker, is just detectable."""
    from spotformer.perceptual import threshold_in_quiet
    amp = 10 ** ((threshold_in_quiet(1000.0) - CAL.full_scale_spl) / 20)
    w = masking_weights(np.zeros(512), GRID, CAL, lf_override=False)
    assert distortion(w, tone_spectrum(1000.0, amp, GRID)) == pytest.approx(1.0, rel=1e-9)


def test_calibration_on_other_grid():
    grid = FrameGrid(frame_len=64, pad_len=64, hop=32)
    cal = calibrate(grid)
    masker, probe = calibration_stimuli(grid)
    assert distortion(masking_weights(masker, grid, cal, lf_override=False), probe) == pytest.approx(1.0, abs=1e-6)


def test_calibration_constants_positive():
    assert CAL.cs > 0 and CAL.ca > 0
    with pytest.raises(ValueError):
        MaskingCalibration(cs=0.0, ca=1.0)


def test_apply_lf_override_no_low_bins():
    grid = FrameGrid(frame_len=32, pad_len=32, hop=16, sample_rate=16000)
    w = np.arange(64, dtype=float)
    # bin spacing 250 Hz: only DC is at or below 100 Hz
    out = apply_lf_override(w, grid, 100.0, 100.0)
    assert out[0] == 6300.0 and np.all(out[1:] == w[1:])
    assert apply_lf_override(w, grid, -1.0, 100.0) is w
