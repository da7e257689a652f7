from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spotformer.framing import (FrameGrid, dft_matrix, forward_spectrum, frame_count,
                                half_spectrum, make_frames, overlap_add, sqrt_hann)

GRID = FrameGrid()


def test_grid_defaults():
    assert (GRID.frame_len, GRID.pad_len, GRID.fft_len, GRID.hop) == (256, 256, 512, 128)
    assert GRID.n_bins == 257


@pytest.mark.parametrize("kwargs", [dict(hop=100), dict(frame_len=0), dict(sample_rate=-1),
                                    dict(frame_len=256, pad_len=1)])
def test_grid_rejects_bad_parameters(kwargs):
    with pytest.raises(ValueError):
        FrameGrid(**kwargs)


def test_window_is_cola():
    w2 = sqrt_hann(256) ** 2
    np.testing.assert_allclose(w2[:128] + w2[128:], 1.0, atol=1e-15)


def test_zero_signal_gives_zero_frames():
    assert not np.any(make_frames(np.zeros(512), GRID))


def test_constant_signal_interior_frame_is_window():
    frames = make_frames(np.ones(1024), GRID)
    np.testing.assert_array_equal(frames[3, :, 0], sqrt_hann(256))


def test_frame_count_384():
    frames = make_frames(np.ones(384), GRID)
    assert frames.shape[0] == 4 == (384 + 2 * 128 - 256) // 128 + 1
    # direct enumeration of hop offsets in the padded signal
    padded = 384 + 2 * 128
    assert len(range(0, padded - 256 + 1, 128)) == 4


def test_empty_signal_gives_no_frames():
    assert make_frames(np.zeros(0), GRID).shape[0] == 0
    assert frame_count(0, GRID) == 0


def test_impulse_spectrum_is_flat():
    frame = np.zeros((256, 1))
    frame[0] = 1
    np.testing.assert_array_equal(forward_spectrum(frame, GRID), np.ones((512, 1)))


def test_zero_frame_spectrum():
    assert not np.any(forward_spectrum(np.zeros((256, 2)), GRID))


def test_real_frame_hermitian_symmetry(rng):
    X = forward_spectrum(rng.standard_normal((256, 3)), GRID)
    k = np.arange(1, 512)
    np.testing.assert_allclose(X[512 - k], np.conj(X[k]), atol=1e-12)


def test_half_spectrum_matches_full(rng):
    x = rng.standard_normal((256, 2))
    np.testing.assert_allclose(half_spectrum(x, GRID), forward_spectrum(x, GRID)[:257], atol=1e-12)


def test_dft_against_hand_built_matrix(rng):
    toy = FrameGrid(frame_len=4, pad_len=4, hop=2, sample_rate=8)
    W = np.array([[np.exp(-2j * np.pi * k * n / 8) for n in range(4)] for k in range(8)])
    np.testing.assert_allclose(dft_matrix(toy), W, atol=1e-15)
    x = rng.standard_normal((4, 2))
    np.testing.assert_allclose(forward_spectrum(x, toy), W @ x, atol=1e-12)


def test_perfect_reconstruction_white_noise(rng):
    x = rng.standard_normal((16000, 3))
    y = overlap_add(make_frames(x, GRID), GRID, len(x))
    interior = slice(GRID.frame_len, len(x) - GRID.frame_len)
    err = np.linalg.norm(y[interior] - x[interior]) / np.linalg.norm(x[interior])
    assert err < 1e-10


@given(n=st.integers(1, 2000), seed=st.integers(0, 2 ** 32 - 1))
def test_reconstruction_any_length(n, seed):
    grid = FrameGrid(frame_len=64, pad_len=64, hop=32)
    x = np.random.default_rng(seed).standard_normal(n)
    y = overlap_add(make_frames(x, grid), grid, n)[:, 0]
    np.testing.assert_allclose(y, x, atol=1e-12 * max(1.0, np.abs(x).max()))


def test_zero_frames_give_zero_signal():
    assert not np.any(overlap_add(np.zeros((5, 256, 2)), GRID, 512))


def test_single_frame_change_is_local(rng):
    x = rng.standard_normal(2048)
    frames = make_frames(x, GRID)
    base = overlap_add(frames, GRID, len(x))
    frames[5] += rng.standard_normal(frames[5].shape)
    changed = np.flatnonzero(np.abs(overlap_add(frames, GRID, len(x)) - base)[:, 0] > 0)
    start = 5 * GRID.hop - GRID.hop           # leading hop of padding is stripped
    assert changed.min() >= start and changed.max() < start + GRID.frame_len


def test_chain_is_linear(rng):
    a, b = rng.standard_normal((2, 1000, 2))
    f = lambda s: overlap_add(make_frames(s, GRID), GRID, 1000)
    np.testing.assert_allclose(f(2 * a - b), 2 * f(a) - f(b), atol=1e-12)


def test_overlap_add_rejects_wrong_frame_length():
    with pytest.raises(ValueError):
        overlap_add(np.zeros((3, 100, 1)), GRID)


def test_non_finite_signal_rejected():
    with pytest.raises(ValueError):
        make_frames(np.array([0.0, np.nan]), GRID)
