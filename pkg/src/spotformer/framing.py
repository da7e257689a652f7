"""Short-time analysis/synthesis with square-root Hann windows.

Frames are stored as arrays of shape ``(n_frames, frame_len, n_channels)``.
The forward transform is the unnormalized, negative-exponent DFT of the
frame zero-padded to ``fft_len`` (numpy's ``fft`` convention).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class FrameGrid:
    frame_len: int = 256
    pad_len: int = 256
    hop: int = 128
    sample_rate: int = 16000

    def __post_init__(self):
        for name in ("frame_len", "pad_len", "hop", "sample_rate"):
            if getattr(self, name) <= 0:
                raise ValueError(f"FrameGrid.{name} must be strictly positive")
        if self.frame_len % 2 or self.hop * 2 != self.frame_len:
            raise ValueError("FrameGrid requires hop == frame_len / 2")
        if self.fft_len % 2:
            raise ValueError("FrameGrid requires an even fft_len")

    @property
    def fft_len(self) -> int:
        return self.frame_len + self.pad_len

    @property
    def n_bins(self) -> int:
        """Number of non-redundant bins (0..N/2) of a real frame."""
        return self.fft_len // 2 + 1

    def bin_freqs(self) -> np.ndarray:
        """Absolute frequency in Hz of every one of the ``fft_len`` bins."""
        return np.abs(np.fft.fftfreq(self.fft_len, 1.0 / self.sample_rate))

    def bin_omegas(self) -> np.ndarray:
        """Signed angular frequency (rad/s) of every bin."""
        return 2 * np.pi * np.fft.fftfreq(self.fft_len, 1.0 / self.sample_rate)

    def fold_weights(self) -> np.ndarray:
        """Multiplicity of each half-spectrum bin in the full spectrum."""
        c = np.full(self.n_bins, 2.0)
        c[0] = 1.0
        c[-1] = 1.0
        return c


@lru_cache(maxsize=8)
def _sqrt_hann(frame_len: int) -> np.ndarray:
    n = np.arange(frame_len)
    w = np.sqrt(0.5 - 0.5 * np.cos(2 * np.pi * n / frame_len))
    w.setflags(write=False)
    return w


def sqrt_hann(frame_len: int) -> np.ndarray:
    """Periodic square-root Hann window; its square is COLA at 50% overlap."""
    return _sqrt_hann(frame_len)


def _as_2d(signal) -> np.ndarray:
    x = np.asarray(signal, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError("signal must be (n_samples,) or (n_samples, n_channels)")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains non-finite samples")
    return x


def frame_count(n_samples: int, grid: FrameGrid) -> int:
    if n_samples == 0:
        return 0
    return -(-n_samples // grid.hop) + 1


def make_frames(signal, grid: FrameGrid) -> np.ndarray:
    """Slice a (multichannel) signal into windowed frames.

    The signal is padded with ``hop`` zeros in front and with ``hop`` zeros
    plus whatever is needed to reach a multiple of ``hop`` at the end, so
    every input sample is covered by two overlapping windows.
    """
    x = _as_2d(signal)
    n, ch = x.shape
    count = frame_count(n, grid)
    if count == 0:
        return np.zeros((0, grid.frame_len, ch))
    total = (count - 1) * grid.hop + grid.frame_len
    padded = np.zeros((total, ch))
    padded[grid.hop:grid.hop + n] = x
    idx = np.arange(count)[:, None] * grid.hop + np.arange(grid.frame_len)[None, :]
    return padded[idx] * sqrt_hann(grid.frame_len)[None, :, None]


def forward_spectrum(frame, grid: FrameGrid) -> np.ndarray:
    """Zero-padded DFT along the time axis (second to last for batches)."""
    frame = np.asarray(frame, dtype=float)
    if frame.shape[-2] != grid.frame_len:
        raise ValueError(f"frame must have {grid.frame_len} samples, got {frame.shape[-2]}")
    return np.fft.fft(frame, n=grid.fft_len, axis=-2)


def half_spectrum(frame, grid: FrameGrid) -> np.ndarray:
    """Bins 0..N/2 of :func:`forward_spectrum`."""
    frame = np.asarray(frame, dtype=float)
    if frame.shape[-2] != grid.frame_len:
        raise ValueError(f"frame must have {grid.frame_len} samples, got {frame.shape[-2]}")
    return np.fft.rfft(frame, n=grid.fft_len, axis=-2)


def dft_matrix(grid: FrameGrid) -> np.ndarray:
    """Explicit zero-padded DFT operator W = F [I; 0], shape (N, N_t)."""
    k = np.arange(grid.fft_len)[:, None]
    n = np.arange(grid.frame_len)[None, :]
    return np.exp(-2j * np.pi * k * n / grid.fft_len)


def overlap_add(frames, grid: FrameGrid, length: int | None = None) -> np.ndarray:
    """Apply the synthesis window and sum frames at ``hop`` offsets.

    ``length`` is the original signal length; the leading ``hop`` samples of
    padding added by :func:`make_frames` are removed.
    """
    frames = np.asarray(frames, dtype=float)
    if frames.ndim == 2:
        frames = frames[:, :, None]
    if frames.ndim != 3 or frames.shape[1] != grid.frame_len:
        raise ValueError(
            f"frames must be (n_frames, {grid.frame_len}, n_channels), got {frames.shape}")
    count, _, ch = frames.shape
    if length is None:
        length = max(count - 1, 0) * grid.hop
    if count == 0:
        return np.zeros((length, ch))
    total = (count - 1) * grid.hop + grid.frame_len
    out = np.zeros((total, ch))
    w = sqrt_hann(grid.frame_len)[:, None]
    for i in range(count):
        out[i * grid.hop:i * grid.hop + grid.frame_len] += frames[i] * w
    out = out[grid.hop:grid.hop + length]
    if out.shape[0] < length:
        out = np.vstack([out, np.zeros((length - out.shape[0], ch))])
    return out
