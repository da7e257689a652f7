"""Perceptual distortion measure based on auditory masking.

The measure is ``D = sum_k w_k^2 |eps_k|^2``. The per-bin weights come from
a gammatone filterbank on an ERB-rate scale preceded by an outer/middle-ear
transfer shaped like the inverse threshold in quiet:

    w_k^2 = Cs / norm * sum_i |h_om(f_k) g_i(f_k)|^2 / (E_i + Ca)

where ``E_i`` is the masker power seen by filter ``i`` and ``norm`` turns
squared DFT magnitudes of a windowed frame into signal power. ``Cs`` and
``Ca`` are fitted by :func:`calibrate`.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .framing import FrameGrid, forward_spectrum, sqrt_hann


def erb(f):
    """Equivalent rectangular bandwidth (Glasberg & Moore) in Hz."""
    return 24.7 * (4.37e-3 * np.asarray(f, dtype=float) + 1.0)


def erb_rate(f):
    return 21.4 * np.log10(4.37e-3 * np.asarray(f, dtype=float) + 1.0)


def erb_space(f_lo: float, f_hi: float, n: int) -> np.ndarray:
    """``n`` centre frequencies equally spaced on the ERB-rate scale."""
    e = np.linspace(erb_rate(f_lo), erb_rate(f_hi), n)
    return (10 ** (e / 21.4) - 1.0) / 4.37e-3


def gammatone_power(f, fc) -> np.ndarray:
    """Squared magnitude of a 4th-order gammatone filter (unit gain at fc)."""
    b = 1.019 * erb(fc)
    x = (np.asarray(f, dtype=float) - np.asarray(fc, dtype=float)) / b
    return (1.0 + x * x) ** -4


def threshold_in_quiet(f) -> np.ndarray:
    """Terhardt's approximation of the absolute threshold (dB SPL)."""
    khz = np.maximum(np.asarray(f, dtype=float), 20.0) / 1000.0
    return 3.64 * khz ** -0.8 - 6.5 * np.exp(-0.6 * (khz - 3.3) ** 2) + 1e-3 * khz ** 4


def outer_middle_ear(f) -> np.ndarray:
    """Amplitude response of the outer/middle ear (inverse threshold shape)."""
    return 10 ** (-threshold_in_quiet(f) / 20)


@dataclass(frozen=True)
class MaskingCalibration:
    cs: float
    ca: float
    full_scale_spl: float = 100.0
    n_filters: int = 64
    f_min: float = 50.0
    lf_cutoff_hz: float = 100.0
    lf_gain: float = 100.0

    def __post_init__(self):
        if not (self.cs > 0 and self.ca > 0):
            raise ValueError("MaskingCalibration needs cs > 0 and ca > 0")
        if self.lf_cutoff_hz < 0 or self.lf_gain < 0:
            raise ValueError("low-frequency override parameters must be >= 0")


@dataclass
class MaskingWeights:
    weights: np.ndarray
    calib: MaskingCalibration
    lf_cutoff_hz: float
    lf_gain: float


@lru_cache(maxsize=16)
def filter_matrix(grid: FrameGrid, n_filters: int = 64, f_min: float = 50.0) -> np.ndarray:
    """``|h_om(f_k) g_i(f_k)|^2`` for every filter (rows) and every bin (cols)."""
    f = grid.bin_freqs()
    fc = erb_space(f_min, grid.sample_rate / 2, n_filters)
    G = gammatone_power(f[None, :], fc[:, None]) * outer_middle_ear(f)[None, :] ** 2
    G.setflags(write=False)
    return G


def power_norm(grid: FrameGrid) -> float:
    """Maps sum_k |X_k|^2 of a windowed frame to mean signal power."""
    return grid.fft_len * float(np.sum(sqrt_hann(grid.frame_len) ** 2))


def control_point_masker(ref_spectra, transfer_diagonals) -> np.ndarray:
    """Signal at a control point: sum over loudspeakers of transfer * spectrum."""
    ref_spectra = np.asarray(ref_spectra)
    transfer_diagonals = np.asarray(transfer_diagonals)
    if ref_spectra.shape[-2:] != transfer_diagonals.shape[-2:]:
        raise ValueError(
            f"spectra {ref_spectra.shape} and transfers {transfer_diagonals.shape} disagree")
    return np.sum(ref_spectra * transfer_diagonals, axis=-1)


def filter_energies(masker, grid: FrameGrid, calib: MaskingCalibration) -> np.ndarray:
    G = filter_matrix(grid, calib.n_filters, calib.f_min)
    return (np.abs(np.asarray(masker)) ** 2) @ G.T / power_norm(grid)


def inverse_masking_curve(masker, grid: FrameGrid, calib: MaskingCalibration) -> np.ndarray:
    """Weights w_k before the low-frequency override. Works on batches of maskers."""
    masker = np.asarray(masker)
    if masker.shape[-1] != grid.fft_len:
        raise ValueError(f"masker must have {grid.fft_len} bins")
    if not np.all(np.isfinite(masker)):
        raise FloatingPointError("masker contains non-finite values")
    G = filter_matrix(grid, calib.n_filters, calib.f_min)
    E = filter_energies(masker, grid, calib)
    w2 = calib.cs * ((1.0 / (E + calib.ca)) @ G) / power_norm(grid)
    return np.sqrt(w2)


def apply_lf_override(w: np.ndarray, grid: FrameGrid, cutoff_hz: float, gain: float) -> np.ndarray:
    """Set bins with |f| <= cutoff to ``gain`` times the frame maximum."""
    low = grid.bin_freqs() <= cutoff_hz
    if not np.any(low):
        return w
    out = np.array(w, dtype=float, copy=True)
    peak = np.max(out, axis=-1, keepdims=True)
    out[..., low] = gain * peak
    return out


def masking_weights(masker, grid: FrameGrid, calib: MaskingCalibration,
                    lf_override: bool = True) -> MaskingWeights:
    w = inverse_masking_curve(masker, grid, calib)
    if lf_override:
        w = apply_lf_override(w, grid, calib.lf_cutoff_hz, calib.lf_gain)
    return MaskingWeights(weights=w, calib=calib, lf_cutoff_hz=calib.lf_cutoff_hz,
                          lf_gain=calib.lf_gain)


def distortion(weights, epsilon) -> float:
    w = weights.weights if isinstance(weights, MaskingWeights) else np.asarray(weights)
    eps = np.asarray(epsilon)
    if w.shape != eps.shape:
        raise ValueError(f"weights {w.shape} and disturbance {eps.shape} disagree")
    return float(np.sum(w ** 2 * np.abs(eps) ** 2))


def tone_spectrum(freq: float, amplitude: float, grid: FrameGrid) -> np.ndarray:
    """Spectrum of one windowed frame of a sine at ``freq``."""
    t = np.arange(grid.frame_len) / grid.sample_rate
    frame = amplitude * np.sin(2 * np.pi * freq * t) * sqrt_hann(grid.frame_len)
    return forward_spectrum(frame[:, None], grid)[:, 0]


def calibration_stimuli(grid: FrameGrid, masker_dbfs: float = -6.0, probe_rel_db: float = -24.0,
                        freq: float = 1000.0):
    """Spectra of the calibration masker and the co-phased probe."""
    masker = tone_spectrum(freq, 10 ** (masker_dbfs / 20), grid)
    return masker, masker * 10 ** (probe_rel_db / 20)


def calibrate(grid: FrameGrid, masker_dbfs: float = -6.0, probe_rel_db: float = -24.0,
              freq: float = 1000.0, full_scale_spl: float = 100.0,
              n_filters: int = 64, f_min: float = 50.0, lf_cutoff_hz: float = 100.0,
              lf_gain: float = 100.0) -> MaskingCalibration:
    """Fit ``Cs`` and ``Ca`` to two detection conditions.

    1. A ``freq`` tone at the threshold in quiet, without masker, gives D = 1
       (ties ``Ca`` to ``Cs``; ``full_scale_spl`` is the level of a 0 dBFS sine).
    2. A ``freq`` tone masker at ``masker_dbfs`` with a co-phased probe
       ``probe_rel_db`` below it gives D = 1.

    The low-frequency override is not part of the masking model and is left
    out of both conditions.
    """
    trial = MaskingCalibration(cs=1.0, ca=1.0, full_scale_spl=full_scale_spl,
                               n_filters=n_filters, f_min=f_min,
                               lf_cutoff_hz=lf_cutoff_hz, lf_gain=lf_gain)
    G = filter_matrix(grid, n_filters, f_min)
    norm = power_norm(grid)

    quiet_amp = 10 ** ((threshold_in_quiet(freq) - full_scale_spl) / 20)
    quiet_probe = tone_spectrum(freq, quiet_amp, grid)
    q = float(np.sum((np.abs(quiet_probe) ** 2) @ G.T) / norm)  # D = cs * q / ca

    masker, probe = calibration_stimuli(grid, masker_dbfs, probe_rel_db, freq)
    if not np.any(masker) or q <= 0:
        raise ValueError("degenerate calibration stimuli")
    E = filter_energies(masker, grid, trial)
    P = (np.abs(probe) ** 2) @ G.T / norm

    def excess(log_cs):
        cs = np.exp(log_cs)
        return cs * np.sum(P / (E + cs * q)) - 1.0

    lo, hi = -60.0, 60.0
    if excess(lo) > 0 or excess(hi) < 0:
        raise ValueError("calibration stimuli admit no solution (probe below threshold in quiet?)")
    log_cs = brentq(excess, lo, hi, xtol=1e-14, rtol=1e-15)
    cs = float(np.exp(log_cs))
    return replace(trial, cs=cs, ca=cs * q)


@lru_cache(maxsize=8)
def default_calibration(grid: FrameGrid) -> MaskingCalibration:
    return calibrate(grid)
