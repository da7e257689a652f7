"""Microphone rendering, energy-reduction and SIR metrics, perturbation sweeps."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import oaconvolve

from .acoustics import ImpulseResponse, simulate_rir, transfer_vector
from .framing import forward_spectrum, make_frames
from .perceptual import control_point_masker, masking_weights
from .scene import CONTROL_SIGMA, Scene, perturb_scene, sample_control_points
from .spotformer import Spotformer, process_signals, transfer_omegas

log = logging.getLogger(__name__)


@dataclass
class RenderedAudio:
    signals: np.ndarray          # (samples, mics)
    sample_rate: int

    def __post_init__(self):
        self.signals = np.asarray(self.signals, dtype=float)
        if self.signals.ndim != 2:
            raise ValueError("RenderedAudio.signals must be (samples, mics)")

    @property
    def n_mics(self) -> int:
        return self.signals.shape[1]


def scene_rirs(scene: Scene, sample_rate: int, anechoic: bool | None = None,
               mics=None) -> list[list[ImpulseResponse]]:
    """RIRs indexed ``[loudspeaker][mic]``; anechoic unless the room has a T60."""
    mics = scene.mic_positions() if mics is None else np.atleast_2d(mics)
    room = scene.room
    if anechoic or (anechoic is None and room.t60 == 0):
        room = replace(room, t60=0.0)
    return [[simulate_rir(room, src, m, sample_rate) for m in mics] for src in scene.loudspeakers]


def render(playback, rirs) -> RenderedAudio:
    """Microphone signals ``sum_l playback_l * rir_lm`` (full convolution)."""
    x = np.asarray(playback, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if len(rirs) != x.shape[1]:
        raise ValueError(f"need RIRs for {x.shape[1]} loudspeakers, got {len(rirs)}")
    n_mics = len(rirs[0])
    if any(len(row) != n_mics for row in rirs):
        raise ValueError("every loudspeaker needs an RIR for every microphone")
    rates = {h.sample_rate for row in rirs for h in row}
    if len(rates) != 1:
        raise ValueError("RIRs disagree on the sample rate")
    taps = max(len(h.taps) for row in rirs for h in row)
    out = np.zeros((x.shape[0] + taps - 1, n_mics))
    for l, row in enumerate(rirs):
        for m, h in enumerate(row):
            y = oaconvolve(x[:, l], h.taps)
            out[:y.size, m] += y
    return RenderedAudio(out, rates.pop())


def energy_reduction_db(ref: RenderedAudio, out: RenderedAudio):
    """Per-mic ``10 log10(E_ref / E_out)`` and its mean over mics (dB averaging)."""
    a, b = ref.signals, out.signals
    if a.shape != b.shape:
        raise ValueError(f"renders differ in shape: {a.shape} vs {b.shape}")
    e_ref = np.sum(a ** 2, axis=0)
    e_out = np.sum(b ** 2, axis=0)
    if np.any(e_ref == 0) or np.any(e_out == 0):
        raise ValueError("energy reduction undefined for a silent render")
    per_mic = 10 * np.log10(e_ref / e_out)
    return per_mic, float(np.mean(per_mic))


def signal_energy(x) -> float:
    return float(np.sum(np.asarray(x, dtype=float) ** 2))


def sir_db(command, interferer) -> float:
    return 10 * np.log10(signal_energy(command) / signal_energy(interferer))


def mix_at_sir(command, interferer, sir: float) -> float:
    """Gain ``g`` giving ``10 log10(E(g command) / E(interferer)) = sir``."""
    ec, ei = signal_energy(command), signal_energy(interferer)
    if ec == 0 or ei == 0:
        raise ValueError("mix_at_sir needs a non-silent command and interferer")
    return float(np.sqrt(ei / ec * 10 ** (sir / 10)))


def validation_points(scene: Scene, n: int = 9, sigma: float = CONTROL_SIGMA,
                      seed: int = 1) -> np.ndarray:
    """Points around the user drawn from a stream independent of the control points."""
    rng = np.random.default_rng([seed, 0x5EED])
    return sample_control_points(scene.user, n, sigma, rng)


def validation_distortion(spot: Spotformer, ref_signals, out_signals, points) -> np.ndarray:
    """Per-frame distortion (frames x points) at ``points`` under the free-field model."""
    grid = spot.grid
    om = transfer_omegas(grid)
    V = np.stack([transfer_vector(p, spot.scene.loudspeakers, om) for p in points])
    ref_f = forward_spectrum(make_frames(ref_signals, grid), grid)     # (F, N, L)
    out_f = forward_spectrum(make_frames(out_signals, grid), grid)
    masker = control_point_masker(ref_f[:, None], V[None])             # (F, P, N)
    received = control_point_masker(out_f[:, None], V[None])
    w = masking_weights(masker, grid, spot.calib).weights
    return np.sum(w ** 2 * np.abs(received - masker) ** 2, axis=-1)


@dataclass
class RunRecord:
    d: float
    run: int
    per_mic_db: np.ndarray
    mean_db: float
    frame_max_distortion: float
    frame_mean_distortion: float
    max_residual: float
    fallbacks: int


@dataclass
class SweepReport:
    records: list[RunRecord] = field(default_factory=list)
    note: str = "mean over microphones taken in dB"

    def d_values(self) -> list[float]:
        return sorted({r.d for r in self.records})

    def summary(self) -> dict[float, tuple[float, float]]:
        out = {}
        for d in self.d_values():
            vals = np.array([r.mean_db for r in self.records if r.d == d])
            out[d] = (float(vals.mean()), float(vals.std()))
        return out


def run_sweep(scene: Scene, ref_signals, d_values, runs: int = 1,
              loudspeaker_sigma: float = 0.05, rotation_sigma: float = 5.0,
              seed: int = 0, spot: Spotformer | None = None, on_failure: str = "fallback",
              n_jobs: int = 1) -> SweepReport:
    """Spotform once per d with the nominal scene; render in ``runs`` perturbed scenes.

    The algorithm always sees the unperturbed geometry, so only the
    evaluation RIRs change between runs. With both sigmas zero every run
    renders the nominal scene.
    """
    spot = spot or Spotformer(scene)
    ref_signals = np.asarray(ref_signals, dtype=float)
    sr = spot.grid.sample_rate
    scenes = []
    for run in range(runs):
        if loudspeaker_sigma == 0 and rotation_sigma == 0:
            scenes.append(scene)
        else:
            scenes.append(perturb_scene(scene, loudspeaker_sigma, rotation_sigma,
                                        seed=np.random.SeedSequence([seed, run]).generate_state(1)[0]))
    rirs = [scene_rirs(s, sr) for s in scenes]
    ref_renders = [render(ref_signals, h) for h in rirs]
    report = SweepReport()
    for d in d_values:
        res = process_signals(spot, ref_signals, d, on_failure=on_failure, n_jobs=n_jobs)
        dist = np.array([r.max_distortion for r in res.frames]) if res.frames else np.zeros(1)
        for run, h in enumerate(rirs):
            per_mic, mean = energy_reduction_db(ref_renders[run], render(res.signals, h))
            report.records.append(RunRecord(
                d=float(d), run=run, per_mic_db=per_mic, mean_db=mean,
                frame_max_distortion=float(dist.max()), frame_mean_distortion=float(dist.mean()),
                max_residual=max((r.max_residual for r in res.frames), default=0.0),
                fallbacks=res.n_fallbacks))
            log.info("d=%g run=%d mean reduction %.2f dB", d, run, mean)
    return report
