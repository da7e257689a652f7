"""Frame-by-frame spotforming of multichannel loudspeaker signals."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .acoustics import SOUND_SPEED, transfer_vector
from .covariance import DEFAULT_ORDERS, RegionCovariance, TorusDistribution
from .framing import FrameGrid, forward_spectrum, make_frames, overlap_add
from .perceptual import MaskingCalibration, control_point_masker, default_calibration, masking_weights
from .scene import Scene
from .solver import (INFEASIBLE_NUMERICS, FrameProblem, FrameSolution, SolverOptions,
                     solve_frame)

log = logging.getLogger(__name__)

ALPHA_CUTOFF_HZ = 100.0


class SolverError(RuntimeError):
    pass


def energy_weights(grid: FrameGrid, cutoff_hz: float = ALPHA_CUTOFF_HZ) -> np.ndarray:
    """Per-bin objective weights: 0 at and below ``cutoff_hz``, 1 above."""
    return np.where(grid.bin_freqs() <= cutoff_hz, 0.0, 1.0)


def transfer_omegas(grid: FrameGrid) -> np.ndarray:
    """Signed bin frequencies with the Nyquist bin taken as positive."""
    om = grid.bin_omegas().copy()
    om[grid.fft_len // 2] = np.pi * grid.sample_rate
    return om


def region_for_scene(scene: Scene, mu_r: float | None = None, sigma: float = 0.095 / 3,
                     ) -> TorusDistribution:
    return TorusDistribution(center=tuple(scene.vda_center),
                             mu_r=scene.mic_radius if mu_r is None else mu_r,
                             mu_z=scene.mic_height, sigma_r=sigma, sigma_z=sigma)


@dataclass
class FrameRecord:
    index: int
    objective: float
    reference_objective: float
    max_residual: float
    max_distortion: float
    status: str
    iterations: int
    seconds: float
    fallback: bool = False


@dataclass
class SpotformResult:
    signals: np.ndarray
    frames: list[FrameRecord] = field(default_factory=list)
    d: float = 0.0
    bypass: bool = False

    @property
    def n_fallbacks(self) -> int:
        return sum(r.fallback for r in self.frames)


class Spotformer:
    """Holds everything that does not change from frame to frame."""

    def __init__(self, scene: Scene, grid: FrameGrid | None = None,
                 region: TorusDistribution | None = None, orders=DEFAULT_ORDERS,
                 calib: MaskingCalibration | None = None, reverb_beta: float = 0.0,
                 alpha_cutoff_hz: float = ALPHA_CUTOFF_HZ, options: SolverOptions | None = None,
                 c: float = SOUND_SPEED):
        self.scene = scene
        self.grid = grid or FrameGrid()
        self.region = region or region_for_scene(scene)
        self.covariance = RegionCovariance.for_grid(self.grid, scene.loudspeakers, self.region,
                                                    orders=orders, c=c, reverb_beta=reverb_beta)
        self.calib = calib or default_calibration(self.grid)
        self.alpha = energy_weights(self.grid, alpha_cutoff_hz)
        om = transfer_omegas(self.grid)
        # (P, N, L)
        self.transfer = np.stack([transfer_vector(p, scene.loudspeakers, om, c)
                                  for p in scene.control_points])
        self.options = options or SolverOptions()

    @property
    def n_loudspeakers(self) -> int:
        return self.scene.n_loudspeakers

    def build_frame_problem(self, ref_frame, d: float) -> FrameProblem:
        """``ref_frame`` is an analysis-windowed (N_t, L) block as produced by ``make_frames``."""
        ref_frame = np.asarray(ref_frame, dtype=float)
        grid = self.grid
        if ref_frame.shape != (grid.frame_len, self.n_loudspeakers):
            raise ValueError(f"reference frame must be {(grid.frame_len, self.n_loudspeakers)}, "
                             f"got {ref_frame.shape}")
        if not np.all(np.isfinite(ref_frame)):
            raise ValueError("reference frame contains non-finite samples")
        if d < 0:
            raise ValueError("distortion budget d must be >= 0")
        return build_frame_problem(ref_frame, self.grid, self.covariance.factors, self.transfer,
                                   self.alpha, self.calib, d)

    def solve(self, ref_frame, d: float) -> FrameSolution:
        return solve_frame(self.build_frame_problem(ref_frame, d), self.options)

    def process(self, ref_signals, d: float, bypass: bool = False,
                on_failure: str = "fallback", n_jobs: int = 1) -> SpotformResult:
        return process_signals(self, ref_signals, d, bypass=bypass, on_failure=on_failure,
                               n_jobs=n_jobs)


def build_frame_problem(windowed_frame, grid: FrameGrid, factors, transfer, alpha,
                        calib: MaskingCalibration, d: float) -> FrameProblem:
    windowed_frame = np.asarray(windowed_frame, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    N = grid.fft_len
    if alpha.shape != (N,) or np.any(alpha < 0):
        raise ValueError("alpha must hold N non-negative values")
    if not np.allclose(alpha[1:], alpha[1:][::-1]):
        raise ValueError("alpha must be symmetric in frequency")
    spectra = forward_spectrum(windowed_frame, grid)               # (N, L)
    maskers = control_point_masker(spectra[None], transfer)       # (P, N)
    weights = masking_weights(maskers, grid, calib).weights
    return FrameProblem(grid=grid, ref_frame=windowed_frame, ref_spectra=spectra,
                        factors=np.asarray(factors), transfer=np.asarray(transfer),
                        maskers=maskers, weights=weights, alpha=alpha, d=float(d))


def residual_tolerance(d: float) -> float:
    """Allowed constraint violation: relative 1e-6 of d, absolute 1e-9 at d = 0."""
    return 1e-6 * d if d > 0 else 1e-9


def _solve_one(spot: Spotformer, frame, d: float):
    t0 = time.perf_counter()
    sol = solve_frame(spot.build_frame_problem(frame, d), spot.options)
    return sol, time.perf_counter() - t0


_WORKER: dict = {}


def _init_worker(spot, d):
    _WORKER["spot"], _WORKER["d"] = spot, d


def _worker_solve(frame):
    return _solve_one(_WORKER["spot"], frame, _WORKER["d"])


def process_signals(spot: Spotformer, ref_signals, d: float, bypass: bool = False,
                    on_failure: str = "fallback", progress=None,
                    n_jobs: int = 1) -> SpotformResult:
    """Spotform ``ref_signals`` (samples x L) and resynthesise by overlap-add.

    With ``bypass`` the reference frames go straight through analysis and
    synthesis. A frame whose solve fails or violates its distortion budget
    either falls back to the reference frame (``on_failure="fallback"``) or
    raises :class:`SolverError` (``on_failure="fail"``). Frames are solved
    independently; ``n_jobs > 1`` spreads them over worker processes and the
    output does not depend on it.
    """
    if n_jobs < 1:
        raise ValueError("n_jobs must be >= 1")
    if on_failure not in ("fallback", "fail"):
        raise ValueError("on_failure must be 'fallback' or 'fail'")
    x = np.asarray(ref_signals, dtype=float)
    if x.ndim != 2 or x.shape[1] != spot.n_loudspeakers:
        raise ValueError(f"expected (samples, {spot.n_loudspeakers}) reference signals")
    if not np.all(np.isfinite(x)):
        raise ValueError("reference signals contain non-finite samples")
    grid = spot.grid
    frames = make_frames(x, grid)
    out = frames.copy()
    records = []
    if bypass:
        return SpotformResult(signals=overlap_add(out, grid, x.shape[0]), d=float(d), bypass=True)

    if n_jobs == 1:
        results = (_solve_one(spot, fr, d) for fr in frames)
        pool = None
    else:
        pool = ProcessPoolExecutor(max_workers=n_jobs, initializer=_init_worker,
                                   initargs=(spot, d))
        results = pool.map(_worker_solve, frames, chunksize=8)
    try:
        for i, (sol, seconds) in enumerate(results):
            bad = (sol.solver_status == INFEASIBLE_NUMERICS
                   or sol.max_constraint_residual > residual_tolerance(d))
            if bad:
                msg = (f"frame {i}: status {sol.solver_status}, "
                       f"residual {sol.max_constraint_residual:.3e}")
                if on_failure == "fail":
                    raise SolverError(msg)
                log.warning("%s; using the reference frame", msg)
            else:
                out[i] = sol.frame
            records.append(FrameRecord(
                index=i, objective=sol.objective, reference_objective=sol.reference_objective,
                max_residual=sol.max_constraint_residual,
                max_distortion=float(np.max(sol.distortions)) if sol.distortions.size else 0.0,
                status=sol.solver_status, iterations=sol.iterations,
                seconds=seconds, fallback=bad))
            if progress is not None:
                progress(i, len(frames))
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)
    y = overlap_add(out, grid, x.shape[0])
    return SpotformResult(signals=y, frames=records, d=float(d), bypass=bypass)
