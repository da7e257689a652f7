"""Loudspeaker spotformer: loudspeaker signal optimisation that forms a
low-energy region around a device microphone array while bounding the
perceptual distortion heard near the listener."""
from .acoustics import RoomBox, free_field_rtf, simulate_rir
from .covariance import RegionCovariance, TorusDistribution, region_covariance
from .framing import FrameGrid, make_frames, overlap_add
from .perceptual import MaskingCalibration, calibrate, distortion, masking_weights
from .scene import Scene, default_scene, perturb_scene
from .solver import FrameProblem, FrameSolution, SolverOptions, solve_frame
from .spotformer import Spotformer, process_signals

__version__ = "0.1.0"
