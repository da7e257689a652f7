"""Experiment configuration: YAML loading, validation and resolved dumps."""
from __future__ import annotations

import dataclasses
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .acoustics import RoomBox
from .covariance import DEFAULT_ORDERS, TorusDistribution, default_reverb_beta
from .framing import FrameGrid
from .scene import (CONTROL_SIGMA, DEFAULT_ROOM, DEFAULT_USER, DEFAULT_VDA, N_CONTROL_POINTS,
                    Scene, home_cinema_loudspeakers, sample_control_points)
from .solver import SolverOptions

CONFIG_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class SceneConfig:
    room: list = field(default_factory=lambda: list(DEFAULT_ROOM))
    t60: float = 0.0
    loudspeakers: list | None = None
    vda_center: list = field(default_factory=lambda: list(DEFAULT_VDA))
    user: list = field(default_factory=lambda: list(DEFAULT_USER))
    mic_radius: float = 0.1
    mic_height: float = 0.99
    n_mics: int = 8
    n_control: int = N_CONTROL_POINTS
    control_sigma: float = CONTROL_SIGMA
    seed: int = 0


@dataclass
class GridConfig:
    frame_len: int = 256
    pad_len: int = 256
    hop: int = 128
    sample_rate: int = 16000


@dataclass
class RegionConfig:
    # None: follow the microphone array radius / height
    mu_r: float | None = None
    mu_z: float | None = None
    sigma_r: float = 0.095 / 3
    sigma_z: float = 0.095 / 3
    orders: list = field(default_factory=lambda: list(DEFAULT_ORDERS))
    # late-reverb term as a fraction of the region covariance trace (0: off)
    reverb_ratio: float = 0.0


@dataclass
class SweepConfig:
    d_values: list = field(default_factory=lambda: [1.0, 5.0, 20.0])
    runs: int = 1
    loudspeaker_sigma: float = 0.05
    rotation_sigma: float = 5.0
    sir_db: list = field(default_factory=lambda: [0.0])
    # white-noise reference used when no input WAVs are configured
    duration: float = 2.0
    noise_rms: float = 0.05


@dataclass
class SolverConfig:
    rtol: float = 1e-6
    mu: float = 20.0
    max_newton: int = 300
    center_tol: float = 1.0
    on_failure: str = "fallback"
    n_jobs: int = 1


@dataclass
class ExperimentConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    region: RegionConfig = field(default_factory=RegionConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    alpha_cutoff_hz: float = 100.0
    inputs: list = field(default_factory=list)
    commands: list = field(default_factory=list)
    output_dir: str = "out"
    version: int = CONFIG_VERSION

    # -- derived objects -------------------------------------------------
    def frame_grid(self) -> FrameGrid:
        return FrameGrid(**asdict(self.grid))

    def room(self) -> RoomBox:
        return RoomBox(tuple(self.scene.room), t60=self.scene.t60)

    def build_scene(self, seed: int | None = None) -> Scene:
        sc = self.scene
        seed = sc.seed if seed is None else seed
        user = np.asarray(sc.user, dtype=float)
        lsp = (home_cinema_loudspeakers(tuple(user)) if sc.loudspeakers is None
               else np.asarray(sc.loudspeakers, dtype=float))
        rng = np.random.default_rng(seed)
        return Scene(room=self.room(), loudspeakers=lsp, vda_center=sc.vda_center, user=user,
                     control_points=sample_control_points(user, sc.n_control, sc.control_sigma, rng),
                     mic_radius=sc.mic_radius, mic_height=sc.mic_height, n_mics=sc.n_mics,
                     seed=seed)

    def distribution(self) -> TorusDistribution:
        r = self.region
        return TorusDistribution(center=tuple(self.scene.vda_center),
                                 mu_r=self.scene.mic_radius if r.mu_r is None else r.mu_r,
                                 mu_z=self.scene.mic_height if r.mu_z is None else r.mu_z,
                                 sigma_r=r.sigma_r, sigma_z=r.sigma_z)

    def solver_options(self) -> SolverOptions:
        s = self.solver
        return SolverOptions(rtol=s.rtol, mu=s.mu, max_newton=s.max_newton, center_tol=s.center_tol)

    def reverb_beta(self, scene: Scene) -> float:
        if self.region.reverb_ratio == 0:
            return 0.0
        return default_reverb_beta(self.frame_grid(), scene.loudspeakers, self.distribution(),
                                   tuple(self.region.orders), ratio=self.region.reverb_ratio)

    def spotformer(self, seed: int | None = None):
        from .spotformer import Spotformer
        scene = self.build_scene(seed)
        return Spotformer(scene, grid=self.frame_grid(), region=self.distribution(),
                          orders=tuple(self.region.orders), reverb_beta=self.reverb_beta(scene),
                          alpha_cutoff_hz=self.alpha_cutoff_hz, options=self.solver_options())


def _check(cond: bool, name: str, msg: str):
    if not cond:
        raise ConfigError(f"{name}: {msg}")


def _point(value, name: str):
    _check(isinstance(value, (list, tuple)) and len(value) == 3, name, "expected [x, y, z]")
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: coordinates must be numbers") from None


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    """Check every invariant of the objects the config describes; raises ConfigError."""
    sc = cfg.scene
    sc.room = _point(sc.room, "scene.room")
    sc.vda_center = _point(sc.vda_center, "scene.vda_center")
    sc.user = _point(sc.user, "scene.user")
    if sc.loudspeakers is not None:
        _check(isinstance(sc.loudspeakers, list) and len(sc.loudspeakers) > 0,
               "scene.loudspeakers", "expected a non-empty list of points")
        sc.loudspeakers = [_point(p, f"scene.loudspeakers[{i}]") for i, p in enumerate(sc.loudspeakers)]
    _check(sc.n_control >= 1, "scene.n_control", "must be >= 1")
    _check(sc.control_sigma >= 0, "scene.control_sigma", "must be >= 0")
    _check(sc.n_mics >= 1, "scene.n_mics", "must be >= 1")
    try:
        room = cfg.room()
        room.reflection_coefficient()
    except ValueError as exc:
        raise ConfigError(f"scene.room/t60: {exc}") from None
    try:
        cfg.frame_grid()
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None
    r = cfg.region
    for name in ("sigma_r", "sigma_z"):
        _check(getattr(r, name) > 0, f"region.{name}", "TorusDistribution requires a value > 0")
    _check(r.mu_r is None or abs(r.mu_r - sc.mic_radius) < 1e-12, "region.mu_r",
           "must match scene.mic_radius")
    _check(r.mu_z is None or abs(r.mu_z - sc.mic_height) < 1e-12, "region.mu_z",
           "must match scene.mic_height")
    _check(isinstance(r.orders, list) and len(r.orders) == 3 and all(
        isinstance(o, int) and o >= 2 for o in r.orders), "region.orders",
        "expected three integers >= 2 (r, theta, z)")
    _check(r.reverb_ratio >= 0, "region.reverb_ratio", "must be >= 0")
    sw = cfg.sweep
    _check(isinstance(sw.d_values, list) and len(sw.d_values) > 0, "sweep.d_values",
           "expected a non-empty list")
    sw.d_values = [float(v) for v in sw.d_values]
    _check(all(v >= 0 for v in sw.d_values), "sweep.d_values", "distortion budgets must be >= 0")
    _check(sw.runs >= 1, "sweep.runs", "must be >= 1")
    _check(sw.loudspeaker_sigma >= 0, "sweep.loudspeaker_sigma", "must be >= 0")
    _check(sw.rotation_sigma >= 0, "sweep.rotation_sigma", "must be >= 0")
    sw.sir_db = [float(v) for v in sw.sir_db]
    _check(sw.duration > 0, "sweep.duration", "must be > 0")
    _check(sw.noise_rms > 0, "sweep.noise_rms", "must be > 0")
    so = cfg.solver
    _check(so.on_failure in ("fallback", "fail"), "solver.on_failure", "'fallback' or 'fail'")
    _check(so.n_jobs >= 1, "solver.n_jobs", "must be >= 1")
    _check(so.rtol > 0 and so.mu > 1 and so.max_newton >= 1, "solver",
           "need rtol > 0, mu > 1, max_newton >= 1")
    _check(cfg.alpha_cutoff_hz >= 0, "alpha_cutoff_hz", "must be >= 0")
    _check(cfg.version == CONFIG_VERSION, "version", f"only version {CONFIG_VERSION} is supported")
    try:
        scene = cfg.build_scene()
        cfg.distribution()
    except ValueError as exc:
        raise ConfigError(f"scene: {exc}") from None
    if len(cfg.inputs) not in (0, scene.n_loudspeakers):
        raise ConfigError(f"inputs: expected {scene.n_loudspeakers} WAV paths, got {len(cfg.inputs)}")
    return cfg


def _from_dict(cls, data, path: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{path or 'config'}: unknown field(s) {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        f = known[name]
        sub = f"{path}.{name}" if path else name
        default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
        if dataclasses.is_dataclass(default):
            kwargs[name] = _from_dict(type(default), value, sub)
        elif isinstance(default, bool):
            _check(isinstance(value, bool), sub, "expected true/false")
            kwargs[name] = value
        elif isinstance(default, int) and not isinstance(default, bool):
            _check(isinstance(value, int) and not isinstance(value, bool), sub, "expected an integer")
            kwargs[name] = value
        elif isinstance(default, float) or (default is None and name in ("mu_r", "mu_z")):
            if value is None and default is None:
                kwargs[name] = None
                continue
            _check(isinstance(value, (int, float)) and not isinstance(value, bool), sub,
                   "expected a number")
            kwargs[name] = float(value)
        elif isinstance(default, str):
            _check(isinstance(value, str), sub, "expected a string")
            kwargs[name] = value
        else:
            _check(value is None or isinstance(value, list), sub, "expected a list")
            kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data) -> ExperimentConfig:
    return validate(_from_dict(ExperimentConfig, data, ""))


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: no such file")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" (line {mark.line + 1}, column {mark.column + 1})" if mark else ""
        raise ConfigError(f"{path}: YAML parse error{where}: {getattr(exc, 'problem', exc)}") from None
    return config_from_dict(data)


def dump_config(cfg: ExperimentConfig) -> str:
    """Resolved config as YAML; loading it back gives an identical config."""
    header = "# resolved spotformer experiment configuration\n"
    return header + yaml.safe_dump(asdict(cfg), sort_keys=False, default_flow_style=None)
