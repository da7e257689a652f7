"""Scene geometry: room, loudspeakers, device microphone array and listener."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .acoustics import RoomBox

N_CONTROL_POINTS = 9
CONTROL_SIGMA = 0.2 / 3

# Home-cinema layout in a 6 x 5 x 3 m room: five loudspeakers on a 2.2 m circle
# around the seated listener (0, +-30, +-110 degrees), the device on the TV
# console beside the centre loudspeaker.
DEFAULT_ROOM = (6.0, 5.0, 3.0)
DEFAULT_USER = (3.0, 3.3, 1.15)
DEFAULT_VDA = (3.45, 1.05, 0.99)
LOUDSPEAKER_RADIUS = 2.2
LOUDSPEAKER_HEIGHT = 1.0
LOUDSPEAKER_AZIMUTHS = (0.0, -30.0, 30.0, -110.0, 110.0)


def home_cinema_loudspeakers(user=DEFAULT_USER, radius=LOUDSPEAKER_RADIUS,
                             height=LOUDSPEAKER_HEIGHT, azimuths=LOUDSPEAKER_AZIMUTHS) -> np.ndarray:
    """Loudspeakers around ``user``, azimuth 0 facing the front wall (-y)."""
    az = np.deg2rad(np.asarray(azimuths, dtype=float))
    x = user[0] + radius * np.sin(az)
    y = user[1] - radius * np.cos(az)
    return np.stack([x, y, np.full_like(x, height)], axis=1)


@dataclass
class Scene:
    room: RoomBox
    loudspeakers: np.ndarray
    vda_center: np.ndarray
    user: np.ndarray
    control_points: np.ndarray
    mic_radius: float = 0.1
    mic_height: float = 0.99
    n_mics: int = 8
    mic_rotation: float = 0.0
    seed: int = 0
    extra: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.loudspeakers = np.atleast_2d(np.asarray(self.loudspeakers, dtype=float))
        self.vda_center = np.asarray(self.vda_center, dtype=float)
        self.user = np.asarray(self.user, dtype=float)
        self.control_points = np.atleast_2d(np.asarray(self.control_points, dtype=float))
        self.validate()

    @property
    def n_loudspeakers(self) -> int:
        return self.loudspeakers.shape[0]

    def mic_positions(self) -> np.ndarray:
        ang = self.mic_rotation + 2 * np.pi * np.arange(self.n_mics) / self.n_mics
        cx, cy = self.vda_center[:2]
        return np.stack([cx + self.mic_radius * np.cos(ang), cy + self.mic_radius * np.sin(ang),
                         np.full(self.n_mics, self.mic_height)], axis=1)

    def reference_mic(self) -> int:
        """Index of the microphone nearest to the user."""
        return int(np.argmin(np.linalg.norm(self.mic_positions() - self.user, axis=1)))

    def validate(self):
        groups = {"loudspeaker": self.loudspeakers, "microphone": self.mic_positions(),
                  "user": self.user[None, :], "control point": self.control_points}
        for name, pts in groups.items():
            for p in pts:
                if not np.all(np.isfinite(p)):
                    raise ValueError(f"{name} position {p.tolist()} is not finite")
                if not self.room.contains(p):
                    raise ValueError(f"{name} position {p.tolist()} lies outside the room")
        if self.mic_radius <= 0 or self.n_mics < 1:
            raise ValueError("microphone array needs a positive radius and at least one mic")


def sample_control_points(user, n: int, sigma: float, rng: np.random.Generator) -> np.ndarray:
    return np.asarray(user, dtype=float)[None, :] + sigma * rng.standard_normal((n, 3))


def default_scene(seed: int = 0, t60: float = 0.0, n_control: int = N_CONTROL_POINTS,
                  control_sigma: float = CONTROL_SIGMA) -> Scene:
    rng = np.random.default_rng(seed)
    user = np.asarray(DEFAULT_USER)
    return Scene(room=RoomBox(DEFAULT_ROOM, t60=t60),
                 loudspeakers=home_cinema_loudspeakers(user),
                 vda_center=np.asarray(DEFAULT_VDA), user=user,
                 control_points=sample_control_points(user, n_control, control_sigma, rng),
                 seed=seed)


def perturb_scene(scene: Scene, loudspeaker_sigma: float = 0.05, rotation_sigma: float = 5.0,
                  seed: int = 0) -> Scene:
    """Displace loudspeakers (i.i.d. Gaussian, metres) and rotate the mic array
    about its centre (Gaussian, degrees). Loudspeakers leaving the room are redrawn."""
    rng = np.random.default_rng(seed)
    lsp = scene.loudspeakers.copy()
    for i in range(lsp.shape[0]):
        for _ in range(1000):
            cand = scene.loudspeakers[i] + loudspeaker_sigma * rng.standard_normal(3)
            if scene.room.contains(cand):
                lsp[i] = cand
                break
        else:
            raise RuntimeError("could not place a perturbed loudspeaker inside the room")
    rot = math.radians(rotation_sigma) * rng.standard_normal()
    return replace(scene, loudspeakers=lsp, mic_rotation=scene.mic_rotation + rot)
