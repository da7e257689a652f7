"""Acoustic transfer models.

Free-field direct-path transfer functions (used by the optimizer), an
image-source room impulse response generator (used for evaluation only) and
the coherence matrix of a spherically isotropic field.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SOUND_SPEED = 342.0
MIN_DISTANCE = 1e-6
FRACTIONAL_DELAY_TAPS = 81


@dataclass(frozen=True)
class RoomBox:
    dimensions: tuple[float, float, float]
    t60: float = 0.0
    sound_speed: float = SOUND_SPEED

    def __post_init__(self):
        dims = tuple(float(v) for v in self.dimensions)
        if len(dims) != 3 or min(dims) <= 0 or not all(map(math.isfinite, dims)):
            raise ValueError("RoomBox.dimensions must be three positive lengths")
        object.__setattr__(self, "dimensions", dims)
        if self.t60 < 0:
            raise ValueError("RoomBox.t60 must be >= 0")
        if self.sound_speed <= 0:
            raise ValueError("RoomBox.sound_speed must be > 0")

    @property
    def volume(self) -> float:
        x, y, z = self.dimensions
        return x * y * z

    @property
    def surface(self) -> float:
        x, y, z = self.dimensions
        return 2 * (x * y + x * z + y * z)

    def contains(self, point) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p > 0) and np.all(p < np.asarray(self.dimensions)))

    def reflection_coefficient(self) -> float:
        """Uniform wall reflection coefficient from Sabine's formula."""
        if self.t60 == 0:
            return 0.0
        alpha = 24 * math.log(10.0) * self.volume / (self.sound_speed * self.surface * self.t60)
        if alpha > 1:
            raise ValueError(
                f"t60={self.t60} s is too short for this room (Sabine absorption {alpha:.3f} > 1)")
        beta = math.sqrt(1 - alpha)
        if beta >= 1:
            raise ValueError("reflection coefficient must be < 1")
        return beta


@dataclass
class ImpulseResponse:
    taps: np.ndarray
    sample_rate: int


def _distance(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.linalg.norm(a - b, axis=-1)


def free_field_rtf(source, receiver, omega, c: float = SOUND_SPEED):
    """Direct-path transfer ``exp(-j w r / c) / (4 pi r)``.

    Broadcasts over leading position axes and over ``omega``.
    """
    dist = _distance(source, receiver)
    if np.any(dist <= MIN_DISTANCE):
        raise ValueError("source and receiver coincide; the free-field transfer is singular")
    omega = np.asarray(omega, dtype=float)
    out = np.exp(-1j * omega * dist / c) / (4 * np.pi * dist)
    return out[()] if out.ndim == 0 else out


def transfer_vector(receiver, loudspeakers, omega, c: float = SOUND_SPEED) -> np.ndarray:
    """Loudspeaker-to-receiver transfers.

    Returns shape ``(L,)`` for a scalar ``omega`` and ``(len(omega), L)`` for
    a vector of frequencies.
    """
    lsp = np.atleast_2d(np.asarray(loudspeakers, dtype=float))
    dist = _distance(np.asarray(receiver, dtype=float)[None, :], lsp)
    if np.any(dist <= MIN_DISTANCE):
        raise ValueError("receiver coincides with a loudspeaker")
    omega = np.asarray(omega, dtype=float)
    phase = -1j * omega[..., None] * dist / c
    return np.exp(phase) / (4 * np.pi * dist)


def isotropic_covariance(positions, omega: float, c: float = SOUND_SPEED) -> np.ndarray:
    """Coherence ``sin(w d/c) / (w d/c)`` of a spherically isotropic field."""
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    return np.sinc(omega * d / (np.pi * c))


def _fractional_delay_kernel(offsets: np.ndarray) -> np.ndarray:
    # Hann-windowed sinc evaluated at (tap index - fractional delay)
    half = FRACTIONAL_DELAY_TAPS / 2
    win = np.where(np.abs(offsets) < half, 0.5 * (1 + np.cos(2 * np.pi * offsets / FRACTIONAL_DELAY_TAPS)), 0.0)
    return win * np.sinc(offsets)


def _image_range(length_m: float, room_len: float) -> np.ndarray:
    m = int(math.ceil(length_m / (2 * room_len))) + 1
    return np.arange(-m, m + 1)


def simulate_rir(room: RoomBox, source, receiver, sample_rate: int,
                 max_order: int | None = None, length: int | None = None,
                 floor_db: float = -60.0) -> ImpulseResponse:
    """Image-source impulse response in a shoebox room.

    Images are enumerated on the Allen-Berkley lattice; each contributes
    ``beta**n_reflections / (4 pi r)`` delayed by ``r / c`` with an 81-tap
    Hann-windowed sinc. Images weaker than ``floor_db`` relative to the direct
    path, later than ``length`` or of reflection order above ``max_order`` are
    dropped. ``t60 == 0`` gives the direct path only.
    """
    src = np.asarray(source, dtype=float)
    rcv = np.asarray(receiver, dtype=float)
    for name, p in (("source", src), ("receiver", rcv)):
        if not room.contains(p):
            raise ValueError(f"{name} {p.tolist()} lies outside the room")
    c = room.sound_speed
    beta = room.reflection_coefficient()
    direct = float(np.linalg.norm(src - rcv))
    if direct <= MIN_DISTANCE:
        raise ValueError("source and receiver coincide")
    half = FRACTIONAL_DELAY_TAPS // 2

    if beta == 0.0 or max_order == 0:
        dists = np.array([direct])
        gains = np.array([1.0 / (4 * np.pi * direct)])
        if length is None:
            length = int(math.ceil(direct / c * sample_rate)) + half + 1
    else:
        if length is None:
            length = int(math.ceil(room.t60 * sample_rate))
            length = max(length, int(math.ceil(direct / c * sample_rate)) + half + 1)
        max_dist = length / sample_rate * c
        dims = np.asarray(room.dimensions)
        grids = [_image_range(max_dist, dims[i]) for i in range(3)]
        mx, my, mz = np.meshgrid(*grids, indexing="ij")
        lattice = np.stack([mx.ravel(), my.ravel(), mz.ravel()], axis=1)
        dists_all = []
        orders_all = []
        for q in np.ndindex(2, 2, 2):
            q = np.asarray(q)
            img = (1 - 2 * q) * src + 2 * lattice * dims
            dists_all.append(np.linalg.norm(img - rcv, axis=1))
            orders_all.append(np.abs(lattice - q).sum(axis=1) + np.abs(lattice).sum(axis=1))
        dists = np.concatenate(dists_all)
        orders = np.concatenate(orders_all)
        keep = dists <= max_dist
        if max_order is not None:
            keep &= orders <= max_order
        dists = dists[keep]
        orders = orders[keep]
        gains = beta ** orders / (4 * np.pi * dists)
        keep = gains >= 10 ** (floor_db / 20) / (4 * np.pi * direct)
        dists, gains = dists[keep], gains[keep]

    taps = np.zeros(length)
    delays = dists / c * sample_rate
    base = np.floor(delays).astype(int)
    offs = np.arange(-half, half + 1)
    idx = base[:, None] + offs[None, :]
    vals = gains[:, None] * _fractional_delay_kernel(idx - delays[:, None])
    ok = (idx >= 0) & (idx < length)
    np.add.at(taps, idx[ok], vals[ok])
    return ImpulseResponse(taps=taps, sample_rate=sample_rate)
