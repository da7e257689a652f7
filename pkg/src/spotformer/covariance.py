"""Spatial covariance of the low-energy region.

The region around the device is described by a torus-shaped probability
density over cylindrical coordinates (r, theta, z) centred on the array.
Its covariance ``R(w) = E{v v^H}`` of the loudspeaker transfer vectors is
obtained by tensor-product quadrature: Clenshaw-Curtis in r and z, the
trapezoid rule in the periodic azimuth.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .acoustics import SOUND_SPEED, isotropic_covariance
from .framing import FrameGrid

TRUNCATION_SIGMAS = 6.0
DEFAULT_ORDERS = (32, 64, 24)


@dataclass(frozen=True)
class TorusDistribution:
    center: tuple[float, float, float]
    mu_r: float = 0.1
    mu_z: float = 0.99
    sigma_r: float = 0.095 / 3
    sigma_z: float = 0.095 / 3

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if self.sigma_r <= 0:
            raise ValueError("TorusDistribution.sigma_r must be > 0")
        if self.sigma_z <= 0:
            raise ValueError("TorusDistribution.sigma_z must be > 0")
        if self.mu_r < 0:
            raise ValueError("TorusDistribution.mu_r must be >= 0")

    @property
    def c_r(self) -> float:
        """Normaliser of the radial Gaussian truncated to r >= 0."""
        return 1.0 / float(ndtr(self.mu_r / self.sigma_r))

    def bounds(self):
        r_hi = self.mu_r + TRUNCATION_SIGMAS * self.sigma_r
        z_lo = self.mu_z - TRUNCATION_SIGMAS * self.sigma_z
        z_hi = self.mu_z + TRUNCATION_SIGMAS * self.sigma_z
        return (0.0, r_hi), (0.0, 2 * np.pi), (z_lo, z_hi)

    def to_cartesian(self, r, theta, z) -> np.ndarray:
        cx, cy, _ = self.center
        r = np.asarray(r, dtype=float)
        return np.stack([cx + r * np.cos(theta), cy + r * np.sin(theta),
                         np.broadcast_to(z, r.shape)], axis=-1)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` points (cartesian) from the density, by rejection in r."""
        r = np.empty(0)
        while r.size < n:
            draw = rng.normal(self.mu_r, self.sigma_r, size=2 * (n - r.size) + 16)
            r = np.concatenate([r, draw[draw >= 0]])
        r = r[:n]
        theta = rng.uniform(0, 2 * np.pi, size=n)
        z = rng.normal(self.mu_z, self.sigma_z, size=n)
        return self.to_cartesian(r, theta, z)


def torus_pdf(r, theta, z, dist: TorusDistribution):
    """Density over the coordinate tuple (r, theta, z), i.e. w.r.t. dr dtheta dz."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("torus_pdf is defined for r >= 0 only")
    z = np.asarray(z, dtype=float)
    expo = ((z - dist.mu_z) / dist.sigma_z) ** 2 + ((r - dist.mu_r) / dist.sigma_r) ** 2
    val = dist.c_r / (4 * np.pi ** 2 * dist.sigma_r * dist.sigma_z) * np.exp(-0.5 * expo)
    return val * np.ones_like(np.asarray(theta, dtype=float))


@dataclass
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if len(self.nodes) != len(self.weights):
            raise ValueError("QuadratureRule needs as many weights as nodes")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("QuadratureRule weights must be finite")

    def integrate(self, values) -> float:
        return np.tensordot(self.weights, values, axes=(0, 0))


def clenshaw_curtis(order: int, a: float = -1.0, b: float = 1.0) -> QuadratureRule:
    """Clenshaw-Curtis rule with ``order`` nodes (Chebyshev extrema) on [a, b].

    Exact for polynomials of degree ``order - 1``.
    """
    if order < 2:
        raise ValueError("clenshaw_curtis needs order >= 2")
    if not a < b:
        raise ValueError("clenshaw_curtis needs a < b")
    n = order - 1
    theta = np.pi * np.arange(order) / n
    x = np.cos(theta)
    w = np.zeros(order)
    v = np.ones(order - 2)
    interior = theta[1:-1]
    if n % 2 == 0:
        w[0] = w[-1] = 1.0 / (n * n - 1)
        for k in range(1, n // 2):
            v -= 2 * np.cos(2 * k * interior) / (4 * k * k - 1)
        v -= np.cos(n * interior) / (n * n - 1)
    else:
        w[0] = w[-1] = 1.0 / (n * n)
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2 * np.cos(2 * k * interior) / (4 * k * k - 1)
    w[1:-1] = 2 * v / n
    # map from [-1, 1] (nodes listed from +1 to -1) to [a, b]
    nodes = 0.5 * (b - a) * x[::-1] + 0.5 * (a + b)
    return QuadratureRule(nodes=nodes, weights=0.5 * (b - a) * w[::-1])


def trapezoid_periodic(order: int, a: float = 0.0, b: float = 2 * np.pi) -> QuadratureRule:
    nodes = a + (b - a) * np.arange(order) / order
    return QuadratureRule(nodes=nodes, weights=np.full(order, (b - a) / order))


def torus_quadrature(dist: TorusDistribution, orders=DEFAULT_ORDERS) -> QuadratureRule:
    """Tensor rule over (r, theta, z) with the density folded into the weights."""
    n_r, n_t, n_z = orders
    (r0, r1), (t0, t1), (z0, z1) = dist.bounds()
    rr = clenshaw_curtis(n_r, r0, r1)
    tt = trapezoid_periodic(n_t, t0, t1)
    zz = clenshaw_curtis(n_z, z0, z1)
    R, T, Z = np.meshgrid(rr.nodes, tt.nodes, zz.nodes, indexing="ij")
    W = rr.weights[:, None, None] * tt.weights[None, :, None] * zz.weights[None, None, :]
    W = W * torus_pdf(R, T, Z, dist)
    nodes = np.stack([R.ravel(), T.ravel(), Z.ravel()], axis=1)
    return QuadratureRule(nodes=nodes, weights=W.ravel())


def covariance_from_points(omega, loudspeakers, points, weights, c: float = SOUND_SPEED) -> np.ndarray:
    """Weighted sum of ``v v^H`` over receiver points.

    ``omega`` may be a scalar (result L x L) or a vector (result n x L x L).
    """
    scalar = np.ndim(omega) == 0
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    lsp = np.atleast_2d(np.asarray(loudspeakers, dtype=float))
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    w = np.asarray(weights, dtype=float)
    dist = np.linalg.norm(pts[:, None, :] - lsp[None, :, :], axis=-1)  # (n_pts, L)
    if np.any(dist <= 1e-6):
        raise ValueError("an integration point coincides with a loudspeaker")
    amp = 1.0 / (4 * np.pi * dist)
    out = np.empty((omega.size, lsp.shape[0], lsp.shape[0]), dtype=complex)
    for i, om in enumerate(omega):
        v = amp * np.exp(-1j * om * dist / c)
        out[i] = (v.T * w) @ v.conj()
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite covariance integrand")
    out = 0.5 * (out + np.conj(np.swapaxes(out, -1, -2)))
    return out[0] if scalar else out


def region_covariance(omega, loudspeakers, dist: TorusDistribution, orders=DEFAULT_ORDERS,
                      c: float = SOUND_SPEED, rule: QuadratureRule | None = None) -> np.ndarray:
    """Expected ``v v^H`` over the torus region for one or several frequencies."""
    lsp = np.atleast_2d(np.asarray(loudspeakers, dtype=float))
    (_, r_hi), _, (z_lo, z_hi) = dist.bounds()
    cx, cy, _ = dist.center
    rad = np.hypot(lsp[:, 0] - cx, lsp[:, 1] - cy)
    inside = (rad <= r_hi) & (lsp[:, 2] >= z_lo) & (lsp[:, 2] <= z_hi)
    if np.any(inside):
        raise ValueError("loudspeakers must lie outside the integration domain")
    if rule is None:
        rule = torus_quadrature(dist, orders)
    pts = dist.to_cartesian(rule.nodes[:, 0], rule.nodes[:, 1], rule.nodes[:, 2])
    return covariance_from_points(omega, lsp, pts, rule.weights, c)


def augment_reverb(r_region, r_iso, beta: float) -> np.ndarray:
    if beta < 0:
        raise ValueError("beta must be >= 0")
    r_region = np.asarray(r_region)
    r_iso = np.asarray(r_iso)
    if r_region.shape != r_iso.shape:
        raise ValueError("covariance shapes differ")
    return r_region + beta * r_iso


def psd_factor(R, tol: float = 1e-9) -> np.ndarray:
    """Factor ``L`` with ``L L^H = R`` for a Hermitian PSD matrix.

    Tries Cholesky first; falls back to ``U sqrt(max(lambda, 0))`` from the
    eigendecomposition when R is singular or marginally indefinite.
    """
    R = np.asarray(R)
    herm = 0.5 * (R + R.conj().T)
    scale = max(abs(np.trace(herm).real), np.finfo(float).tiny)
    if np.linalg.norm(R - herm) > 1e-8 * max(np.linalg.norm(R), np.finfo(float).tiny):
        raise np.linalg.LinAlgError("psd_factor needs a Hermitian matrix")
    try:
        L = np.linalg.cholesky(herm)
        if np.all(np.isfinite(L)) and (
                np.linalg.norm(L @ L.conj().T - herm) <= 1e-10 * np.linalg.norm(herm)):
            return L
    except np.linalg.LinAlgError:
        pass
    lam, U = np.linalg.eigh(herm)
    if lam.min() < -tol * scale:
        raise np.linalg.LinAlgError(
            f"matrix is indefinite beyond tolerance (min eigenvalue {lam.min():.3e})")
    return U * np.sqrt(np.clip(lam, 0, None))[None, :]


@dataclass
class RegionCovariance:
    """Per-bin covariances (bins 0..N/2) and their factors."""
    matrices: np.ndarray
    factors: np.ndarray
    omegas: np.ndarray = field(repr=False)

    @classmethod
    def from_matrices(cls, matrices, omegas) -> "RegionCovariance":
        matrices = np.asarray(matrices)
        factors = np.stack([psd_factor(R) for R in matrices])
        repaired = factors @ np.conj(np.swapaxes(factors, -1, -2))
        return cls(matrices=repaired, factors=factors, omegas=np.asarray(omegas))

    @classmethod
    def for_grid(cls, grid: FrameGrid, loudspeakers, dist: TorusDistribution,
                 orders=DEFAULT_ORDERS, c: float = SOUND_SPEED,
                 reverb_beta: float = 0.0) -> "RegionCovariance":
        omegas = grid.bin_omegas()[:grid.n_bins]
        omegas[-1] = np.pi * grid.sample_rate
        rule = torus_quadrature(dist, orders)
        mats = region_covariance(omegas, loudspeakers, dist, orders, c, rule=rule)
        if reverb_beta:
            iso = np.stack([isotropic_covariance(loudspeakers, om, c) for om in omegas])
            mats = augment_reverb(mats, iso, reverb_beta)
        return cls.from_matrices(mats, omegas)

    def full(self, k: int, fft_len: int) -> np.ndarray:
        """Covariance for any bin of the full spectrum (conjugate bins mirrored)."""
        half = fft_len // 2
        if k <= half:
            return self.matrices[k]
        return np.conj(self.matrices[fft_len - k])


def default_reverb_beta(grid: FrameGrid, loudspeakers, dist: TorusDistribution,
                        orders=DEFAULT_ORDERS, c: float = SOUND_SPEED,
                        ratio: float = 0.1) -> float:
    """beta with trace(beta R_iso) = ratio * trace(R_region) at 1 kHz."""
    om = 2 * np.pi * 1000.0
    rm = region_covariance(om, loudspeakers, dist, orders, c)
    iso = isotropic_covariance(loudspeakers, om, c)
    return float(ratio * np.trace(rm).real / np.trace(iso).real)
