"""Reconstruction-noise model for the virtual map cloud.

The map the repeat localizes against is not sampled perfectly from the world:
points carry isotropic Gaussian jitter, and the whole cloud is displaced by a
smooth low-frequency sinusoidal drift field.  The same field can be applied
to taught paths and markers so that map drift affects all of them equally.

The drift field is a per-axis plane wave:

    f_j(p) = amplitude_j * sin(2*pi * (u_j . p) / wavelength_j + phase_j)

with horizontal wave directions u_j and phases derived from a seed.  Keeping
amplitude < wavelength / (2*pi) bounds the field gradient below 1, which
makes the warp invertible and C1-smooth everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud
from .errors import InvalidConfig, OutOfBounds
from .world import World


@dataclass(frozen=True)
class MapNoiseModel:
    """Jitter + drift parameters for virtual map sampling."""

    point_sigma: float = 0.0
    density: float = 20.0
    drift_amplitude: tuple[float, float, float] = (0.0, 0.0, 0.0)
    drift_wavelength: tuple[float, float, float] = (50.0, 50.0, 50.0)
    drift_seed: int = 0

    def __post_init__(self):
        amp = tuple(float(a) for a in np.broadcast_to(self.drift_amplitude, 3))
        wav = tuple(float(w) for w in np.broadcast_to(self.drift_wavelength, 3))
        object.__setattr__(self, "drift_amplitude", amp)
        object.__setattr__(self, "drift_wavelength", wav)
        if self.point_sigma < 0:
            raise InvalidConfig("point_sigma must be >= 0")
        if self.density <= 0:
            raise InvalidConfig("density must be > 0")
        for a, w in zip(amp, wav):
            if a < 0 or w <= 0:
                raise InvalidConfig("drift amplitude must be >= 0 and wavelength > 0")
            if a > 0 and a >= w / (2.0 * math.pi):
                raise InvalidConfig(
                    f"drift amplitude {a} must stay below wavelength/(2*pi) = {w / (2 * math.pi):.3f} "
                    "to keep the warp invertible")

    @property
    def has_drift(self) -> bool:
        return any(a > 0 for a in self.drift_amplitude)

    def _wave_parameters(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Wave direction (per axis), angular frequency, phase."""
        rng = np.random.default_rng(np.random.SeedSequence([int(self.drift_seed), 0x5EED]))
        azimuths = rng.uniform(0.0, 2.0 * math.pi, size=3)
        phases = rng.uniform(0.0, 2.0 * math.pi, size=3)
        dirs = np.stack([np.cos(azimuths), np.sin(azimuths), np.zeros(3)], axis=1)
        freqs = 2.0 * math.pi / np.asarray(self.drift_wavelength)
        return dirs, freqs, phases

    def displacement(self, points: np.ndarray) -> np.ndarray:
        """Drift displacement evaluated at each point, shape (N, 3)."""
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        out = np.zeros_like(pts)
        if not self.has_drift:
            return out
        dirs, freqs, phases = self._wave_parameters()
        amp = np.asarray(self.drift_amplitude)
        for j in range(3):
            if amp[j] == 0.0:
                continue
            proj = pts @ dirs[j]
            out[:, j] = amp[j] * np.sin(freqs[j] * proj + phases[j])
        return out


def warp_point(noise: MapNoiseModel, p: np.ndarray,
               bounds: tuple[float, float, float, float] | None = None) -> np.ndarray:
    """Apply the drift field to a single point.

    Raises:
        OutOfBounds: when bounds are given and (x, y) falls outside them.
    """
    p = np.asarray(p, dtype=float).reshape(3)
    if bounds is not None:
        xmin, xmax, ymin, ymax = bounds
        if not (xmin <= p[0] <= xmax and ymin <= p[1] <= ymax):
            raise OutOfBounds(f"point ({p[0]:.2f}, {p[1]:.2f}) outside world bounds")
    return p + noise.displacement(p[None, :])[0]


def warp_points(noise: MapNoiseModel, points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    return pts + noise.displacement(pts)


def _sample_ground(world: World, density: float, rng) -> np.ndarray:
    xmin, xmax, ymin, ymax = world.extent
    area = (xmax - xmin) * (ymax - ymin)
    n = int(round(area * density))
    x = rng.uniform(xmin, xmax, n)
    y = rng.uniform(ymin, ymax, n)
    z = world.ground_height(x, y)
    return np.stack([x, y, np.atleast_1d(z)], axis=1)


def _sample_box(box: np.ndarray, density: float, rng) -> np.ndarray:
    cx, cy, cz, hx, hy, hz, c, s = box
    # Local-frame faces: +x, -x, +y, -y sides and the top.
    faces = [
        (np.array([hx, 0, 0]), np.array([0, hy, 0]), np.array([0, 0, hz])),
        (np.array([-hx, 0, 0]), np.array([0, hy, 0]), np.array([0, 0, hz])),
        (np.array([0, hy, 0]), np.array([hx, 0, 0]), np.array([0, 0, hz])),
        (np.array([0, -hy, 0]), np.array([hx, 0, 0]), np.array([0, 0, hz])),
        (np.array([0, 0, hz]), np.array([hx, 0, 0]), np.array([0, hy, 0])),
    ]
    R = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    center = np.array([cx, cy, cz])
    pts = []
    for origin, a_vec, b_vec in faces:
        area = 4.0 * np.linalg.norm(a_vec) * np.linalg.norm(b_vec)
        n = int(round(area * density))
        if n == 0:
            continue
        ua = rng.uniform(-1.0, 1.0, n)[:, None]
        ub = rng.uniform(-1.0, 1.0, n)[:, None]
        local = origin + ua * a_vec + ub * b_vec
        pts.append(local @ R.T + center)
    return np.concatenate(pts, axis=0) if pts else np.zeros((0, 3))


def _sample_cylinder(cyl: np.ndarray, density: float, rng) -> np.ndarray:
    cx, cy, r, z0, z1 = cyl
    h = z1 - z0
    pts = []
    n_side = int(round(2.0 * math.pi * r * h * density))
    if n_side:
        ang = rng.uniform(0.0, 2.0 * math.pi, n_side)
        z = rng.uniform(z0, z1, n_side)
        pts.append(np.stack([cx + r * np.cos(ang), cy + r * np.sin(ang), z], axis=1))
    n_top = int(round(math.pi * r * r * density))
    if n_top:
        ang = rng.uniform(0.0, 2.0 * math.pi, n_top)
        rad = r * np.sqrt(rng.uniform(0.0, 1.0, n_top))
        pts.append(np.stack([cx + rad * np.cos(ang), cy + rad * np.sin(ang),
                             np.full(n_top, z1)], axis=1))
    return np.concatenate(pts, axis=0) if pts else np.zeros((0, 3))


def sample_map_cloud(world: World, noise: MapNoiseModel, seed: int) -> PointCloud:
    """Surface-sample the world into a virtual map cloud.

    Points are drawn at the requested density from the ground and every
    obstacle face, jittered by point_sigma, then displaced by the drift
    field.  Deterministic for a fixed (world, noise, seed).
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xC10D]))
    parts = [_sample_ground(world, noise.density, rng)]
    for box in world.boxes:
        parts.append(_sample_box(box, noise.density, rng))
    for cyl in world.cylinders:
        parts.append(_sample_cylinder(cyl, noise.density, rng))
    pts = np.concatenate(parts, axis=0)
    if noise.point_sigma > 0:
        pts = pts + rng.normal(0.0, noise.point_sigma, pts.shape)
    pts = pts + noise.displacement(pts)
    return PointCloud(pts)
