"""Spinning LiDAR simulation against the world geometry.

The live scan side of localization: rays from the sensor pose are cast
against the true world (terrain + primitives), never against the map cloud.
Returns are expressed in the sensor frame with per-return Gaussian range
noise and per-ray Bernoulli dropout, all derived from one seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud
from .errors import InvalidConfig
from .kernels import cast_rays
from .se3 import Transform
from .world import World

_DIR_CACHE: dict = {}

# Sensor class is a 128-channel spinning unit; the remaining defaults are
# artifact choices exposed in config.
DEFAULT_BEAMS = 128
DEFAULT_VFOV = (-math.radians(22.5), math.radians(22.5))
DEFAULT_HSTEPS = 1024
DEFAULT_MAX_RANGE = 90.0
DEFAULT_RANGE_SIGMA = 0.02


@dataclass(frozen=True)
class LidarModel:
    """Beam geometry and noise parameters of the simulated sensor."""

    beams: int = DEFAULT_BEAMS
    horizontal_resolution: float = 2.0 * math.pi / DEFAULT_HSTEPS
    vertical_fov: tuple[float, float] = DEFAULT_VFOV
    max_range: float = DEFAULT_MAX_RANGE
    range_noise_sigma: float = DEFAULT_RANGE_SIGMA
    dropout_prob: float = 0.0

    def __post_init__(self):
        if self.beams < 1:
            raise InvalidConfig("beams must be >= 1")
        if self.max_range <= 0:
            raise InvalidConfig("max_range must be > 0")
        if not (0.0 <= self.dropout_prob < 1.0):
            raise InvalidConfig("dropout_prob must be in [0, 1)")
        if self.horizontal_resolution <= 0:
            raise InvalidConfig("horizontal_resolution must be > 0")
        object.__setattr__(self, "vertical_fov",
                           (float(self.vertical_fov[0]), float(self.vertical_fov[1])))

    @property
    def horizontal_steps(self) -> int:
        return max(1, int(round(2.0 * math.pi / self.horizontal_resolution)))

    def ray_directions(self) -> np.ndarray:
        """Unit directions in the sensor frame, beam-major order, shape (B*H, 3)."""
        cached = _DIR_CACHE.get(self._dir_key())
        if cached is not None:
            return cached
        lo, hi = self.vertical_fov
        if self.beams == 1:
            elevations = np.array([(lo + hi) / 2.0])
        else:
            elevations = np.linspace(lo, hi, self.beams)
        azimuths = np.arange(self.horizontal_steps) * self.horizontal_resolution
        el = np.repeat(elevations, self.horizontal_steps)
        az = np.tile(azimuths, self.beams)
        ce = np.cos(el)
        dirs = np.stack([ce * np.cos(az), ce * np.sin(az), np.sin(el)], axis=1)
        dirs.setflags(write=False)
        if len(_DIR_CACHE) < 32:
            _DIR_CACHE[self._dir_key()] = dirs
        return dirs

    def _dir_key(self):
        return (self.beams, self.horizontal_resolution, self.vertical_fov)


def simulate_scan(world: World, sensor_pose: Transform, model: LidarModel,
                  seed: int) -> PointCloud:
    """Ray-cast one scan; returns hit points in the sensor frame.

    Deterministic for fixed (world, sensor_pose, model, seed).  An empty
    cloud is a valid result when nothing is in range.
    """
    dirs_local = model.ray_directions()
    dirs_world = dirs_local @ sensor_pose.rotation.T
    origin = np.broadcast_to(sensor_pose.translation, dirs_world.shape)
    # Prune primitives no ray can reach from this origin (exact: the prune
    # radius includes each primitive's own bounding radius).
    boxes = world.boxes
    if len(boxes):
        half_diag = np.linalg.norm(boxes[:, 3:6], axis=1)
        reach = np.linalg.norm(boxes[:, :2] - sensor_pose.translation[:2], axis=1)
        boxes = boxes[reach <= model.max_range + half_diag]
    cylinders = world.cylinders
    if len(cylinders):
        reach = np.linalg.norm(cylinders[:, :2] - sensor_pose.translation[:2], axis=1)
        cylinders = cylinders[reach <= model.max_range + cylinders[:, 2]]
    ranges = cast_rays(origin, dirs_world, model.max_range,
                       world.heights, world.x0, world.y0, world.cell,
                       boxes, cylinders)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5CA9]))
    # Draw noise and dropout for every ray so the random stream does not
    # depend on which rays happened to hit.
    noise = rng.normal(0.0, model.range_noise_sigma, ranges.shape) \
        if model.range_noise_sigma > 0 else np.zeros_like(ranges)
    keep_draw = rng.random(ranges.shape)
    hit = np.isfinite(ranges)
    if model.dropout_prob > 0:
        hit &= keep_draw >= model.dropout_prob
    r = ranges[hit] + noise[hit]
    pts = dirs_local[hit] * r[:, None]
    return PointCloud(pts)
