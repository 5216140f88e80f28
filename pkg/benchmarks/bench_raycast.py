#!/usr/bin/env python3
"""Benchmark the compiled ray-cast core against the NumPy fallback.

Casts full spinning-sensor scans in a structured preset world and reports
per-scan latency for both backends plus the achieved speedup.  Run:

    python benchmarks/bench_raycast.py [--scans 20] [--beams 24] [--steps 192]
"""

import argparse
import math
import time

import numpy as np

from trsim.kernels import raycast_np
from trsim.presets import yard_loop_world
from trsim.sensor import LidarModel
from trsim.se3 import Transform
from trsim.world import generate_world

try:
    from trsim.kernels import _raycast_cy
except ImportError:
    _raycast_cy = None


def bench(fn, origins, dirs, max_range, world, repeats):
    # Warm-up, then best-of timing.
    fn(origins, dirs, max_range, world.heights, world.x0, world.y0, world.cell,
       world.boxes, world.cylinders)
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(origins, dirs, max_range, world.heights, world.x0, world.y0,
                 world.cell, world.boxes, world.cylinders)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--scans", type=int, default=10, help="timing repeats")
    parser.add_argument("--beams", type=int, default=24)
    parser.add_argument("--steps", type=int, default=192)
    parser.add_argument("--max-range", type=float, default=20.0)
    args = parser.parse_args()

    world = generate_world(yard_loop_world(), seed=1)
    model = LidarModel(beams=args.beams,
                       horizontal_resolution=2 * math.pi / args.steps,
                       max_range=args.max_range, range_noise_sigma=0.0)
    pose = Transform.from_xyyaw(55.0, 0.0, math.pi / 2, 0.8)
    dirs = model.ray_directions() @ pose.rotation.T
    origins = np.broadcast_to(pose.translation, dirs.shape)

    # Same reachability pruning the sensor applies before casting.
    from trsim.world import World
    half_diag = np.linalg.norm(world.boxes[:, 3:6], axis=1)
    reach = np.linalg.norm(world.boxes[:, :2] - pose.translation[:2], axis=1)
    near_boxes = np.ascontiguousarray(world.boxes[reach <= args.max_range + half_diag])
    world = World(world.heights, world.x0, world.y0, world.cell, near_boxes,
                  world.cylinders, (), world.config, world.seed)

    n = len(dirs)
    print(f"world: {len(near_boxes)} boxes in range of the sensor; "
          f"{n} rays/scan, max range {args.max_range} m")

    t_np, out_np = bench(raycast_np.cast_rays, origins, dirs, args.max_range,
                         world, args.scans)
    hits = int(np.count_nonzero(np.isfinite(out_np)))
    print(f"numpy   : {t_np * 1e3:8.2f} ms/scan  ({n / t_np / 1e6:.2f} Mray/s, "
          f"{hits} hits)")

    if _raycast_cy is None:
        print("cython  : not built (pip install -e . to compile)")
        return
    t_cy, out_cy = bench(_raycast_cy.cast_rays, origins, dirs, args.max_range,
                         world, args.scans)
    print(f"cython  : {t_cy * 1e3:8.2f} ms/scan  ({n / t_cy / 1e6:.2f} Mray/s)")
    print(f"speedup : {t_np / t_cy:.1f}x")

    both = np.isfinite(out_np) & np.isfinite(out_cy)
    worst = float(np.max(np.abs(out_np[both] - out_cy[both]))) if both.any() else 0.0
    agree = np.array_equal(np.isfinite(out_np), np.isfinite(out_cy))
    print(f"parity  : hit masks equal: {agree}, max |dr| = {worst:.2e} m")


if __name__ == "__main__":
    main()
