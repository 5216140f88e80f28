"""Built-in world and route presets.

The two "loop" presets are structured environments (walls following the
route at corridor distance, plus scattered boxes/cylinders) with ~300 m
closed routes; `empty_flat` and `parking_lot` are small playgrounds.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidConfig


def _rounded_rect(cx: float, cy: float, half_x: float, half_y: float,
                  radius: float, step_deg: float = 10.0) -> list[list[float]]:
    """Closed polyline tracing a rounded rectangle (counterclockwise)."""
    pts = []
    corners = [
        (cx + half_x - radius, cy + half_y - radius, 0.0),
        (cx - half_x + radius, cy + half_y - radius, 90.0),
        (cx - half_x + radius, cy - half_y + radius, 180.0),
        (cx + half_x - radius, cy - half_y + radius, 270.0),
    ]
    n = max(2, int(round(90.0 / step_deg)) + 1)
    for ccx, ccy, a0 in corners:
        for a in np.linspace(a0, a0 + 90.0, n):
            rad = math.radians(a)
            pts.append([ccx + radius * math.cos(rad), ccy + radius * math.sin(rad)])
    pts.append(pts[0])
    return pts


def _circle_polyline(cx: float, cy: float, radius: float, n: int = 36) -> list[list[float]]:
    pts = [[cx + radius * math.cos(2 * math.pi * i / n),
            cy + radius * math.sin(2 * math.pi * i / n)] for i in range(n)]
    pts.append(pts[0])
    return pts


def yard_loop_world() -> dict:
    """Rounded-rectangle corridor: low walls 3.2 m off the route, small boxes
    scattered in the verge as longitudinal anchors."""
    route_pts = _rounded_rect(0.0, 0.0, 55.0, 27.0, 15.0)
    return {
        "version": 1,
        "extent": [-63.0, 63.0, -35.0, 35.0],
        "cell_size": 1.0,
        "terrain": {"amplitude": 0.15, "wavelength": 40.0},
        "walls": [
            {"polyline": _rounded_rect(0.0, 0.0, 58.2, 30.2, 18.2, step_deg=6.0),
             "height": 1.6, "thickness": 0.4},
            {"polyline": _rounded_rect(0.0, 0.0, 51.8, 23.8, 11.8, step_deg=6.0),
             "height": 1.4, "thickness": 0.4},
        ],
        "boxes": {
            "count": 44,
            "size_min": [0.5, 0.4, 0.5],
            "size_max": [1.2, 0.9, 1.2],
            "region": [-57.0, 57.0, -29.0, 29.0],
            "keepout": route_pts,
            "keepout_clearance": 2.0,
        },
    }


def yard_loop_route() -> dict:
    return {
        "waypoints": [[55.0, 27.0], [-55.0, 27.0], [-55.0, -27.0], [55.0, -27.0]],
        "corner_radius": 15.0,
        "closed": True,
        "speed": 1.5,
    }


def dome_loop_world() -> dict:
    """Circular corridor between two polygonal fences, with trunks and boxes."""
    route_pts = _circle_polyline(0.0, 0.0, 48.0, n=48)
    return {
        "version": 1,
        "extent": [-56.0, 56.0, -56.0, 56.0],
        "cell_size": 1.0,
        "terrain": {"amplitude": 0.25, "wavelength": 35.0},
        "walls": [
            {"polyline": _circle_polyline(0.0, 0.0, 51.2, n=64), "height": 1.4,
             "thickness": 0.3},
            {"polyline": _circle_polyline(0.0, 0.0, 44.8, n=56), "height": 1.4,
             "thickness": 0.3},
        ],
        "boxes": {
            "count": 28,
            "size_min": [0.5, 0.4, 0.5],
            "size_max": [1.2, 0.9, 1.2],
            "region": [-54.0, 54.0, -54.0, 54.0],
            "keepout": route_pts,
            "keepout_clearance": 2.0,
        },
        "cylinders": {
            "count": 18,
            "radius_range": [0.15, 0.4],
            "height_range": [1.5, 3.0],
            "region": [-54.0, 54.0, -54.0, 54.0],
            "keepout": route_pts,
            "keepout_clearance": 2.0,
        },
    }


def dome_loop_route() -> dict:
    return {
        "circle": {"center": [0.0, 0.0], "radius": 48.0, "start_angle_deg": 0.0},
        "speed": 1.5,
    }


def empty_flat_world() -> dict:
    return {
        "version": 1,
        "extent": [-20.0, 20.0, -20.0, 20.0],
        "cell_size": 1.0,
        "terrain": {"amplitude": 0.0},
    }


def parking_lot_world() -> dict:
    return {
        "version": 1,
        "extent": [-40.0, 40.0, -30.0, 30.0],
        "cell_size": 1.0,
        "terrain": {"amplitude": 0.0},
        "walls": [{"ring": [-38.0, 38.0, -28.0, 28.0], "height": 2.5, "thickness": 0.4}],
        "boxes": {
            "count": 12,
            "size_min": [4.0, 1.8, 1.3],
            "size_max": [4.8, 2.1, 1.7],
            "region": [-30.0, 30.0, -20.0, 20.0],
            "keepout": [[-30.0, 0.0], [30.0, 0.0]],
            "keepout_clearance": 4.0,
        },
    }


def straight_route(length: float = 100.0, speed: float = 1.5) -> dict:
    return {"waypoints": [[0.0, 0.0], [length, 0.0]], "corner_radius": 0.0,
            "closed": False, "speed": speed}


WORLD_PRESETS = {
    "empty_flat": empty_flat_world,
    "parking_lot": parking_lot_world,
    "yard_loop": yard_loop_world,
    "dome_loop": dome_loop_world,
}

ROUTE_PRESETS = {
    "yard_loop": yard_loop_route,
    "dome_loop": dome_loop_route,
    "straight_100": lambda: straight_route(100.0),
}


def world_preset(name: str) -> dict:
    if name not in WORLD_PRESETS:
        raise InvalidConfig(f"unknown world preset {name!r}; "
                            f"available: {sorted(WORLD_PRESETS)}")
    return WORLD_PRESETS[name]()


def route_preset(name: str) -> dict:
    if name not in ROUTE_PRESETS:
        raise InvalidConfig(f"unknown route preset {name!r}; "
                            f"available: {sorted(ROUTE_PRESETS)}")
    return ROUTE_PRESETS[name]()
