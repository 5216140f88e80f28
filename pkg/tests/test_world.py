import numpy as np
import pytest

from trsim import presets
from trsim.errors import InvalidConfig, PathTooShort
from trsim.se3 import Transform
from trsim.world import generate_world, marker_stations, place_markers


def test_empty_flat_world():
    world = generate_world(presets.empty_flat_world(), seed=0)
    assert world.obstacle_count == 0
    assert np.all(world.heights == 0.0)


def test_world_determinism():
    config = presets.parking_lot_world()
    a = generate_world(config, seed=3)
    b = generate_world(config, seed=3)
    assert np.array_equal(a.heights, b.heights)
    assert np.array_equal(a.boxes, b.boxes)
    assert np.array_equal(a.cylinders, b.cylinders)


def test_different_seed_changes_layout():
    config = presets.parking_lot_world()
    a = generate_world(config, seed=3)
    b = generate_world(config, seed=4)
    assert not np.array_equal(a.boxes, b.boxes)


def test_parking_lot_obstacle_count_matches_config():
    config = presets.parking_lot_world()
    world = generate_world(config, seed=7)
    # Declared: scattered boxes plus four wall-ring segments.
    declared = config["boxes"]["count"] + 4 * len(config["walls"])
    assert world.obstacle_count == declared


def test_invalid_configs_rejected():
    with pytest.raises(InvalidConfig):
        generate_world({"version": 99, "extent": [0, 1, 0, 1]}, 0)
    with pytest.raises(InvalidConfig):
        generate_world({"version": 1, "extent": [1, 0, 0, 1]}, 0)
    with pytest.raises(InvalidConfig):
        generate_world({"version": 1}, 0)


def test_ground_height_bilinear():
    config = {
        "version": 1,
        "extent": [-10.0, 10.0, -10.0, 10.0],
        "cell_size": 1.0,
        "terrain": {"amplitude": 0.5, "wavelength": 10.0},
    }
    world = generate_world(config, seed=1)
    # Grid nodes reproduce the stored heights exactly.
    assert world.ground_height(-10.0, -10.0) == world.heights[0, 0]
    assert abs(world.ground_height(0.25, 0.75)) <= 0.5 + 1e-9


def _straight_path(length=100.0, step=0.5):
    n = int(length / step) + 1
    return [Transform.from_xyyaw(i * step, 0.0, 0.0) for i in range(n)]


def test_marker_count_on_straight_path():
    world = generate_world(presets.empty_flat_world(), seed=0)
    poses = _straight_path(100.0)
    out = place_markers(world, poses, spacing=25.0, lateral_offset=0.0)
    # Stations at 12.5, 37.5, 62.5, 87.5: endpoints excluded.
    assert len(out.markers) == 4
    assert [m.id for m in out.markers] == [0, 1, 2, 3]
    assert marker_stations(100.0, 25.0) == [12.5, 37.5, 62.5, 87.5]


def test_markers_under_path_when_zero_offset():
    world = generate_world(presets.empty_flat_world(), seed=0)
    out = place_markers(world, _straight_path(60.0), spacing=20.0, lateral_offset=0.0)
    for m in out.markers:
        assert abs(m.position[1]) < 1e-9


def test_marker_lateral_offset_sign():
    # Negative offset = right of heading: y = -0.5 on a +x path.
    world = generate_world(presets.empty_flat_world(), seed=0)
    out = place_markers(world, _straight_path(60.0), spacing=20.0, lateral_offset=-0.5)
    for m in out.markers:
        assert m.position[1] == pytest.approx(-0.5, abs=1e-9)


def test_markers_on_ground_surface():
    config = {
        "version": 1,
        "extent": [-10.0, 120.0, -20.0, 20.0],
        "cell_size": 1.0,
        "terrain": {"amplitude": 0.4, "wavelength": 25.0},
    }
    world = generate_world(config, seed=5)
    out = place_markers(world, _straight_path(100.0), spacing=25.0, lateral_offset=-0.5)
    for m in out.markers:
        assert abs(m.position[2] - world.ground_height(m.position[0], m.position[1])) < 1e-6


def test_marker_path_too_short():
    world = generate_world(presets.empty_flat_world(), seed=0)
    with pytest.raises(PathTooShort):
        place_markers(world, _straight_path(10.0), spacing=25.0, lateral_offset=0.0)
