import math

import numpy as np
import pytest

from trsim.errors import NearSingularRotation
from trsim.se3 import (Transform, Twist, compose, exp_map, interpolate,
                       inverse, log_map, signed_lateral_offset)

from conftest import random_transform


def test_compose_identity():
    I = Transform.identity()
    assert compose(I, I).is_close(I)


def test_compose_inverse_cancels():
    t = Transform.from_xyyaw(1.0, -2.0, 0.7, 0.3)
    assert compose(t, inverse(t)).is_close(Transform.identity())


def test_compose_translations_add():
    a = Transform.from_translation(1, 0, 0)
    b = Transform.from_translation(0, 2, 0)
    assert compose(a, b).is_close(Transform.from_translation(1, 2, 0))


def test_inverse_identity():
    assert inverse(Transform.identity()).is_close(Transform.identity())


def test_inverse_rotation():
    assert inverse(Transform.rot_z(math.pi / 2)).is_close(Transform.rot_z(-math.pi / 2))


def test_double_inverse_roundtrip(rng):
    for _ in range(1000):
        t = random_transform(rng, trans_range=10.0)
        assert inverse(inverse(t)).is_close(t, rot_tol=1e-9, trans_tol=1e-9)


def test_associativity(rng):
    for _ in range(300):
        a, b, c = (random_transform(rng) for _ in range(3))
        left = compose(compose(a, b), c)
        right = compose(a, compose(b, c))
        assert left.is_close(right, rot_tol=1e-9, trans_tol=1e-9)


def test_log_of_identity_is_zero():
    tw = log_map(Transform.identity())
    assert np.allclose(tw.as_vector(), 0.0)


def test_exp_of_zero_is_identity():
    assert exp_map(Twist.zero()).is_close(Transform.identity())


def test_exp_log_roundtrip(rng):
    for _ in range(1000):
        t = random_transform(rng, trans_range=10.0, max_angle=3.0)
        rt = exp_map(log_map(t))
        assert rt.is_close(t, rot_tol=1e-8, trans_tol=1e-8)


def test_log_near_pi_raises():
    t = Transform.rot_z(math.pi - 1e-8)
    with pytest.raises(NearSingularRotation):
        log_map(t)


def test_rotation_stays_orthonormal():
    t = Transform.rot_z(0.3)
    r = t.rotation
    assert np.allclose(r @ r.T, np.eye(3), atol=1e-9)
    assert abs(np.linalg.det(r) - 1.0) < 1e-9


def test_long_chain_reproduces_absolute_poses():
    # 10,000 small steps; compounding must track the closed-form pose to 1e-6 m.
    step = Transform.from_xyyaw(0.01, 0.0, 2.0 * math.pi / 10000.0)
    pose = Transform.identity()
    poses = [pose]
    for _ in range(10000):
        pose = pose @ step
        poses.append(pose)
    # Closed form: screw motion on a circle of radius r = d/2 / sin(dtheta/2)
    dtheta = 2.0 * math.pi / 10000.0
    absolute = Transform.identity()
    for k in (2500, 5000, 10000):
        from trsim.se3 import Twist as Tw
        tw = log_map(step)
        expected = exp_map(Tw(tw.linear * k, tw.angular * k))
        assert poses[k].is_close(expected, rot_tol=1e-6, trans_tol=1e-6)


def test_signed_lateral_offset_on_axis():
    ref = Transform.identity()
    assert signed_lateral_offset(ref, np.array([5.0, 0.0, 0.0])) == pytest.approx(0.0)


def test_signed_lateral_offset_pure_left():
    ref = Transform.identity()
    assert signed_lateral_offset(ref, np.array([0.0, 0.25, 0.0])) == pytest.approx(0.25)


def test_signed_lateral_offset_rotated_reference():
    # Reference turned 90 degrees clockwise (facing -y): its left is +x, so a
    # point at world (-0.3, 0, 0) is 0.3 m to the right.
    ref = Transform.rot_z(-math.pi / 2)
    got = signed_lateral_offset(ref, np.array([-0.3, 0.0, 0.0]))
    assert got == pytest.approx(-0.3, abs=1e-12)


def test_signed_lateral_offset_rigid_invariance(rng):
    for _ in range(200):
        ref = random_transform(rng)
        point = rng.uniform(-5, 5, 3)
        g = random_transform(rng)
        base = signed_lateral_offset(ref, point)
        moved = signed_lateral_offset(g @ ref, g.apply(point))
        assert moved == pytest.approx(base, abs=1e-9)


def test_interpolate_endpoints_and_midpoint():
    a = Transform.from_xyyaw(0, 0, 0)
    b = Transform.from_xyyaw(2, 0, 1.0)
    assert interpolate(a, b, 0.0).is_close(a, 1e-12, 1e-12)
    assert interpolate(a, b, 1.0).is_close(b, 1e-9, 1e-9)
    mid = interpolate(a, b, 0.5)
    assert mid.yaw == pytest.approx(0.5)


def test_twist_requires_finite():
    with pytest.raises(ValueError):
        Twist(np.array([np.nan, 0, 0]), np.zeros(3))


def test_transform_immutable():
    t = Transform.identity()
    with pytest.raises(AttributeError):
        t.translation = np.zeros(3)
    with pytest.raises(ValueError):
        t.rotation[0, 0] = 5.0
