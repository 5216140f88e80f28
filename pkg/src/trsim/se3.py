"""Rigid-body transform algebra for recording, compounding, and comparing poses.

Conventions used throughout the simulator:

- A ``Transform`` T = (R, t) maps coordinates from its child frame into its
  parent frame: ``p_parent = R @ p_child + t``.
- Vehicle frames are x-forward, y-left, z-up.  Lateral offsets are therefore
  y-components, with positive meaning "left of heading".
- Angles are radians everywhere; degrees appear only at CLI boundaries.

Rotations are stored as 3x3 matrices.  Long compounding chains are protected
against numerical drift by re-projecting the rotation onto the nearest
orthonormal matrix every ``RENORMALIZE_EVERY`` compositions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NearSingularRotation

RENORMALIZE_EVERY = 1000

# Angle below which series expansions replace the closed-form exp/log maps.
_SMALL_ANGLE = 1e-8


def _skew(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric (hat) matrix of a 3-vector."""
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def _orthonormalize(R: np.ndarray) -> np.ndarray:
    """Project onto the nearest rotation matrix (SVD polar projection)."""
    U, _, Vt = np.linalg.svd(R)
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(U @ Vt))
    return U @ D @ Vt


@dataclass(frozen=True)
class Twist:
    """Tangent-space element: linear part (m or m/s) and angular part (rad or rad/s)."""

    linear: np.ndarray
    angular: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "linear", np.asarray(self.linear, dtype=float).reshape(3))
        object.__setattr__(self, "angular", np.asarray(self.angular, dtype=float).reshape(3))
        if not (np.all(np.isfinite(self.linear)) and np.all(np.isfinite(self.angular))):
            raise ValueError("twist entries must be finite")

    @staticmethod
    def zero() -> "Twist":
        return Twist(np.zeros(3), np.zeros(3))

    @staticmethod
    def planar(v: float, omega: float) -> "Twist":
        """Planar drive command: forward speed v, yaw rate omega."""
        return Twist(np.array([v, 0.0, 0.0]), np.array([0.0, 0.0, omega]))

    def scaled(self, s: float) -> "Twist":
        return Twist(self.linear * s, self.angular * s)

    def as_vector(self) -> np.ndarray:
        """[vx, vy, vz, wx, wy, wz]."""
        return np.concatenate([self.linear, self.angular])


class Transform:
    """Rigid transform in SE(3): rotation matrix plus translation vector."""

    __slots__ = ("rotation", "translation", "_depth")

    def __init__(self, rotation: np.ndarray, translation: np.ndarray, _depth: int = 0):
        R = np.array(rotation, dtype=float).reshape(3, 3)
        t = np.array(translation, dtype=float).reshape(3)
        if _depth >= RENORMALIZE_EVERY:
            R = _orthonormalize(R)
            _depth = 0
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "_depth", _depth)

    def __setattr__(self, name, value):
        raise AttributeError("Transform is immutable")

    def __reduce__(self):
        # Re-enter __init__ on copy/pickle; keeps the immutability guard.
        return (Transform, (np.array(self.rotation), np.array(self.translation),
                            self._depth))

    @staticmethod
    def identity() -> "Transform":
        return Transform(np.eye(3), np.zeros(3))

    @staticmethod
    def from_translation(x: float, y: float, z: float = 0.0) -> "Transform":
        return Transform(np.eye(3), np.array([x, y, z]))

    @staticmethod
    def rot_z(angle: float) -> "Transform":
        c, s = math.cos(angle), math.sin(angle)
        return Transform(np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]), np.zeros(3))

    @staticmethod
    def from_xyyaw(x: float, y: float, yaw: float, z: float = 0.0) -> "Transform":
        """Planar pose: position (x, y, z) with heading yaw about +z."""
        c, s = math.cos(yaw), math.sin(yaw)
        return Transform(
            np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]),
            np.array([x, y, z]),
        )

    @property
    def yaw(self) -> float:
        """Heading angle of the local x-axis, projected to the xy-plane."""
        return math.atan2(self.rotation[1, 0], self.rotation[0, 0])

    def compose(self, other: "Transform") -> "Transform":
        """Return self @ other: apply `other` first, then `self`."""
        return Transform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
            _depth=max(self._depth, other._depth) + 1,
        )

    def __matmul__(self, other: "Transform") -> "Transform":
        return self.compose(other)

    def inverse(self) -> "Transform":
        Rt = self.rotation.T
        return Transform(Rt, -(Rt @ self.translation), _depth=self._depth)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one point (3,) or a batch (N, 3) into the parent frame."""
        p = np.asarray(points, dtype=float)
        if p.ndim == 1:
            return self.rotation @ p + self.translation
        return p @ self.rotation.T + self.translation

    def rotation_angle(self) -> float:
        """Geodesic rotation angle in [0, pi]."""
        c = 0.5 * (np.trace(self.rotation) - 1.0)
        return math.acos(min(1.0, max(-1.0, c)))

    def matrix34(self) -> np.ndarray:
        """Row-major 3x4 matrix [R | t]."""
        return np.hstack([self.rotation, self.translation.reshape(3, 1)])

    @staticmethod
    def from_matrix34(m: np.ndarray) -> "Transform":
        m = np.asarray(m, dtype=float).reshape(3, 4)
        return Transform(m[:, :3], m[:, 3])

    def is_close(self, other: "Transform", rot_tol: float = 1e-9, trans_tol: float = 1e-9) -> bool:
        """Compare by rotation Frobenius norm and translation Euclidean norm."""
        dr = np.linalg.norm(self.rotation - other.rotation)
        dt = np.linalg.norm(self.translation - other.translation)
        return dr <= rot_tol and dt <= trans_tol

    def __repr__(self) -> str:
        x, y, z = self.translation
        return f"Transform(xyz=({x:.3f}, {y:.3f}, {z:.3f}), yaw={self.yaw:.3f})"


def compose(a: Transform, b: Transform) -> Transform:
    """Rigid transform equivalent to applying b then a."""
    return a.compose(b)


def inverse(t: Transform) -> Transform:
    return t.inverse()


def exp_map(x: Twist) -> Transform:
    """Exponential map from a twist to a rigid transform.

    Rodrigues' formula for the rotation; the translation goes through the
    left Jacobian V so that constant-twist integration traces exact screws.
    """
    omega = x.angular
    v = x.linear
    theta = float(np.linalg.norm(omega))
    W = _skew(omega)
    W2 = W @ W
    if theta < _SMALL_ANGLE:
        R = np.eye(3) + W + 0.5 * W2
        V = np.eye(3) + 0.5 * W + W2 / 6.0
    else:
        s, c = math.sin(theta), math.cos(theta)
        R = np.eye(3) + (s / theta) * W + ((1.0 - c) / theta**2) * W2
        V = np.eye(3) + ((1.0 - c) / theta**2) * W + ((theta - s) / theta**3) * W2
    return Transform(R, V @ v)


def log_map(t: Transform) -> Twist:
    """Logarithm of a rigid transform.

    Raises:
        NearSingularRotation: rotation angle within 1e-6 of pi, where the
            axis extraction loses precision.
    """
    theta = t.rotation_angle()
    if theta >= math.pi - 1e-6:
        raise NearSingularRotation(f"rotation angle {theta:.9f} too close to pi")
    R = t.rotation
    if theta < _SMALL_ANGLE:
        W = 0.5 * (R - R.T)
        omega = np.array([W[2, 1], W[0, 2], W[1, 0]])
        Vinv = np.eye(3) - 0.5 * _skew(omega)
    else:
        W = (theta / (2.0 * math.sin(theta))) * (R - R.T)
        omega = np.array([W[2, 1], W[0, 2], W[1, 0]])
        K = _skew(omega)
        K2 = K @ K
        coef = (1.0 - (theta * math.cos(theta / 2.0)) / (2.0 * math.sin(theta / 2.0))) / theta**2
        Vinv = np.eye(3) - 0.5 * K + coef * K2
    return Twist(Vinv @ t.translation, omega)


def interpolate(a: Transform, b: Transform, alpha: float) -> Transform:
    """Geodesic interpolation: a at alpha=0, b at alpha=1."""
    step = log_map(a.inverse() @ b)
    return a @ exp_map(step.scaled(alpha))


def signed_lateral_offset(reference: Transform, query_point: np.ndarray) -> float:
    """Signed lateral distance of a point from a vehicle pose.

    Returns the y-component of the point expressed in the reference frame:
    positive means left of the reference heading (x-forward, y-left, z-up).
    """
    local = reference.inverse().apply(np.asarray(query_point, dtype=float))
    return float(local[1])
