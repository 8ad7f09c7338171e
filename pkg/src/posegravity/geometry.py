"""Elementary rotation and pose helpers.

All rotations are plain ``(3, 3)`` float arrays and vectors are ``(3,)``
arrays. The small kernels are compiled with numba so the solver can call
them without leaving nopython mode; the public wrappers validate input and
return fresh numpy arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit



@dataclass(frozen=True)
class GravityPrior:
    """Measured world y-axis expressed in the camera frame, stored unit-norm."""

    g: np.ndarray = field(repr=True)

    def __post_init__(self):
        g = np.asarray(self.g, dtype=np.float64).reshape(3)
        norm = math.sqrt(float(g @ g))
        if not np.isfinite(norm) or norm == 0.0:
            raise ValueError(f"gravity vector must be finite and nonzero, got {g}")
        object.__setattr__(self, "g", g / norm)


@dataclass(frozen=True)
class Pose:
    """Camera pose mapping world points into the camera frame: X_c = R @ X_w + T."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))

    @classmethod
    def trusted(cls, rotation: np.ndarray, translation: np.ndarray) -> "Pose":
        """Build from float64 arrays already shaped (3, 3) and (3,), skipping conversion."""
        pose = object.__new__(cls)
        object.__setattr__(pose, "rotation", rotation)
        object.__setattr__(pose, "translation", translation)
        return pose

    def transform(self, world: np.ndarray) -> np.ndarray:
        """Map world points of shape (..., 3) into the camera frame."""
        return np.asarray(world) @ self.rotation.T + self.translation


# --------------------------------------------------------------------------- kernels


@njit(cache=True)
def _alignment_entries(gx, gy, gz):
    """Row-major entries of R_g."""
    h = gx * gx + gz * gz
    # the closed form is only undefined for g exactly on -y (h == 0 there)
    if h == 0.0 and gy < 0.0:
        return (1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0)
    # 1 + g_y loses digits as g_y -> -1; the equivalent ratio does not.
    if gy < 0.0:
        s = h / (1.0 - gy)
    else:
        s = 1.0 + gy
    return (gz * gz / s + gy, -gx, -gx * gz / s,
            gx, gy, gz,
            -gx * gz / s, -gz, gx * gx / s + gy)


@njit(cache=True)
def _gravity_alignment(gx, gy, gz):
    e = _alignment_entries(gx, gy, gz)
    out = np.empty((3, 3))
    for k in range(9):
        out[k // 3, k % 3] = e[k]
    return out


@njit(cache=True)
def _rotation_about_y(x, y):
    out = np.zeros((3, 3))
    out[0, 0] = x
    out[0, 2] = y
    out[1, 1] = 1.0
    out[2, 0] = -y
    out[2, 2] = x
    return out


@njit(cache=True)
def _compose(x, y, t_tilde, r_g):
    """Return (R_g^T R_y(x, y), R_g^T t_tilde)."""
    rot = np.empty((3, 3))
    for i in range(3):
        # row i of R_g^T @ Ry: sum_k r_g[k, i] * Ry[k, :]
        a = r_g[0, i]
        b = r_g[1, i]
        c = r_g[2, i]
        rot[i, 0] = a * x - c * y
        rot[i, 1] = b
        rot[i, 2] = a * y + c * x
    trans = np.empty(3)
    for i in range(3):
        trans[i] = r_g[0, i] * t_tilde[0] + r_g[1, i] * t_tilde[1] + r_g[2, i] * t_tilde[2]
    return rot, trans


# --------------------------------------------------------------------------- public API


def gravity_alignment_rotation(gravity: GravityPrior | np.ndarray) -> np.ndarray:
    """Rotation R_g taking the gravity measurement onto the camera +y axis.

    Uses the axis-angle closed form, with 1 + g_y rewritten as
    (g_x^2 + g_z^2) / (1 - g_y) for g_y < 0 so that it stays accurate as g
    approaches -y. Only for g exactly -y, where the form is undefined, the
    fixed half turn about x, diag(1, -1, -1), is returned.
    """
    if not isinstance(gravity, GravityPrior):
        gravity = GravityPrior(gravity)
    gx, gy, gz = gravity.g
    return _gravity_alignment(float(gx), float(gy), float(gz))


def rotation_about_y(x: float, y: float) -> np.ndarray:
    """Rotation about the y axis from its cosine ``x`` and sine ``y``."""
    if abs(x * x + y * y - 1.0) > 1e-6:
        raise ValueError(f"(x, y) = ({x}, {y}) is not on the unit circle")
    return _rotation_about_y(float(x), float(y))


def compose_pose(r, t_tilde, r_g: np.ndarray) -> Pose:
    """Map a gravity-frame solution (r, T~) back to a camera pose."""
    x, y = float(r[0]), float(r[1])
    if abs(x * x + y * y - 1.0) > 1e-6:
        raise ValueError(f"r = ({x}, {y}) is not on the unit circle")
    rot, trans = _compose(x, y, np.asarray(t_tilde, dtype=np.float64), np.asarray(r_g, dtype=np.float64))
    return Pose(rot, trans)


def transform_features_to_gravity_frame(points, lines, r_g: np.ndarray):
    """Rotate image bearings and line normals by ``r_g``; 3D data is untouched.

    ``points`` and ``lines`` are sequences of :class:`PointCorrespondence` and
    :class:`LineCorrespondence` (see :mod:`posegravity.objective`).
    """
    from .objective import LineCorrespondence, PointCorrespondence

    r_g = np.asarray(r_g, dtype=np.float64)
    new_points = [PointCorrespondence(r_g @ p.image, p.world) for p in points]
    new_lines = [LineCorrespondence(r_g @ ln.normal, ln.world_point, ln.world_direction) for ln in lines]
    return new_points, new_lines


def rotation_angle_error(r_gt: np.ndarray, r_est: np.ndarray) -> float:
    """Angle in degrees of the relative rotation R_gt^T R_est, in [0, 180].

    Evaluated as atan2(sin, cos) of the relative rotation instead of a bare
    arccos of the trace: identical for proper rotations, but arccos cannot
    resolve angles below ~1e-6 degrees.
    """
    rel = (np.asarray(r_gt, dtype=np.float64).T @ np.asarray(r_est, dtype=np.float64)).tolist()
    cos_t = (rel[0][0] + rel[1][1] + rel[2][2] - 1.0) / 2.0
    sin_t = 0.5 * math.sqrt((rel[2][1] - rel[1][2]) ** 2 + (rel[0][2] - rel[2][0]) ** 2
                            + (rel[1][0] - rel[0][1]) ** 2)
    return math.degrees(math.atan2(sin_t, min(1.0, max(-1.0, cos_t))))


def translation_error(t_gt: np.ndarray, t_est: np.ndarray) -> float:
    """Euclidean distance between two translations."""
    diff = np.asarray(t_gt, dtype=np.float64) - np.asarray(t_est, dtype=np.float64)
    return math.sqrt(float(diff @ diff))
