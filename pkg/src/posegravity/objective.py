"""Loss-conic construction.

Given correspondences already rotated into the gravity frame, the squared
point/line residuals are a quadratic in ``r = (x, y, 1)`` and the
translation. The translation is eliminated in closed form (``T = S r``),
leaving a 3x3 positive semidefinite matrix ``omega`` whose quadratic form
``r^T omega r`` is the remaining loss over the unit circle.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .conics import _adjugate_entries, _entries, _matrix, _max_abs
from .errors import DegenerateConfiguration

# Weight sums with a smaller reciprocal condition number are rejected.
RCOND_LIMIT = 1e-12
# sigma_2 / sigma_1 below this marks a rank-one (minimal) loss conic.
RANK_ONE_RATIO = 1e-9


class Case(str, enum.Enum):
    GENERAL = "general"
    MINIMAL = "minimal"
    MINIMAL_RECOVERED = "minimal_recovered"
    PLANAR = "planar"


# integer codes used inside compiled kernels, index into CASE_BY_CODE
CASE_BY_CODE = (Case.GENERAL, Case.MINIMAL, Case.MINIMAL_RECOVERED, Case.PLANAR)
GENERAL, MINIMAL, MINIMAL_RECOVERED, PLANAR = range(4)


def _vec3(v, what: str) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} must be finite, got {arr}")
    return arr


@dataclass(frozen=True)
class PointCorrespondence:
    """Image bearing (normalized camera coordinates) and its 3D world point."""

    image: np.ndarray
    world: np.ndarray

    def __post_init__(self):
        image = _vec3(self.image, "image bearing")
        if not np.any(image):
            raise ValueError("image bearing must be nonzero")
        object.__setattr__(self, "image", image)
        object.__setattr__(self, "world", _vec3(self.world, "world point"))


@dataclass(frozen=True)
class LineCorrespondence:
    """Image line normal and a 3D line given by a point and a direction.

    The direction is normalized on construction; the normal is kept as given.
    """

    normal: np.ndarray
    world_point: np.ndarray
    world_direction: np.ndarray

    def __post_init__(self):
        normal = _vec3(self.normal, "line normal")
        if not np.any(normal):
            raise ValueError("line normal must be nonzero")
        direction = _vec3(self.world_direction, "line direction")
        norm = float(np.linalg.norm(direction))
        if norm == 0.0:
            raise ValueError("line direction must be nonzero")
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "world_point", _vec3(self.world_point, "line point"))
        object.__setattr__(self, "world_direction", direction / norm)


@dataclass(frozen=True)
class SolverOptions:
    """Tunables for objective construction and solving.

    ``delta`` scales the line-direction residual (directions are unit norm).
    ``allow_recovery`` controls whether a minimal problem whose solution line
    misses the unit circle falls back to the nearest circle point.
    ``force_general`` sends every problem through the general conic path,
    which is only useful for cross-checking and timing the special paths.
    """

    delta: float = 100.0
    planar_tolerance: float = 1e-10
    minimal_by_cardinality: bool = True
    tie_tolerance: float = 1e-9
    allow_recovery: bool = True
    force_general: bool = False

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not (self.planar_tolerance > 0 and self.tie_tolerance > 0):
            raise ValueError("tolerances must be positive")
        params = np.array([self.delta, self.planar_tolerance, self.minimal_by_cardinality, self.tie_tolerance,
                           self.allow_recovery, self.force_general], dtype=np.float64)
        params.flags.writeable = False
        object.__setattr__(self, "_params", params)

    @property
    def kernel_params(self) -> np.ndarray:
        """Read-only flat parameter vector consumed by the compiled solver."""
        return self._params


@dataclass(frozen=True)
class Objective:
    omega: np.ndarray
    s_matrix: np.ndarray
    case_tag: Case


# --------------------------------------------------------------------------- kernels


@njit(cache=True)
def _matrix_repr(u):
    out = np.zeros((3, 3))
    out[0, 0] = u[0]
    out[0, 1] = u[2]
    out[1, 2] = u[1]
    out[2, 0] = u[2]
    out[2, 1] = -u[0]
    return out


IDENTITY = (1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0)


@njit(cache=True, inline='always')
def _inverse_entries(w):
    """Inverse of a 3x3 matrix (row-major 9-tuple) via its adjugate, plus the 1-norm rcond."""
    adj = _adjugate_entries(w)
    det = w[0] * adj[0] + w[1] * adj[3] + w[2] * adj[6]
    if det == 0.0 or not np.isfinite(det):
        return adj, 0.0
    inv = (adj[0] / det, adj[1] / det, adj[2] / det,
           adj[3] / det, adj[4] / det, adj[5] / det,
           adj[6] / det, adj[7] / det, adj[8] / det)
    norm_w = 0.0
    norm_inv = 0.0
    for j in range(3):
        norm_w = max(norm_w, abs(w[j]) + abs(w[3 + j]) + abs(w[6 + j]))
        norm_inv = max(norm_inv, abs(inv[j]) + abs(inv[3 + j]) + abs(inv[6 + j]))
    return inv, 1.0 / (norm_w * norm_inv)


@njit(cache=True)
def _inverse_and_rcond(w):
    """Inverse of a 3x3 matrix via its adjugate, plus the 1-norm rcond."""
    inv, rcond = _inverse_entries(_entries(w))
    return _matrix(inv), rcond


@njit(cache=True, inline='always')
def _weight_entries(images, worlds, normals, line_points, rg):
    """Return (sum Q, sum Q A) as row-major 9-tuples. Bearings and normals
    are rotated by rg on the fly."""
    w00 = w01 = w02 = w11 = w12 = w22 = 0.0
    b00 = b01 = b02 = b10 = b11 = b12 = b20 = b21 = b22 = 0.0
    for i in range(images.shape[0]):
        x0, x1, x2 = images[i, 0], images[i, 1], images[i, 2]
        p0 = rg[0] * x0 + rg[1] * x1 + rg[2] * x2
        p1 = rg[3] * x0 + rg[4] * x1 + rg[5] * x2
        p2 = rg[6] * x0 + rg[7] * x1 + rg[8] * x2
        pp = p0 * p0 + p1 * p1 + p2 * p2
        # [p]x^T [p]x = |p|^2 I - p p^T
        q00 = pp - p0 * p0
        q11 = pp - p1 * p1
        q22 = pp - p2 * p2
        q01 = -p0 * p1
        q02 = -p0 * p2
        q12 = -p1 * p2
        w00 += q00
        w01 += q01
        w02 += q02
        w11 += q11
        w12 += q12
        w22 += q22
        dx, dy, dz = worlds[i, 0], worlds[i, 1], worlds[i, 2]
        b00 += dx * q00 + dz * q02
        b01 += dz * q00 - dx * q02
        b02 += dy * q01
        b10 += dx * q01 + dz * q12
        b11 += dz * q01 - dx * q12
        b12 += dy * q11
        b20 += dx * q02 + dz * q22
        b21 += dz * q02 - dx * q22
        b22 += dy * q12
    for j in range(normals.shape[0]):
        x0, x1, x2 = normals[j, 0], normals[j, 1], normals[j, 2]
        n0 = rg[0] * x0 + rg[1] * x1 + rg[2] * x2
        n1 = rg[3] * x0 + rg[4] * x1 + rg[5] * x2
        n2 = rg[6] * x0 + rg[7] * x1 + rg[8] * x2
        mx, my, mz = line_points[j, 0], line_points[j, 1], line_points[j, 2]
        # n n^T A collapses to n (n^T A)
        a0 = n0 * mx + n2 * mz
        a1 = n0 * mz - n2 * mx
        a2 = n1 * my
        w00 += n0 * n0
        w01 += n0 * n1
        w02 += n0 * n2
        w11 += n1 * n1
        w12 += n1 * n2
        w22 += n2 * n2
        b00 += n0 * a0
        b01 += n0 * a1
        b02 += n0 * a2
        b10 += n1 * a0
        b11 += n1 * a1
        b12 += n1 * a2
        b20 += n2 * a0
        b21 += n2 * a1
        b22 += n2 * a2
    return ((w00, w01, w02, w01, w11, w12, w02, w12, w22),
            (b00, b01, b02, b10, b11, b12, b20, b21, b22))


@njit(cache=True)
def _weight_sums(images, worlds, normals, line_points):
    """Return (sum Q, sum Q A) over points and lines."""
    w, b = _weight_entries(images, worlds, normals, line_points, IDENTITY)
    return _matrix(w), _matrix(b)


@njit(cache=True, inline='always')
def _loss_entries(images, worlds, normals, line_points, line_dirs, rg, s, delta):
    """Sum of (A + S)^T Q (A + S) over all features plus the direction term.

    Bearings and normals are rotated by rg and line directions normalized on
    the fly. Only the upper triangle is accumulated, so symmetry is exact.
    """
    s00, s01, s02, s10, s11, s12, s20, s21, s22 = s
    o00 = o01 = o02 = o11 = o12 = o22 = 0.0
    for i in range(images.shape[0]):
        u0, u1, u2 = worlds[i, 0], worlds[i, 1], worlds[i, 2]
        # C = matrix_repr(u) + S
        c00, c01, c02 = s00 + u0, s01 + u2, s02
        c10, c11, c12 = s10, s11, s12 + u1
        c20, c21, c22 = s20 + u2, s21 - u0, s22
        x0, x1, x2 = images[i, 0], images[i, 1], images[i, 2]
        p0 = rg[0] * x0 + rg[1] * x1 + rg[2] * x2
        p1 = rg[3] * x0 + rg[4] * x1 + rg[5] * x2
        p2 = rg[6] * x0 + rg[7] * x1 + rg[8] * x2
        # column k of [p]x C is p x C[:, k]
        m00 = p1 * c20 - p2 * c10
        m10 = p2 * c00 - p0 * c20
        m20 = p0 * c10 - p1 * c00
        m01 = p1 * c21 - p2 * c11
        m11 = p2 * c01 - p0 * c21
        m21 = p0 * c11 - p1 * c01
        m02 = p1 * c22 - p2 * c12
        m12 = p2 * c02 - p0 * c22
        m22 = p0 * c12 - p1 * c02
        o00 += m00 * m00 + m10 * m10 + m20 * m20
        o01 += m00 * m01 + m10 * m11 + m20 * m21
        o02 += m00 * m02 + m10 * m12 + m20 * m22
        o11 += m01 * m01 + m11 * m11 + m21 * m21
        o12 += m01 * m02 + m11 * m12 + m21 * m22
        o22 += m02 * m02 + m12 * m12 + m22 * m22
    d2 = delta * delta
    for j in range(normals.shape[0]):
        u0, u1, u2 = line_points[j, 0], line_points[j, 1], line_points[j, 2]
        c00, c01, c02 = s00 + u0, s01 + u2, s02
        c10, c11, c12 = s10, s11, s12 + u1
        c20, c21, c22 = s20 + u2, s21 - u0, s22
        x0, x1, x2 = normals[j, 0], normals[j, 1], normals[j, 2]
        n0 = rg[0] * x0 + rg[1] * x1 + rg[2] * x2
        n1 = rg[3] * x0 + rg[4] * x1 + rg[5] * x2
        n2 = rg[6] * x0 + rg[7] * x1 + rg[8] * x2
        w0 = n0 * c00 + n1 * c10 + n2 * c20
        w1 = n0 * c01 + n1 * c11 + n2 * c21
        w2 = n0 * c02 + n1 * c12 + n2 * c22
        v0, v1, v2 = line_dirs[j, 0], line_dirs[j, 1], line_dirs[j, 2]
        vn = math.sqrt(v0 * v0 + v1 * v1 + v2 * v2)
        v0 /= vn
        v1 /= vn
        v2 /= vn
        e0 = n0 * v0 + n2 * v2
        e1 = n0 * v2 - n2 * v0
        e2 = n1 * v1
        o00 += w0 * w0 + d2 * e0 * e0
        o01 += w0 * w1 + d2 * e0 * e1
        o02 += w0 * w2 + d2 * e0 * e2
        o11 += w1 * w1 + d2 * e1 * e1
        o12 += w1 * w2 + d2 * e1 * e2
        o22 += w2 * w2 + d2 * e2 * e2
    return (o00, o01, o02, o01, o11, o12, o02, o12, o22)


@njit(cache=True, inline='always')
def _neg_product(x, y):
    """-(x @ y) for row-major 9-tuples."""
    return (-(x[0] * y[0] + x[1] * y[3] + x[2] * y[6]),
            -(x[0] * y[1] + x[1] * y[4] + x[2] * y[7]),
            -(x[0] * y[2] + x[1] * y[5] + x[2] * y[8]),
            -(x[3] * y[0] + x[4] * y[3] + x[5] * y[6]),
            -(x[3] * y[1] + x[4] * y[4] + x[5] * y[7]),
            -(x[3] * y[2] + x[4] * y[5] + x[5] * y[8]),
            -(x[6] * y[0] + x[7] * y[3] + x[8] * y[6]),
            -(x[6] * y[1] + x[7] * y[4] + x[8] * y[7]),
            -(x[6] * y[2] + x[7] * y[5] + x[8] * y[8]))


@njit(cache=True, inline='always')
def _build_entries(images, worlds, normals, line_points, line_dirs, rg, delta):
    """Return (omega, S, rcond) as 9-tuples; both are zero unless rcond passes."""
    w, b = _weight_entries(images, worlds, normals, line_points, rg)
    inv, rcond = _inverse_entries(w)
    if rcond < RCOND_LIMIT:
        zero = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        return zero, zero, rcond
    s = _neg_product(inv, b)
    omega = _loss_entries(images, worlds, normals, line_points, line_dirs, rg, s, delta)
    return omega, s, rcond


@njit(cache=True)
def _build(images, worlds, normals, line_points, line_dirs, delta):
    """Return (omega, S, rcond). omega and S are only meaningful if rcond passes."""
    omega, s, rcond = _build_entries(images, worlds, normals, line_points, line_dirs, IDENTITY, delta)
    return _matrix(omega), _matrix(s), rcond


@njit(cache=True)
def _classify_entries(o, n, m, planar_tol, minimal_by_cardinality):
    scale = _max_abs(o)
    last = max(abs(o[2]), abs(o[5]), abs(o[6]), abs(o[7]), abs(o[8]))
    if last < planar_tol * scale:
        return PLANAR
    if minimal_by_cardinality and n + m == 2 and n >= 1:
        return MINIMAL
    # |adj|_F >= |l1 l2| and |omega|_F >= |l1|, so a large adjugate rules out
    # rank one without an eigen-decomposition; the factor 4 > sqrt(3) covers rounding
    g = _adjugate_entries(o)
    adj2 = 0.0
    fro2 = 0.0
    for k in range(9):
        adj2 += g[k] * g[k]
        fro2 += o[k] * o[k]
    if adj2 > (4.0 * RANK_ONE_RATIO * fro2) ** 2:
        return GENERAL
    ev = np.linalg.eigvalsh(_matrix(o))
    top = max(abs(ev[0]), abs(ev[2]))
    if top > 0.0 and abs(ev[1]) < RANK_ONE_RATIO * top:
        return MINIMAL
    return GENERAL


@njit(cache=True)
def _classify(omega, n, m, planar_tol, minimal_by_cardinality):
    return _classify_entries(_entries(omega), n, m, planar_tol, minimal_by_cardinality)


# --------------------------------------------------------------------------- array helpers


def point_arrays(points) -> tuple[np.ndarray, np.ndarray]:
    """Stack point correspondences into (images, worlds) arrays of shape (n, 3)."""
    if not points:
        return np.zeros((0, 3)), np.zeros((0, 3))
    return (np.array([p.image for p in points], dtype=np.float64),
            np.array([p.world for p in points], dtype=np.float64))


def line_arrays(lines) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack line correspondences into (normals, points, directions) arrays."""
    if not lines:
        return np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3))
    return (np.array([ln.normal for ln in lines], dtype=np.float64),
            np.array([ln.world_point for ln in lines], dtype=np.float64),
            np.array([ln.world_direction for ln in lines], dtype=np.float64))


# --------------------------------------------------------------------------- public API


def matrix_repr(u) -> np.ndarray:
    """3x3 matrix ``U`` with ``U @ (x, y, 1) == rotation_about_y(x, y) @ u``."""
    return _matrix_repr(np.asarray(u, dtype=np.float64))


def point_weight(p) -> np.ndarray:
    """[p]x^T [p]x, the PSD weight of a point residual (kernel spanned by p)."""
    p = np.asarray(p, dtype=np.float64)
    return float(p @ p) * np.eye(3) - np.outer(p, p)


def line_weight(n) -> np.ndarray:
    """n n^T, the rank-one weight of a line residual."""
    n = np.asarray(n, dtype=np.float64)
    return np.outer(n, n)


def weight_matrix(points, lines) -> np.ndarray:
    """Sum of all point and line weights."""
    images, worlds = point_arrays(points)
    normals, lpoints, _ = line_arrays(lines)
    return _weight_sums(images, worlds, normals, lpoints)[0]


def reciprocal_condition(w) -> float:
    """1-norm reciprocal condition number of a 3x3 matrix (0 when singular)."""
    return float(_inverse_and_rcond(np.asarray(w, dtype=np.float64))[1])


def translation_solver_matrix(points, lines) -> np.ndarray:
    """Matrix ``S`` such that ``T = S @ r`` minimizes the residual for fixed r.

    Raises DegenerateConfiguration when the weight sum is (nearly) singular,
    e.g. a single point, two lines, or repeated features.
    """
    images, worlds = point_arrays(points)
    normals, lpoints, _ = line_arrays(lines)
    w, b = _weight_sums(images, worlds, normals, lpoints)
    inv, rcond = _inverse_and_rcond(w)
    if rcond < RCOND_LIMIT:
        raise DegenerateConfiguration(f"weight sum is singular (rcond={rcond:.3g})")
    return -inv @ b


def build_objective(points, lines, options: SolverOptions | None = None) -> Objective:
    """Build the loss conic for gravity-frame correspondences and classify it."""
    options = options or SolverOptions()
    images, worlds = point_arrays(points)
    normals, lpoints, ldirs = line_arrays(lines)
    omega, s, rcond = _build(images, worlds, normals, lpoints, ldirs, float(options.delta))
    if rcond < RCOND_LIMIT:
        raise DegenerateConfiguration(f"weight sum is singular (rcond={rcond:.3g})")
    case = classify_configuration(omega, len(points), len(lines), options)
    return Objective(omega, s, case)


def classify_configuration(omega, n: int, m: int, options: SolverOptions | None = None) -> Case:
    """Planar if omega's last row/column vanish, Minimal if rank one, else General."""
    options = options or SolverOptions()
    code = _classify(np.asarray(omega, dtype=np.float64), n, m,
                     float(options.planar_tolerance), bool(options.minimal_by_cardinality))
    return CASE_BY_CODE[code]
