"""Absolute pose from points and lines given a gravity (rotation axis) prior.

Pipeline: rotate the image features so gravity is the camera +y axis, build
the loss conic, then pick one of three solution paths:

* planar  - all 3D features lie on y = 0; minimizer is a 2x2 eigenvector
* minimal - two features; the loss conic is a double line, intersect it
            with the circle (or take the nearest circle point)
* general - pencil-of-conics intersection of derivative conic and circle

Every step runs inside one compiled kernel so a 20-point solve costs a few
microseconds; the Python layer only validates input and wraps the result.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .conics import (
    INFINITE_LINE,
    _circle_hits,
    _closest_circle_point,
    _depressed_cubic_root,
    _derivative_entries,
    _entries,
    _max_abs,
    _pencil_terms,
    _rank_one_entries,
    _split_entries,
)
from .errors import DegenerateConfiguration, NoSolution
from .geometry import GravityPrior, Pose, _alignment_entries
from .objective import (
    CASE_BY_CODE,
    GENERAL,
    MINIMAL,
    MINIMAL_RECOVERED,
    PLANAR,
    RCOND_LIMIT,
    Case,
    Objective,
    SolverOptions,
    _build_entries,
    _classify_entries,
    line_arrays,
    point_arrays,
)

FALLBACK_SAMPLES = 1024
# candidate circle points closer than this are the same stationary point
DUPLICATE_TOL = 1e-9

OK, DEGENERATE, NO_SOLUTION = range(3)
_DEFAULT_OPTIONS = SolverOptions()


@dataclass(frozen=True)
class Solution:
    pose: Pose
    r: tuple[float, float]
    loss: float


@dataclass(frozen=True)
class SolutionSet:
    """One or two equally good poses.

    ``used_fallback`` is set when the general path found no real circle
    intersection and a dense angle search supplied the answer instead.
    """

    solutions: list[Solution]
    case: Case
    used_fallback: bool = False
    objective: Objective | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.solutions)

    def __iter__(self):
        return iter(self.solutions)

    @property
    def best(self) -> Solution:
        return self.solutions[0]

    @property
    def recovered(self) -> bool:
        return self.case is Case.MINIMAL_RECOVERED


# --------------------------------------------------------------------------- kernels
#
# omega and S travel as row-major 9-tuples (see conics); the result buffer
# passed to _estimate is the only array the pipeline writes.


@njit(cache=True)
def _loss(o, x, y):
    return o[0] * x * x + 2.0 * o[1] * x * y + o[4] * y * y + 2.0 * (o[2] * x + o[5] * y) + o[8]


@njit(cache=True)
def _planar_root(o):
    o00, o01, o11 = o[0], o[1], o[4]
    if o01 == 0.0:
        if o00 <= o11:
            return 1.0, 0.0
        return 0.0, 1.0
    diff = o00 - o11
    root = math.sqrt(diff * diff + 4.0 * o01 * o01)
    if diff >= 0.0:
        k0 = -2.0 * o01
        k1 = diff + root
    else:
        # same direction as (-2 o01, diff + root) without the cancellation
        sgn = -1.0 if o01 > 0.0 else 1.0
        k0 = sgn * (root - diff)
        k1 = sgn * (-2.0 * o01)
    n = math.hypot(k0, k1)
    return k0 / n, k1 / n


@njit(cache=True)
def _minimal(o, allow_recovery):
    """Return (status, count, x0, y0, x1, y1, recovered)."""
    if _max_abs(o) == 0.0:
        return NO_SOLUTION, 0, 0.0, 0.0, 0.0, 0.0, False
    a, b, c = _rank_one_entries(o)
    if a * a + b * b <= INFINITE_LINE * c * c:
        return NO_SOLUTION, 0, 0.0, 0.0, 0.0, 0.0, False
    count, x0, y0, x1, y1 = _circle_hits(a, b, c)
    if count > 0:
        return OK, count, x0, y0, x1, y1, False
    if not allow_recovery:
        return NO_SOLUTION, 0, 0.0, 0.0, 0.0, 0.0, False
    x, y = _closest_circle_point(a, b, c)
    return OK, 1, x, y, 0.0, 0.0, True


@njit(cache=True)
def _grid_minimum(o, samples):
    """Dense angle search with Newton polish; safety net for the general path."""
    best = 0
    best_loss = np.inf
    step = 2.0 * math.pi / samples
    for k in range(samples):
        t = k * step
        v = _loss(o, math.cos(t), math.sin(t))
        if v < best_loss:
            best_loss = v
            best = k
    theta = best * step
    for _ in range(20):
        c = math.cos(theta)
        s = math.sin(theta)
        d1 = (2.0 * (o[4] - o[0]) * c * s + 2.0 * o[1] * (c * c - s * s)
              - 2.0 * o[2] * s + 2.0 * o[5] * c)
        d2 = (2.0 * (o[4] - o[0]) * (c * c - s * s) - 8.0 * o[1] * c * s
              - 2.0 * o[2] * c - 2.0 * o[5] * s)
        if not d2 > 0.0:
            break
        nxt = theta - d1 / d2
        if abs(nxt - theta) > step or _loss(o, math.cos(nxt), math.sin(nxt)) > _loss(o, c, s):
            break
        theta = nxt
    return math.cos(theta), math.sin(theta)


@njit(cache=True, inline='always')
def _near(ax, ay, bx, by):
    return abs(ax - bx) + abs(ay - by) < DUPLICATE_TOL


@njit(cache=True, inline='always')
def _rank(top, x, y, loss):
    """Fold a candidate into (count, x0, y0, l0, x1, y1, l1), keeping the earlier one on ties."""
    count, x0, y0, l0, x1, y1, l1 = top
    if count == 0:
        return 1, x, y, loss, 0.0, 0.0, 0.0
    if loss < l0:
        return 2, x, y, loss, x0, y0, l0
    if count == 1 or loss < l1:
        return 2, x0, y0, l0, x, y, loss
    return top


@njit(cache=True)
def _general(o, tie_tol):
    """Return (count, x0, y0, x1, y1, loss0, loss1, used_fallback)."""
    lam = _derivative_entries(o)
    a, b = _pencil_terms(lam)
    gamma = _depressed_cubic_root(a, b)
    sigma = (lam[0] + gamma, lam[1], lam[2],
             lam[3], lam[4] + gamma, lam[5],
             lam[6], lam[7], lam[8] - gamma)
    nlines, l1, l2 = _split_entries(sigma, 1e-14 * _max_abs(o))

    # up to four circle points, duplicates dropped in order of appearance
    n1, px, py, qx, qy = -1, 0.0, 0.0, 0.0, 0.0
    n2, ux, uy, vx, vy = -1, 0.0, 0.0, 0.0, 0.0
    if nlines >= 1:
        n1, px, py, qx, qy = _circle_hits(l1[0], l1[1], l1[2])
    if nlines == 2:
        n2, ux, uy, vx, vy = _circle_hits(l2[0], l2[1], l2[2])
    take_p = n1 >= 1
    take_q = n1 == 2 and not _near(qx, qy, px, py)
    take_u = (n2 >= 1 and not (take_p and _near(ux, uy, px, py))
              and not (take_q and _near(ux, uy, qx, qy)))
    take_v = (n2 == 2 and not (take_p and _near(vx, vy, px, py))
              and not (take_q and _near(vx, vy, qx, qy))
              and not (take_u and _near(vx, vy, ux, uy)))

    top = (0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    if take_p:
        top = _rank(top, px, py, _loss(o, px, py))
    if take_q:
        top = _rank(top, qx, qy, _loss(o, qx, qy))
    if take_u:
        top = _rank(top, ux, uy, _loss(o, ux, uy))
    if take_v:
        top = _rank(top, vx, vy, _loss(o, vx, vy))
    count, x0, y0, l0, x1, y1, l1 = top

    if count == 0:
        x, y = _grid_minimum(o, FALLBACK_SAMPLES)
        return 1, x, y, 0.0, 0.0, _loss(o, x, y), 0.0, True

    norm = 0.0
    for k in range(9):
        norm += o[k] * o[k]
    if count == 1 or l1 > l0 + tie_tol * math.sqrt(norm):
        return 1, x0, y0, 0.0, 0.0, l0, 0.0, False
    if l0 == l1 and math.atan2(y1, x1) < math.atan2(y0, x0):
        x0, y0, x1, y1 = x1, y1, x0, y0
    return 2, x0, y0, x1, y1, l0, l1, False


# layout of the flat result buffer written by _estimate
_STATUS, _CASE, _COUNT, _FALLBACK = 0, 1, 2, 3
_PTS, _LOSSES, _ROTS, _TRANS, _OMEGA, _S, _OUT_SIZE = 4, 8, 10, 28, 34, 43, 52


@njit(cache=True, inline='always')
def _has_zero_row(vecs):
    for j in range(vecs.shape[0]):
        if vecs[j, 0] == 0.0 and vecs[j, 1] == 0.0 and vecs[j, 2] == 0.0:
            return True
    return False


@njit(cache=True)
def _solve(o, rcond, n, m, planar_tol, minimal_by_cardinality, tie_tol, allow_recovery, force_general):
    """Scalar back end: (status, case, count, x0, y0, x1, y1, loss0, loss1, used_fallback)."""
    if rcond < RCOND_LIMIT:
        return DEGENERATE, GENERAL, 0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, False
    case = GENERAL if force_general else _classify_entries(o, n, m, planar_tol, minimal_by_cardinality)
    if case == PLANAR:
        x0, y0 = _planar_root(o)
        x1, y1 = -x0, -y0
        loss0 = _loss(o, x0, y0)
        loss1 = _loss(o, x1, y1)
        if loss1 < loss0 or (loss1 == loss0 and math.atan2(y1, x1) < math.atan2(y0, x0)):
            return OK, case, 2, x1, y1, x0, y0, loss1, loss0, False
        return OK, case, 2, x0, y0, x1, y1, loss0, loss1, False
    if case == MINIMAL:
        status, count, x0, y0, x1, y1, recovered = _minimal(o, allow_recovery)
        if status != OK:
            return status, case, 0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, False
        if recovered:
            case = MINIMAL_RECOVERED
        loss0 = _loss(o, x0, y0)
        if count == 1:
            return OK, case, 1, x0, y0, 0.0, 0.0, loss0, 0.0, False
        loss1 = _loss(o, x1, y1)
        if loss1 < loss0 or (loss1 == loss0 and math.atan2(y1, x1) < math.atan2(y0, x0)):
            return OK, case, 2, x1, y1, x0, y0, loss1, loss0, False
        return OK, case, 2, x0, y0, x1, y1, loss0, loss1, False
    count, x0, y0, x1, y1, loss0, loss1, fallback = _general(o, tie_tol)
    return OK, case, count, x0, y0, x1, y1, loss0, loss1, fallback


@njit(cache=True, inline='always')
def _write(out, status, case, count, fallback, x0, y0, x1, y1, loss0, loss1, rg, o, s):
    out[_STATUS] = status
    out[_CASE] = case
    out[_COUNT] = count
    out[_FALLBACK] = 1.0 if fallback else 0.0
    out[_PTS] = x0
    out[_PTS + 1] = y0
    out[_PTS + 2] = x1
    out[_PTS + 3] = y1
    out[_LOSSES] = loss0
    out[_LOSSES + 1] = loss1
    for k in range(9):
        out[_OMEGA + k] = o[k]
        out[_S + k] = s[k]
    for k in range(2):
        x = x0 if k == 0 else x1
        y = y0 if k == 0 else y1
        t0 = s[0] * x + s[1] * y + s[2]
        t1 = s[3] * x + s[4] * y + s[5]
        t2 = s[6] * x + s[7] * y + s[8]
        live = 1.0 if k < count else 0.0
        rot = _ROTS + 9 * k
        for i in range(3):
            # R = R_g^T R_y(x, y), T = R_g^T t_tilde
            ra = rg[i]
            rb = rg[3 + i]
            rc = rg[6 + i]
            out[rot + 3 * i] = live * (ra * x - rc * y)
            out[rot + 3 * i + 1] = live * rb
            out[rot + 3 * i + 2] = live * (ra * y + rc * x)
            out[_TRANS + 3 * k + i] = live * (ra * t0 + rb * t1 + rc * t2)


@njit(cache=True)
def _estimate(images, worlds, normals, line_points, line_dirs, g, params, out):
    """Full pipeline writing status, case, count, fallback flag, r, losses,
    rotations, translations, omega and S into the flat buffer ``out``.

    ``params`` holds delta, planar tolerance, cardinality flag, tie tolerance,
    recovery flag and the force-general flag. A zero line direction sets
    the status to -1 and leaves the rest of ``out`` zero.
    """
    rg = _alignment_entries(g[0], g[1], g[2])
    if _has_zero_row(line_dirs):
        zero = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        _write(out, -1, GENERAL, 0, False, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, rg, zero, zero)
        return
    o, s, rcond = _build_entries(images, worlds, normals, line_points, line_dirs, rg, params[0])
    status, case, count, x0, y0, x1, y1, loss0, loss1, fallback = _solve(
        o, rcond, images.shape[0], normals.shape[0], params[1], params[2] != 0.0, params[3],
        params[4] != 0.0, params[5] != 0.0)
    _write(out, status, case, count, fallback, x0, y0, x1, y1, loss0, loss1, rg, o, s)


# --------------------------------------------------------------------------- public API


def solve_planar(omega) -> tuple[tuple[float, float], tuple[float, float]]:
    """Antipodal minimizers of the upper-left 2x2 block of omega on the circle."""
    x, y = _planar_root(_entries(np.asarray(omega, dtype=np.float64)))
    return (x, y), (-x, -y)


def solve_minimal(omega, allow_recovery: bool = True) -> tuple[list[tuple[float, float]], bool]:
    """Solutions of a rank-one loss conic and whether the nearest-point recovery fired."""
    status, count, x0, y0, x1, y1, recovered = _minimal(_entries(np.asarray(omega, dtype=np.float64)),
                                                        bool(allow_recovery))
    if status != OK:
        raise NoSolution("rank-one loss conic has no feasible minimizer")
    return [(x0, y0), (x1, y1)][:count], bool(recovered)


def solve_general(omega, options: SolverOptions | None = None) -> tuple[list[tuple[float, float]], bool]:
    """Global minimizers of r^T omega r on the circle, plus the fallback flag."""
    options = options or SolverOptions()
    count, x0, y0, x1, y1, _, _, fallback = _general(_entries(np.asarray(omega, dtype=np.float64)),
                                                     float(options.tie_tolerance))
    return [(x0, y0), (x1, y1)][:count], bool(fallback)


_EMPTY = np.zeros((0, 3))
_EMPTY.flags.writeable = False


def _as_rows(a) -> np.ndarray:
    if type(a) is np.ndarray and a.dtype == np.float64 and a.ndim == 2 and a.shape[1] == 3 \
            and a.flags.c_contiguous:
        return a
    return np.ascontiguousarray(np.asarray(a, dtype=np.float64).reshape(-1, 3))


def estimate_pose_arrays(images, worlds, normals=None, line_points=None, line_directions=None,
                         gravity=(0.0, 1.0, 0.0), options: SolverOptions | None = None) -> SolutionSet:
    """Array front end of :func:`estimate_pose`.

    ``images``/``worlds`` are (n, 3) bearings and world points; ``normals``,
    ``line_points`` and ``line_directions`` are (m, 3). Line directions need
    not be normalized.
    """
    params = (options or _DEFAULT_OPTIONS).kernel_params
    images = _as_rows(images)
    worlds = _as_rows(worlds)
    normals = _EMPTY if normals is None else _as_rows(normals)
    line_points = _EMPTY if line_points is None else _as_rows(line_points)
    line_directions = _EMPTY if line_directions is None else _as_rows(line_directions)
    if images.shape != worlds.shape or not (normals.shape == line_points.shape == line_directions.shape):
        raise ValueError("correspondence arrays have mismatched shapes")
    g = gravity.g if isinstance(gravity, GravityPrior) else GravityPrior(gravity).g

    out = np.empty(_OUT_SIZE)
    _estimate(images, worlds, normals, line_points, line_directions, g, params, out)
    head = out[:4].tolist()
    status = head[_STATUS]
    if status < 0:
        raise ValueError("line directions must be nonzero")
    if status == DEGENERATE:
        raise DegenerateConfiguration("features do not constrain the translation")
    case = CASE_BY_CODE[int(head[_CASE])]
    if status == NO_SOLUTION:
        raise NoSolution(f"{case.value} problem has no feasible rotation")
    count = int(head[_COUNT])
    rotations = out[_ROTS:_TRANS].reshape(2, 3, 3)
    translations = out[_TRANS:_OMEGA].reshape(2, 3)
    pts = out[_PTS:_LOSSES].tolist()
    losses = out[_LOSSES:_ROTS].tolist()
    solutions = [Solution(Pose.trusted(rotations[k], translations[k]), (pts[2 * k], pts[2 * k + 1]), losses[k])
                 for k in range(count)]
    objective = Objective(out[_OMEGA:_S].reshape(3, 3), out[_S:].reshape(3, 3),
                          Case.MINIMAL if case is Case.MINIMAL_RECOVERED else case)
    return SolutionSet(solutions, case, head[_FALLBACK] != 0.0, objective)


def estimate_pose(points, lines=(), gravity=(0.0, 1.0, 0.0), options: SolverOptions | None = None) -> SolutionSet:
    """Estimate camera pose from point/line correspondences and a gravity vector.

    ``points`` are :class:`PointCorrespondence`, ``lines`` are
    :class:`LineCorrespondence`; ``gravity`` is the world y axis seen in the
    camera frame. Returns the one or two global minimizers of the
    least-squares residual, best first.
    """
    images, worlds = point_arrays(list(points))
    normals, lpoints, ldirs = line_arrays(list(lines))
    return estimate_pose_arrays(images, worlds, normals, lpoints, ldirs, gravity, options)
