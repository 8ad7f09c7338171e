"""Shared constructions for the test suites.

Scenes here are built directly in the gravity frame, without the benchmark
generator, so the solver tests do not lean on the code they are checking.
"""
import math

import numpy as np

from posegravity.conics import _intersect_unit_circle
from posegravity.objective import (
    LineCorrespondence,
    PointCorrespondence,
    _build,
    _inverse_and_rcond,
    _weight_sums,
)
from posegravity import NoSolution
from posegravity.solver import solve_minimal


def rot_y(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def random_rotation(rng):
    q = rng.standard_normal(4)
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def gravity_frame_scene(rng, n, m, planar=False, noise=0.0):
    """Correspondences for a camera rotated by rot_y(theta) and translated by t.

    Returns (points, lines, theta, t). World points lie in front of the
    camera; with ``planar`` they all have y = 0.
    """
    theta = rng.uniform(-math.pi, math.pi)
    rot = rot_y(theta)
    t = rng.standard_normal(3)

    def world_point():
        cam = np.append(rng.uniform(-1, 1, 2), 1.0) * rng.uniform(1.0, 10.0)
        if planar:
            # push the camera-frame point along its ray until world y = 0
            ray = rot.T @ cam
            center = -rot.T @ t
            s = -center[1] / ray[1]
            if s <= 0:
                return world_point()
            world = center + s * ray
            world[1] = 0.0
            return world
        return rot.T @ (cam - t)

    def observe(world):
        cam = rot @ world + t
        return cam / cam[2] + np.append(noise * rng.standard_normal(2), 0.0)

    points = []
    for _ in range(n):
        d = world_point()
        points.append(PointCorrespondence(observe(d), d))
    lines = []
    for _ in range(m):
        a, b = world_point(), world_point()
        lines.append(LineCorrespondence(np.cross(observe(a), observe(b)), a, b - a))
    return points, lines, theta, t


def scene_arrays(points, lines):
    images = np.array([p.image for p in points]).reshape(-1, 3)
    worlds = np.array([p.world for p in points]).reshape(-1, 3)
    normals = np.array([ln.normal for ln in lines]).reshape(-1, 3)
    lpts = np.array([ln.world_point for ln in lines]).reshape(-1, 3)
    ldirs = np.array([ln.world_direction for ln in lines]).reshape(-1, 3)
    return images, worlds, normals, lpts, ldirs


def lstsq_loss(points, lines, r, delta=100.0):
    """Loss at rotation r = (x, y) with the translation fitted by numpy lstsq."""
    x, y = r
    rot = np.array([[x, 0.0, y], [0.0, 1.0, 0.0], [-y, 0.0, x]])
    rows, rhs = [], []
    for p in points:
        px = np.array([[0, -p.image[2], p.image[1]], [p.image[2], 0, -p.image[0]],
                       [-p.image[1], p.image[0], 0]])
        rows.append(px)
        rhs.append(-px @ rot @ p.world)
    for ln in lines:
        rows.append(ln.normal[None, :])
        rhs.append(np.array([-ln.normal @ rot @ ln.world_point]))
    a = np.vstack(rows)
    b = np.concatenate(rhs)
    t = np.linalg.lstsq(a, b, rcond=None)[0]
    res = a @ t - b
    direction = sum((ln.normal @ rot @ ln.world_direction) ** 2 for ln in lines)
    return float(res @ res) + delta ** 2 * direction


# --------------------------------------------------------------------------- invertibility, rank and recovery suites


def _unit_rows(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _independence(cls, a, b, c):
    """A scale-free measure of how far a sample is from the dependent set."""
    if cls == "2 points":
        return np.linalg.norm(np.cross(_unit_rows(a), _unit_rows(b)))
    if cls == "3 lines":
        return abs(np.linalg.det(_unit_rows(np.stack([a, b, c]))))
    return abs(_unit_rows(a) @ _unit_rows(b))


def weight_sum_min_rcond(cls, samples, seed=0, margin=1e-4):
    """Smallest reciprocal condition of the weight sum over random inputs of a class.

    Bearings and normals get uniform directions and norms in [0.5, 2].
    Independence is enforced with a fixed margin: samples closer than
    ``margin`` to linear dependence are redrawn.
    """
    rng = np.random.default_rng(seed)
    worst = math.inf
    zero = np.zeros((0, 3))
    done = 0
    while done < samples:
        a, b, c = _unit_rows(rng.standard_normal((3, 3))) * rng.uniform(0.5, 2.0, (3, 1))
        if _independence(cls, a, b, c) < margin:
            continue
        if cls == "2 points":
            w, _ = _weight_sums(np.stack([a, b]), rng.standard_normal((2, 3)) * 10, zero, zero)
        elif cls == "3 lines":
            w, _ = _weight_sums(zero, zero, np.stack([a, b, c]), rng.standard_normal((3, 3)) * 10)
        else:
            w, _ = _weight_sums(a[None], rng.standard_normal((1, 3)) * 10, b[None], rng.standard_normal((1, 3)) * 10)
        worst = min(worst, _inverse_and_rcond(w)[1])
        done += 1
    return worst


def minimal_rank_ratio(cls, samples, seed=0):
    """Largest sigma_2 / sigma_1 of omega over random minimal inputs (arbitrary data, not exact)."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    zero = np.zeros((0, 3))
    for _ in range(samples):
        if cls == "2 points":
            args = (rng.standard_normal((2, 3)), rng.standard_normal((2, 3)) * 5, zero, zero, zero)
        else:
            args = (rng.standard_normal((1, 3)), rng.standard_normal((1, 3)) * 5, rng.standard_normal((1, 3)),
                    rng.standard_normal((1, 3)) * 5, _unit_rows(rng.standard_normal((1, 3))))
        omega, _, rcond = _build(*args, 100.0)
        if rcond < 1e-10:
            continue
        sv = np.linalg.svd(omega, compute_uv=False)
        worst = max(worst, sv[1] / sv[0])
    return worst


def recovery_worst_excess(samples, grid=10_000, seed=0):
    """Recovery on rank-one conics whose line misses the circle.

    Returns (worst loss excess of the recovered point over the circle grid
    relative to the grid loss, count of cases where recovery did not fire).
    """
    rng = np.random.default_rng(seed)
    theta = np.arange(grid) * (2 * math.pi / grid)
    circle = np.column_stack([np.cos(theta), np.sin(theta), np.ones(grid)])
    worst = -math.inf
    missed = 0
    for _ in range(samples):
        ab = rng.standard_normal(2)
        # |c| > |(a, b)| keeps the line off the circle
        c = np.linalg.norm(ab) * rng.uniform(1.0001, 10.0) * rng.choice([-1.0, 1.0])
        line = np.array([ab[0], ab[1], c])
        assert _intersect_unit_circle(line)[0] == 0
        try:
            pts, recovered = solve_minimal(np.outer(line, line), True)
        except NoSolution:
            missed += 1
            continue
        if len(pts) != 1 or not recovered:
            missed += 1
            continue
        r = np.array([pts[0][0], pts[0][1], 1.0])
        grid_best = np.min((circle @ line) ** 2)
        worst = max(worst, ((line @ r) ** 2 - grid_best) / grid_best)
    return worst, missed
