"""Brute-force reference solver.

Searches the single free rotation angle directly: a dense grid over
``theta`` followed by golden-section refinement. It shares nothing with the
conic machinery, which is what makes it useful as a check on it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import GravityPrior, Pose, compose_pose, gravity_alignment_rotation, transform_features_to_gravity_frame
from .objective import SolverOptions, build_objective

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class OracleResult:
    theta: float
    r: tuple[float, float]
    loss: float
    pose: Pose | None = None


def loss_at(omega, theta):
    """(cos t, sin t, 1)^T omega (cos t, sin t, 1); ``theta`` may be an array."""
    omega = np.asarray(omega, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    r = np.stack([np.cos(theta), np.sin(theta), np.ones_like(theta)], axis=-1)
    out = np.einsum("...i,ij,...j->...", r, omega, r)
    return float(out) if out.ndim == 0 else out


def grid_search(omega, samples: int = 4096, refine_iters: int = 60) -> OracleResult:
    """Global minimum of the loss over the circle by sampling then golden section."""
    if samples < 256:
        raise ValueError("grid_search needs at least 256 samples")
    step = 2.0 * math.pi / samples
    thetas = np.arange(samples) * step
    k = int(np.argmin(loss_at(omega, thetas)))
    lo, hi = thetas[k] - step, thetas[k] + step
    c = hi - _INVPHI * (hi - lo)
    d = lo + _INVPHI * (hi - lo)
    fc, fd = loss_at(omega, c), loss_at(omega, d)
    for _ in range(refine_iters):
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - _INVPHI * (hi - lo)
            fc = loss_at(omega, c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INVPHI * (hi - lo)
            fd = loss_at(omega, d)
    theta = c if fc < fd else d
    best = min(fc, fd)
    # never report worse than the best grid sample
    if loss_at(omega, thetas[k]) < best:
        theta, best = thetas[k], loss_at(omega, thetas[k])
    theta = math.remainder(theta, 2.0 * math.pi)
    return OracleResult(theta, (math.cos(theta), math.sin(theta)), float(best))


def full_pose_residual(pose: Pose, points, lines, delta: float = 100.0) -> float:
    """Sum of squared point, line and line-direction residuals of a pose.

    Works on the original (not gravity-aligned) features and does not use the
    translation elimination at all.
    """
    rot, trans = pose.rotation, pose.translation
    total = 0.0
    for p in points:
        total += float(np.sum(np.cross(p.image, rot @ p.world + trans) ** 2))
    for ln in lines:
        total += float(ln.normal @ (rot @ ln.world_point + trans)) ** 2
        total += delta ** 2 * float(ln.normal @ (rot @ ln.world_direction)) ** 2
    return total


def oracle_solve(points, lines, gravity, options: SolverOptions | None = None,
                 samples: int = 4096, refine_iters: int = 60) -> OracleResult:
    """Pose estimate by exhaustive angle search on the loss conic."""
    options = options or SolverOptions()
    if not isinstance(gravity, GravityPrior):
        gravity = GravityPrior(gravity)
    r_g = gravity_alignment_rotation(gravity)
    g_points, g_lines = transform_features_to_gravity_frame(points, lines, r_g)
    objective = build_objective(g_points, g_lines, options)
    res = grid_search(objective.omega, samples, refine_iters)
    r = np.array([res.r[0], res.r[1], 1.0])
    pose = compose_pose(res.r, objective.s_matrix @ r, r_g)
    return OracleResult(res.theta, res.r, res.loss, pose)
