"""Synthetic scenes and noise models for the benchmark harness.

Each trial draws from its own counter-based generator (numpy's Philox) keyed
by ``(seed, trial_index)``, so a trial's data never depends on which worker
ran it or on how many trials came before.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..errors import GenerationFailure
from ..geometry import GravityPrior, Pose
from ..objective import LineCorrespondence, PointCorrespondence

CONFIGURATIONS = ("ImagePlane", "Spherical", "Planar")
MAX_REJECTIONS = 1000
_MASK64 = (1 << 64) - 1


def solvable(n_points: int, m_lines: int) -> bool:
    """True for feature counts whose weight sum can be invertible."""
    return n_points >= 2 or m_lines >= 3 or (n_points >= 1 and m_lines >= 1)


@dataclass(frozen=True)
class SceneConfig:
    configuration: str = "ImagePlane"
    n_points: int = 3
    m_lines: int = 0
    depth_range: tuple[float, float] = (0.01, 100.0)
    planar_scale_range: tuple[float, float] = (0.01, 100.0)
    epsilon_noise: float = 0.0
    gravity_noise_deg: float = 0.0
    trials: int = 1
    seed: int = 0
    renormalize_bearings: bool = False

    def __post_init__(self):
        if self.configuration not in CONFIGURATIONS:
            raise ValueError(f"configuration must be one of {CONFIGURATIONS}, got {self.configuration!r}")
        if self.n_points < 0 or self.m_lines < 0 or not solvable(self.n_points, self.m_lines):
            raise ValueError(f"{self.n_points} points and {self.m_lines} lines cannot determine a pose")
        if self.epsilon_noise < 0 or self.gravity_noise_deg < 0:
            raise ValueError("noise levels must be non-negative")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")


@dataclass(frozen=True)
class Scene:
    """Ground truth plus observations.

    Lines are kept as their two defining endpoint observations so detection
    noise can be applied to the endpoints and the line re-derived.
    """

    configuration: str
    pose: Pose
    gravity: GravityPrior
    images: np.ndarray          # (n, 3) bearings
    worlds: np.ndarray          # (n, 3)
    line_bearings: np.ndarray   # (m, 2, 3)
    line_worlds: np.ndarray     # (m, 2, 3)

    def line_features(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(normals, points, unit directions) of the 2D/3D lines."""
        normals = _cross_rows(self.line_bearings[:, 0], self.line_bearings[:, 1])
        points = self.line_worlds[:, 0].copy()
        directions = _unit(self.line_worlds[:, 1] - self.line_worlds[:, 0])
        return normals, points, directions

    def point_correspondences(self) -> list[PointCorrespondence]:
        return [PointCorrespondence(p, d) for p, d in zip(self.images, self.worlds)]

    def line_correspondences(self) -> list[LineCorrespondence]:
        return [LineCorrespondence(n, m, v) for n, m, v in zip(*self.line_features())]


def trial_rng(seed: int, index: int) -> np.random.Generator:
    """Philox4x64 generator keyed by the 128-bit pair (seed, trial index)."""
    key = ((int(seed) & _MASK64) << 64) | (int(index) & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))


def quaternion_to_rotation(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.sqrt(np.einsum("...i,...i->...", v, v))[..., None]


def _cross_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # np.cross is slow for the small arrays used here
    return np.column_stack([a[:, 1] * b[:, 2] - a[:, 2] * b[:, 1],
                            a[:, 2] * b[:, 0] - a[:, 0] * b[:, 2],
                            a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]])


def sample_ground_truth(rng: np.random.Generator) -> tuple[Pose, GravityPrior]:
    """Uniform rotation (unit quaternion on S^3), unit translation, gravity = R[:, 1]."""
    rotation = quaternion_to_rotation(_unit(rng.standard_normal(4)))
    translation = _unit(rng.standard_normal(3))
    return Pose(rotation, translation), GravityPrior(rotation[:, 1])


def _sample_bearings(configuration: str, count: int, rng: np.random.Generator) -> np.ndarray:
    if configuration == "ImagePlane":
        return np.column_stack([rng.uniform(-1.0, 1.0, (count, 2)), np.ones(count)])
    return _unit(rng.standard_normal((count, 3)))


def _sample_features(cfg: SceneConfig, pose: Pose, count: int, rng: np.random.Generator):
    """Bearings and world points for ``count`` features."""
    rot, trans = pose.rotation, pose.translation
    bearings = _sample_bearings(cfg.configuration, count, rng)
    if cfg.configuration != "Planar":
        depth = rng.uniform(*cfg.depth_range, size=(count, 1))
        return bearings, (depth * bearings - trans) @ rot
    # intersect each viewing ray with the world plane y = 0, resampling rays
    # that miss it or hit it behind the camera
    center = -rot.T @ trans
    worlds = np.empty((count, 3))
    pending = np.arange(count)
    for _ in range(MAX_REJECTIONS):
        rays = bearings[pending] @ rot
        with np.errstate(divide="ignore", invalid="ignore"):
            t = -center[1] / rays[:, 1]
        ok = np.isfinite(t) & (t > 0)
        hit = pending[ok]
        worlds[hit] = center + t[ok, None] * rays[ok]
        worlds[hit, 1] = 0.0
        pending = pending[~ok]
        if not len(pending):
            return bearings, worlds
        bearings[pending] = _sample_bearings(cfg.configuration, len(pending), rng)
    raise GenerationFailure(f"{len(pending)} rays never reached the plane y = 0")


def sample_scene(cfg: SceneConfig, rng: np.random.Generator) -> Scene:
    """Draw a ground-truth pose and noise-free observations for ``cfg``."""
    pose, gravity = sample_ground_truth(rng)
    if cfg.configuration == "Planar":
        pose = Pose(pose.rotation, pose.translation * rng.uniform(*cfg.planar_scale_range))
    n, m = cfg.n_points, cfg.m_lines
    bearings, worlds = _sample_features(cfg, pose, n + 2 * m, rng)
    return Scene(
        configuration=cfg.configuration,
        pose=pose,
        gravity=gravity,
        images=bearings[:n],
        worlds=worlds[:n],
        line_bearings=bearings[n:].reshape(m, 2, 3),
        line_worlds=worlds[n:].reshape(m, 2, 3),
    )


def perturb_gravity(gravity: GravityPrior, sigma_deg: float, rng: np.random.Generator) -> GravityPrior:
    """Tilt g about a random axis perpendicular to it by an angle ~ N(0, sigma_deg^2) degrees.

    Random numbers are always drawn so streams stay aligned across noise levels.
    """
    g = gravity.g
    axis = rng.standard_normal(3)
    angle = math.radians(sigma_deg * rng.standard_normal())
    axis -= (axis @ g) * g
    axis /= math.sqrt(axis @ axis)
    a0, a1, a2 = axis
    g0, g1, g2 = g
    cross = np.array([a1 * g2 - a2 * g1, a2 * g0 - a0 * g2, a0 * g1 - a1 * g0])
    tilted = g * math.cos(angle) + cross * math.sin(angle)
    return GravityPrior(tilted)


def perturb_detections(scene: Scene, epsilon: float, rng: np.random.Generator,
                       renormalize: bool = False) -> Scene:
    """Add N(0, epsilon^2) noise to every component of every 2D observation.

    Image-plane bearings keep z = 1 (only x and y are detections); spherical
    and planar bearings are perturbed in all three components and used
    unnormalized unless ``renormalize`` is set. Line endpoints are perturbed
    before the line normal is re-derived.
    """
    dims = 2 if scene.configuration == "ImagePlane" else 3
    n, m = len(scene.images), len(scene.line_bearings)
    noise = rng.standard_normal((n + 2 * m, dims)) * epsilon
    images = scene.images.copy()
    line_bearings = scene.line_bearings.copy()
    images[:, :dims] += noise[:n]
    line_bearings[:, :, :dims] += noise[n:].reshape(m, 2, dims)
    if renormalize and dims == 3:
        images = _unit(images) if n else images
        line_bearings = _unit(line_bearings) if m else line_bearings
    return replace(scene, images=images, line_bearings=line_bearings)
