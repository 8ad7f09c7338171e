"""Trial runner, metric aggregation and the solver-vs-oracle sweep."""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import PoseGravityError
from ..geometry import GravityPrior, rotation_angle_error, translation_error
from ..objective import Case, SolverOptions
from ..oracle import full_pose_residual, grid_search
from ..solver import estimate_pose_arrays
from .scene import (
    CONFIGURATIONS,
    Scene,
    SceneConfig,
    perturb_detections,
    perturb_gravity,
    sample_scene,
    solvable,
    trial_rng,
)

CSV_COLUMNS = ("config", "n_points", "m_lines", "eps", "grav_noise_deg", "trials", "with_solution",
               "median_rot_err_deg", "median_trans_err", "median_runtime_us")


@dataclass(frozen=True)
class Problem:
    """A ground-truth scene together with its noisy observations."""

    truth: Scene
    observed: Scene
    gravity: GravityPrior

    def solver_inputs(self) -> tuple:
        normals, points, directions = self.observed.line_features()
        return self.observed.images, self.observed.worlds, normals, points, directions, self.gravity


@dataclass(frozen=True)
class TrialRecord:
    index: int
    rot_err_deg: float
    trans_err: float
    n_solutions: int
    case: str | None
    recovered: bool
    runtime_ns: int
    used_fallback: bool = False
    failure: str | None = None


@dataclass(frozen=True)
class BenchSummary:
    config: SceneConfig
    median_rot_err_deg: float
    median_trans_err: float
    trials_with_solution: int
    median_runtime_us: float
    fallback_count: int = 0

    def csv_row(self) -> dict:
        c = self.config
        return {
            "config": c.configuration, "n_points": c.n_points, "m_lines": c.m_lines,
            "eps": c.epsilon_noise, "grav_noise_deg": c.gravity_noise_deg, "trials": c.trials,
            "with_solution": self.trials_with_solution,
            "median_rot_err_deg": self.median_rot_err_deg,
            "median_trans_err": self.median_trans_err,
            "median_runtime_us": self.median_runtime_us,
        }


def make_problem(cfg: SceneConfig, index: int) -> Problem:
    """Trial ``index`` of ``cfg``: scene, then gravity noise, then detection noise."""
    rng = trial_rng(cfg.seed, index)
    truth = sample_scene(cfg, rng)
    gravity = perturb_gravity(truth.gravity, cfg.gravity_noise_deg, rng)
    observed = perturb_detections(truth, cfg.epsilon_noise, rng, cfg.renormalize_bearings)
    return Problem(truth, observed, gravity)


def score_problem(problem: Problem, index: int, options: SolverOptions | None = None) -> TrialRecord:
    """Solve one problem and score it; the lowest rotation error among solutions counts."""
    args = problem.solver_inputs()
    start = time.perf_counter_ns()
    try:
        result = estimate_pose_arrays(*args, options=options)
    except PoseGravityError as exc:
        elapsed = time.perf_counter_ns() - start
        return TrialRecord(index, math.nan, math.nan, 0, None, False, elapsed, failure=type(exc).__name__)
    elapsed = time.perf_counter_ns() - start
    gt = problem.truth.pose
    rot_err, best = min((rotation_angle_error(gt.rotation, s.pose.rotation), i)
                        for i, s in enumerate(result.solutions))
    return TrialRecord(
        index=index,
        rot_err_deg=rot_err,
        trans_err=translation_error(gt.translation, result.solutions[best].pose.translation),
        n_solutions=len(result.solutions),
        case=result.case.value,
        recovered=result.recovered,
        runtime_ns=elapsed,
        used_fallback=result.used_fallback,
    )


def run_trial(cfg: SceneConfig, index: int, options: SolverOptions | None = None) -> TrialRecord:
    """Generate, solve and score trial ``index`` of ``cfg``."""
    return score_problem(make_problem(cfg, index), index, options)


def run_paired(cfg: SceneConfig, option_sets) -> list[tuple[BenchSummary, list[TrialRecord]]]:
    """Solve the same generated problems once per entry of ``option_sets``."""
    records = [[] for _ in option_sets]
    for i in range(cfg.trials):
        problem = make_problem(cfg, i)
        for out, options in zip(records, option_sets):
            out.append(score_problem(problem, i, options))
    return [(summarize(cfg, recs), recs) for recs in records]


def _run_range(cfg: SceneConfig, options: SolverOptions | None, start: int, stop: int) -> list[TrialRecord]:
    return [run_trial(cfg, i, options) for i in range(start, stop)]


def run_trials(cfg: SceneConfig, options: SolverOptions | None = None, workers: int = 1) -> list[TrialRecord]:
    """All trials of ``cfg`` in index order; identical for any worker count."""
    if workers <= 1 or cfg.trials < 2 * workers:
        return _run_range(cfg, options, 0, cfg.trials)
    bounds = np.linspace(0, cfg.trials, 4 * workers + 1).astype(int)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        chunks = pool.map(_run_range, [cfg] * (len(bounds) - 1), [options] * (len(bounds) - 1),
                          bounds[:-1].tolist(), bounds[1:].tolist())
        return [rec for chunk in chunks for rec in chunk]


def summarize(cfg: SceneConfig, records: list[TrialRecord]) -> BenchSummary:
    """Medians of the error metrics over solved trials and of runtime over all trials."""
    solved = [r for r in records if r.n_solutions > 0]
    rot = np.median([r.rot_err_deg for r in solved]) if solved else math.nan
    trans = np.median([r.trans_err for r in solved]) if solved else math.nan
    runtime = np.median([r.runtime_ns for r in records]) / 1e3 if records else math.nan
    return BenchSummary(cfg, float(rot), float(trans), len(solved), float(runtime),
                        sum(r.used_fallback for r in records))


def run_experiment(cfg: SceneConfig, options: SolverOptions | None = None,
                   workers: int = 1) -> tuple[BenchSummary, list[TrialRecord]]:
    records = run_trials(cfg, options, workers)
    return summarize(cfg, records), records


# --------------------------------------------------------------------------- oracle sweep


@dataclass
class OracleCheckReport:
    problems: int = 0
    violations: int = 0
    residual_mismatches: int = 0
    general_fallbacks: int = 0
    failures: int = 0
    worst_excess: float = -math.inf
    by_case: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.violations == 0 and self.general_fallbacks == 0 and self.residual_mismatches == 0

    def as_dict(self) -> dict:
        out = asdict(self)
        out["ok"] = self.ok
        return out


def _mixed_counts(rng: np.random.Generator, max_features: int = 6) -> tuple[int, int]:
    while True:
        n, m = (int(v) for v in rng.integers(0, max_features + 1, size=2))
        if solvable(n, m):
            return n, m


def oracle_check(trials: int, seed: int, configurations=CONFIGURATIONS, noise_levels=(0.0, 0.01),
                 options: SolverOptions | None = None, samples: int = 4096) -> OracleCheckReport:
    """Compare solver loss against the grid oracle on random mixed point/line problems.

    A violation is a solver loss above the oracle's by more than
    ``1e-8 * (1 + |omega|)``. The direct residual of the returned pose must
    also agree with the reported loss.
    """
    options = options or SolverOptions()
    report = OracleCheckReport()
    for ci, configuration in enumerate(configurations):
        for ei, eps in enumerate(noise_levels):
            # separate key space per (configuration, noise) cell
            cell_seed = (int(seed) * 1_000_003 + ci * 31 + ei) & ((1 << 64) - 1)
            for index in range(trials):
                n, m = _mixed_counts(trial_rng(cell_seed ^ 0x9E3779B97F4A7C15, index))
                cfg = SceneConfig(configuration, n, m, epsilon_noise=eps, seed=cell_seed)
                problem = make_problem(cfg, index)
                report.problems += 1
                try:
                    result = estimate_pose_arrays(*problem.solver_inputs(), options=options)
                except PoseGravityError:
                    report.failures += 1
                    continue
                omega = result.objective.omega
                scale = 1.0 + float(np.linalg.norm(omega))
                oracle = grid_search(omega, samples)
                excess = result.best.loss - oracle.loss
                report.worst_excess = max(report.worst_excess, excess / scale)
                report.by_case[result.case.value] = report.by_case.get(result.case.value, 0) + 1
                if excess > 1e-8 * scale:
                    report.violations += 1
                if result.used_fallback and result.case is Case.GENERAL:
                    report.general_fallbacks += 1
                observed = problem.observed
                residual = full_pose_residual(result.best.pose, observed.point_correspondences(),
                                              observed.line_correspondences(), options.delta)
                if abs(residual - result.best.loss) > 1e-9 * scale:
                    report.residual_mismatches += 1
    return report
