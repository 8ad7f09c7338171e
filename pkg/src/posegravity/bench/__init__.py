"""Synthetic benchmark harness: scene generation, noise, metrics."""
from .experiment import (
    CSV_COLUMNS,
    BenchSummary,
    OracleCheckReport,
    Problem,
    TrialRecord,
    make_problem,
    oracle_check,
    run_experiment,
    run_paired,
    run_trial,
    run_trials,
    score_problem,
    summarize,
)
from .scene import (
    CONFIGURATIONS,
    Scene,
    SceneConfig,
    perturb_detections,
    perturb_gravity,
    sample_ground_truth,
    sample_scene,
    solvable,
    trial_rng,
)
