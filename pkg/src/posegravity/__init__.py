"""Camera pose from point and line correspondences with a known gravity direction."""
from .errors import (
    DegenerateConfiguration,
    GenerationFailure,
    LineAtInfinity,
    NoSolution,
    NotDegenerate,
    PoseGravityError,
    ZeroConic,
)
from .geometry import (
    GravityPrior,
    Pose,
    compose_pose,
    gravity_alignment_rotation,
    rotation_about_y,
    rotation_angle_error,
    transform_features_to_gravity_frame,
    translation_error,
)
from .objective import (
    Case,
    LineCorrespondence,
    Objective,
    PointCorrespondence,
    SolverOptions,
    build_objective,
    classify_configuration,
)
from .solver import Solution, SolutionSet, estimate_pose, estimate_pose_arrays

__version__ = "0.1.0"
