"""Exception hierarchy for the pose solver and its helpers."""


class PoseGravityError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateConfiguration(PoseGravityError):
    """The feature set does not constrain the translation (weight sum is singular)."""


class NoSolution(PoseGravityError):
    """The minimal path produced no feasible rotation."""


class NotDegenerate(PoseGravityError):
    """A conic handed to the line decomposition is not rank deficient."""


class ZeroConic(PoseGravityError):
    """A conic has no nonzero entries, so it defines no lines."""


class LineAtInfinity(PoseGravityError):
    """A homogeneous line has no finite part in the x-y plane."""


class GenerationFailure(PoseGravityError):
    """Synthetic scene generation exhausted its rejection-sampling budget."""
