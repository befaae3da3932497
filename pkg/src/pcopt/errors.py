"""Exception types raised by pcopt.

Every failure mode that callers are expected to branch on gets its own
class so that library code never has to parse message strings.
"""


class PcoptError(Exception):
    """Base class for all pcopt errors."""


class DimensionMismatchError(PcoptError):
    """Input has the wrong length or shape for the object it is used with."""


class InvalidInputError(PcoptError):
    """Argument value outside the documented domain of an operation."""


class UnknownObjectiveError(PcoptError):
    """Objective name not present in the registry."""


class EvaluationFailureError(PcoptError):
    """Objective evaluation produced a non-finite value."""


class InvalidDomainError(PcoptError):
    """Degenerate or non-finite search box."""


class ModelDegeneracyError(PcoptError):
    """Covariance not positive definite, or zero density where mass is required."""


class EmptySampleError(PcoptError):
    """An estimator was handed zero samples."""


class UndefinedDensityError(PcoptError):
    """The optimal-proposal construction received an all-zero integrand."""


class DegenerateOverlapError(PcoptError):
    """Self-normalized estimate undefined: every density ratio underflowed."""


class DegenerateWeightsError(PcoptError):
    """Total sample weight is zero or non-finite."""


class InsufficientSampleError(PcoptError):
    """Too few replicates to decompose error into bias and variance."""


class FitFailureError(PcoptError):
    """Every fitting attempt diverged or collapsed."""


class InfeasibleFoldsError(PcoptError):
    """Requested more folds than samples."""


class CvFailureError(PcoptError):
    """Every cross-validation candidate scored infinite."""


class StackingFailureError(PcoptError):
    """No stacking member could be scored."""


class ConfigError(PcoptError):
    """Malformed run configuration or config file."""
