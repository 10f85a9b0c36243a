"""Exception hierarchy shared across snrlab modules."""


class SnrLabError(Exception):
    """Base class for all snrlab errors."""


class InvalidVocabError(SnrLabError):
    """Vocabulary size or token ids are out of range."""


class DimensionError(SnrLabError):
    """Array shapes inconsistent with the dataset / embedding table."""


class InvalidSnrError(SnrLabError):
    """Negative (or where required, non-positive) SNR value."""


class EmptySupportError(SnrLabError):
    """Hard conditioning left no dataset sequence consistent with the observation."""


class InvalidPathError(SnrLabError):
    """SNR path arguments violate the non-decreasing / positivity contract."""


class InvalidQuadratureError(SnrLabError):
    """Empty or malformed quadrature grid."""


class ConfigError(SnrLabError):
    """Invalid corruption / schedule / CLI configuration."""


class InvalidTargetError(SnrLabError):
    """Mask token used as a cross-entropy target."""


class TrainingError(SnrLabError):
    """Optimization diverged (non-finite loss)."""


class InvalidBudgetError(SnrLabError):
    """Refinement step budget out of range."""


class UndefinedRatioError(SnrLabError):
    """Remask probability requested with every position already masked."""


class EmptyReportError(SnrLabError):
    """Calibration report requested for an empty score list."""


class UsageError(SnrLabError):
    """Bad command-line arguments (CLI exit code 1)."""
