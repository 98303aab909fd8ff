"""Exception and warning types raised across the package."""


class UpliftGuardError(Exception):
    """Base class for all package errors."""


class ConfigurationError(UpliftGuardError, ValueError):
    """Invalid specification, config file, or parameter."""


class IngestionError(UpliftGuardError, ValueError):
    """A dataset file does not conform to the CSV schema."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class UnfittableArmError(UpliftGuardError, ValueError):
    """An arm required by the model has no records."""

    def __init__(self, arm):
        self.arm = arm
        super().__init__(f"arm {arm} has zero records; cannot fit")


class ScoringError(UpliftGuardError, ValueError):
    """Data passed to predict does not match the fitted model."""


class SizeError(UpliftGuardError, ValueError):
    """Problem too large for exhaustive search."""


class EvaluationError(UpliftGuardError, ValueError):
    """Evaluation inputs are inconsistent (missing arm, zero propensity...)."""


class UndefinedEstimateError(EvaluationError):
    """An estimate is 0/0, e.g. SNIPS with no matched records."""


class ConsistencyError(UpliftGuardError, ValueError):
    """Pipeline components were produced from different datasets."""


class NoOverlapWarning(UserWarning):
    """The evaluated policy matches no logged action."""


class DegenerateFeaturesWarning(UserWarning):
    """All features have zero variance; a constant model is used."""
