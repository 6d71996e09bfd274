"""Exception hierarchy for the audit toolkit.

Every error raised by the package derives from AuditError so callers can
catch one base. The CLI maps InvalidInputError subclasses to exit code 2
and InfeasibleError to exit code 3.
"""


class AuditError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(AuditError):
    """Malformed or contradictory input (file, config, argument)."""


class FormatError(InvalidInputError):
    """Binary container violates the embedding format contract."""


class TruncationError(FormatError):
    """Payload length disagrees with the declared header counts."""


class SchemaError(InvalidInputError):
    """Manifest is missing required columns or has malformed cells."""


class IntegrityError(InvalidInputError):
    """Rows contradict each other or a per-row invariant."""


class VocabularyError(InvalidInputError):
    """A categorical column holds an unknown or oversized vocabulary."""


class DataValidationError(InvalidInputError):
    """Numeric payload fails validation (non-finite values, zero norms)."""


class PlanError(InvalidInputError):
    """A split plan violates its construction contract."""


class CoverageError(PlanError):
    """An institution set fails to cover every class."""


class InfeasibleError(AuditError):
    """The request is well-formed but cannot be satisfied by this cohort."""


class DegenerateDataError(InvalidInputError):
    """Training data lacks the variation the estimator requires."""


class MetricError(InvalidInputError):
    """Metric arguments are inconsistent (name mismatch, bad group count)."""
