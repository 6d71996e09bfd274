"""Auditing toolkit for frozen pathology embedding cohorts.

Quantifies privacy leakage (attribute probes), reliability under
institutional distribution shift (OOD splits with matched baselines),
and group fairness, from a binary embedding container plus a sample
manifest.
"""

__version__ = "0.1.0"

from .errors import (
    AuditError,
    CoverageError,
    DataValidationError,
    DegenerateDataError,
    FormatError,
    InfeasibleError,
    IntegrityError,
    InvalidInputError,
    MetricError,
    PlanError,
    SchemaError,
    TruncationError,
    VocabularyError,
)
from .manifest import (
    CohortManifest,
    SampleRecord,
    ValidationReport,
    load_manifest,
    save_manifest,
    validate_cohort,
)
from .qemb import EmbeddingMatrix, read_qemb, write_qemb
from .splits import (
    SplitPlan,
    load_plan,
    make_id_split,
    make_matched_baseline,
    make_ood1,
    make_ood2,
    make_ood3,
    make_survival_folds,
    save_plan,
)

__all__ = [
    "__version__",
    "AuditError",
    "CoverageError",
    "DataValidationError",
    "DegenerateDataError",
    "FormatError",
    "InfeasibleError",
    "IntegrityError",
    "InvalidInputError",
    "MetricError",
    "PlanError",
    "SchemaError",
    "TruncationError",
    "VocabularyError",
    "CohortManifest",
    "SampleRecord",
    "ValidationReport",
    "load_manifest",
    "save_manifest",
    "validate_cohort",
    "EmbeddingMatrix",
    "read_qemb",
    "write_qemb",
    "SplitPlan",
    "load_plan",
    "make_id_split",
    "make_matched_baseline",
    "make_ood1",
    "make_ood2",
    "make_ood3",
    "make_survival_folds",
    "save_plan",
]
