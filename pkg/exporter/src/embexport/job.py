"""Export job description and its structural validation."""

from dataclasses import dataclass
from pathlib import Path

from .errors import JobError

REQUIRED_COLUMNS = ("sample_id", "patient_id", "slide_id", "institution", "level")
OPTIONAL_COLUMNS = (
    "class_label",
    "gender",
    "race",
    "age_group",
    "survival_days",
    "censored",
)

_FIELDS = ("vectors", "metadata", "out_qemb", "out_manifest", "mapping")


@dataclass(frozen=True)
class ExportJob:
    """What to export: a vector source, a metadata table, and an explicit
    column mapping into the manifest schema.

    vectors is either a directory of raw little-endian float32 vector
    files (one sample per file, the file stem is the sample id) or a
    single CSV of floats whose id column is vector_id_column. mapping
    sends metadata columns to manifest columns; nothing is inferred from
    header names. Rows are exported in lexicographic sample-id order.
    """

    vectors: Path
    metadata: Path
    out_qemb: Path
    out_manifest: Path
    mapping: dict
    vector_id_column: str = "id"

    def __post_init__(self) -> None:
        for name in ("vectors", "metadata", "out_qemb", "out_manifest"):
            object.__setattr__(self, name, Path(getattr(self, name)))
        targets = list(self.mapping.values())
        known = set(REQUIRED_COLUMNS) | set(OPTIONAL_COLUMNS)
        unknown = sorted(set(targets) - known)
        if unknown:
            raise JobError(
                f"mapping targets outside the manifest schema: {', '.join(unknown)}"
            )
        duplicated = sorted({t for t in targets if targets.count(t) > 1})
        if duplicated:
            raise JobError(
                f"mapping sends two source columns to: {', '.join(duplicated)}"
            )
        missing = sorted(set(REQUIRED_COLUMNS) - set(targets))
        if missing:
            raise JobError(
                f"mapping must cover the required manifest columns; "
                f"missing: {', '.join(missing)}"
            )
        if not self.vector_id_column:
            raise JobError("vector_id_column must be non-empty")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExportJob":
        known = set(_FIELDS) | {"vector_id_column"}
        bad = sorted(set(doc) - known)
        if bad:
            raise JobError(f"unknown job fields: {', '.join(bad)}")
        missing = sorted(set(_FIELDS) - set(doc))
        if missing:
            raise JobError(f"job needs fields: {', '.join(missing)}")
        if not isinstance(doc["mapping"], dict):
            raise JobError("mapping must be an object")
        return cls(**doc)
