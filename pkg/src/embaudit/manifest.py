"""Cohort manifest: per-sample metadata aligned row-for-row with embeddings.

The manifest is a CSV file with required columns sample_id, patient_id,
slide_id, institution, level and optional columns class_label, gender,
race, age_group, survival_days, censored. An empty cell means the
attribute is absent for that row. Row order defines embedding row order.

Categorical vocabularies (class_label, institution, gender, race,
age_group) are recorded in first-appearance order and that order is the
canonical index order everywhere downstream.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .errors import (
    DataValidationError,
    IntegrityError,
    SchemaError,
    VocabularyError,
)
from .qemb import EmbeddingMatrix

REQUIRED_COLUMNS = ("sample_id", "patient_id", "slide_id", "institution", "level")
OPTIONAL_COLUMNS = (
    "class_label",
    "gender",
    "race",
    "age_group",
    "survival_days",
    "censored",
)
LEVELS = ("patch", "slide")
GENDERS = ("male", "female")
RACES = ("white", "black_or_african_american")
VOCAB_ATTRIBUTES = ("class_label", "institution", "gender", "race", "age_group")
MAX_AGE_GROUPS = 4
_TRUE = {"true", "1"}
_FALSE = {"false", "0"}


@dataclass
class SampleRecord:
    """One manifest row. Optional fields hold None when the cell is empty."""

    sample_id: str
    patient_id: str
    slide_id: str
    institution: str
    level: str
    class_label: Optional[str] = None
    gender: Optional[str] = None
    race: Optional[str] = None
    age_group: Optional[str] = None
    survival_days: Optional[float] = None
    censored: Optional[bool] = None


@dataclass
class CohortManifest:
    """Ordered sample records plus first-appearance categorical vocabularies."""

    records: list[SampleRecord]
    vocab: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.vocab:
            self.vocab = _build_vocab(self.records)

    @property
    def count(self) -> int:
        return len(self.records)

    def sample_ids(self) -> list[str]:
        return [r.sample_id for r in self.records]

    def attribute_values(self, name: str) -> list[Optional[str]]:
        """Per-row values of a categorical attribute (None when absent)."""
        if name not in VOCAB_ATTRIBUTES:
            raise SchemaError(f"unknown categorical attribute: {name!r}")
        return [getattr(r, name) for r in self.records]

    def rows_with_attribute(self, name: str) -> list[int]:
        return [i for i, v in enumerate(self.attribute_values(name)) if v is not None]

    def subset(self, rows: Iterable[int]) -> "CohortManifest":
        """New manifest of the given rows, in the given order.

        Vocabularies are recomputed from the surviving rows so category
        indices stay first-appearance within the subset."""
        picked = [self.records[i] for i in rows]
        return CohortManifest(records=picked)

    def relabeled(self, attribute: str) -> "CohortManifest":
        """Copy with class_label replaced by the given attribute.

        Rows missing the attribute must be filtered by the caller first."""
        values = self.attribute_values(attribute)
        if any(v is None for v in values):
            raise IntegrityError(
                f"cannot relabel on {attribute!r}: some rows lack a value"
            )
        records = []
        for rec, val in zip(self.records, values):
            records.append(
                SampleRecord(
                    sample_id=rec.sample_id,
                    patient_id=rec.patient_id,
                    slide_id=rec.slide_id,
                    institution=rec.institution,
                    level=rec.level,
                    class_label=val,
                    gender=rec.gender,
                    race=rec.race,
                    age_group=rec.age_group,
                    survival_days=rec.survival_days,
                    censored=rec.censored,
                )
            )
        return CohortManifest(records=records)


def _build_vocab(records: list[SampleRecord]) -> dict[str, list[str]]:
    vocab: dict[str, list[str]] = {}
    for name in VOCAB_ATTRIBUTES:
        seen: list[str] = []
        for rec in records:
            val = getattr(rec, name)
            if val is not None and val not in seen:
                seen.append(val)
        if seen:
            vocab[name] = seen
    return vocab


def _parse_row(row: dict, line: int) -> SampleRecord:
    def cell(name: str) -> Optional[str]:
        raw = row.get(name)
        if raw is None:
            return None
        raw = raw.strip()
        return raw if raw else None

    sample_id = cell("sample_id")
    patient_id = cell("patient_id")
    institution = cell("institution")
    level = cell("level")
    if not sample_id:
        raise IntegrityError(f"row {line}: empty sample_id")
    if not patient_id:
        raise IntegrityError(f"row {line}: empty patient_id")
    if not institution:
        raise IntegrityError(f"row {line}: empty institution")
    if level not in LEVELS:
        raise SchemaError(f"row {line}: level must be one of {LEVELS}, got {level!r}")
    slide_id = cell("slide_id")
    if level == "patch" and not slide_id:
        raise IntegrityError(f"row {line}: patch-level record lacks slide_id")

    gender = cell("gender")
    if gender is not None and gender not in GENDERS:
        raise VocabularyError(f"row {line}: unknown gender {gender!r}")
    race = cell("race")
    if race is not None and race not in RACES:
        raise VocabularyError(f"row {line}: unknown race {race!r}")

    survival_raw = cell("survival_days")
    censored_raw = cell("censored")
    survival_days: Optional[float] = None
    censored: Optional[bool] = None
    if survival_raw is not None:
        try:
            survival_days = float(survival_raw)
        except ValueError as exc:
            raise SchemaError(f"row {line}: bad survival_days {survival_raw!r}") from exc
        if not survival_days >= 0:
            raise SchemaError(f"row {line}: survival_days must be >= 0")
        if censored_raw is None:
            raise IntegrityError(
                f"row {line}: survival_days present without censored flag"
            )
    if censored_raw is not None:
        low = censored_raw.lower()
        if low in _TRUE:
            censored = True
        elif low in _FALSE:
            censored = False
        else:
            raise SchemaError(f"row {line}: bad censored value {censored_raw!r}")

    return SampleRecord(
        sample_id=sample_id,
        patient_id=patient_id,
        slide_id=slide_id or "",
        institution=institution,
        level=level,
        class_label=cell("class_label"),
        gender=gender,
        race=race,
        age_group=cell("age_group"),
        survival_days=survival_days,
        censored=censored,
    )


def load_manifest(path: str | Path) -> CohortManifest:
    """Parse and validate a manifest CSV.

    Raises SchemaError when required columns are missing or cells are
    malformed, IntegrityError on duplicate sample_ids or contradictory
    rows, VocabularyError on unknown categories or more than
    MAX_AGE_GROUPS distinct age_group values.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty manifest (no header row)")
        missing = [c for c in REQUIRED_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise SchemaError(f"{path}: missing required columns {missing}")
        records = [_parse_row(row, line) for line, row in enumerate(reader, start=2)]

    counts = Counter(r.sample_id for r in records)
    dupes = [sid for sid, n in counts.items() if n > 1]
    if dupes:
        raise IntegrityError(f"duplicate sample_id values: {sorted(dupes)[:5]}")

    manifest = CohortManifest(records=records)
    ages = manifest.vocab.get("age_group", [])
    if len(ages) > MAX_AGE_GROUPS:
        raise VocabularyError(
            f"age_group has {len(ages)} distinct values, max {MAX_AGE_GROUPS}"
        )
    return manifest


def save_manifest(path: str | Path, manifest: CohortManifest) -> None:
    """Write a manifest CSV with required columns plus any optional column
    carried by at least one record."""
    cols = list(REQUIRED_COLUMNS)
    for name in OPTIONAL_COLUMNS:
        if any(getattr(r, name) is not None for r in manifest.records):
            cols.append(name)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for rec in manifest.records:
            row = []
            for name in cols:
                val = getattr(rec, name)
                if val is None:
                    row.append("")
                elif name == "censored":
                    row.append("true" if val else "false")
                elif name == "survival_days":
                    row.append(repr(float(val)))
                else:
                    row.append(str(val))
            writer.writerow(row)


@dataclass
class ValidationReport:
    """Outcome of cross-checking an embedding matrix against its manifest."""

    embedding_count: int
    manifest_count: int
    nonfinite_rows: list[int]
    missingness: dict[str, float]
    institution_counts: dict[str, int]
    class_counts: dict[str, int]

    @property
    def passed(self) -> bool:
        return self.embedding_count == self.manifest_count and not self.nonfinite_rows

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "embedding_count": self.embedding_count,
            "manifest_count": self.manifest_count,
            "nonfinite_rows": list(self.nonfinite_rows),
            "missingness": dict(self.missingness),
            "institution_counts": dict(self.institution_counts),
            "class_counts": dict(self.class_counts),
        }


def validate_cohort(matrix: EmbeddingMatrix, manifest: CohortManifest) -> ValidationReport:
    """Cross-check counts and payload health; never raises, reports instead."""
    n = manifest.count
    missingness = {}
    for name in ("class_label", "gender", "race", "age_group"):
        if n:
            absent = sum(1 for v in manifest.attribute_values(name) if v is None)
            missingness[name] = absent / n
        else:
            missingness[name] = 0.0
    inst_counts = Counter(r.institution for r in manifest.records)
    class_counts = Counter(
        r.class_label for r in manifest.records if r.class_label is not None
    )
    return ValidationReport(
        embedding_count=matrix.count,
        manifest_count=n,
        nonfinite_rows=matrix.nonfinite_rows(),
        missingness=missingness,
        institution_counts=dict(sorted(inst_counts.items())),
        class_counts=dict(sorted(class_counts.items())),
    )
