"""Align a vector source with its metadata table and emit the container
plus manifest pair the audit toolkit consumes."""

import csv
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import JobError, MetadataError, NonFiniteError, WidthError
from .job import OPTIONAL_COLUMNS, REQUIRED_COLUMNS, ExportJob
from .qemb import write_qemb


@dataclass(frozen=True)
class ExportSummary:
    """What an export produced: row count, vector width, and the metadata
    ids that had no vector and were dropped."""

    count: int
    width: int
    dropped_metadata_ids: list

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "width": self.width,
            "dropped_metadata_ids": list(self.dropped_metadata_ids),
        }


def _reject_duplicates(ids: list, what: str) -> None:
    duplicated = sorted(s for s, n in Counter(ids).items() if n > 1)
    if duplicated:
        raise JobError(f"duplicate {what}: {', '.join(duplicated[:10])}")


def _vectors_from_dir(path: Path) -> list[tuple[str, np.ndarray]]:
    files = sorted(
        (p for p in path.iterdir() if p.is_file() and not p.name.startswith(".")),
        key=lambda p: p.stem,
    )
    if not files:
        raise JobError(f"no vector files under {path}")
    _reject_duplicates([p.stem for p in files], "vector ids")
    pairs = []
    for p in files:
        raw = p.read_bytes()
        if len(raw) == 0 or len(raw) % 4:
            raise WidthError(
                f"{p.name}: {len(raw)} bytes is not a whole number of "
                "float32 values"
            )
        pairs.append((p.stem, np.frombuffer(raw, dtype="<f4")))
    return pairs


def _vectors_from_csv(path: Path, id_column: str) -> list[tuple[str, np.ndarray]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise JobError(f"{path} is empty") from None
        if id_column not in header:
            raise JobError(f"{path} lacks id column {id_column!r}")
        if len(header) < 2:
            raise WidthError(f"{path} has no feature columns")
        id_pos = header.index(id_column)
        pairs = []
        for line, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise WidthError(
                    f"{path} row {line}: expected {len(header)} cells, "
                    f"got {len(row)}"
                )
            sample_id = row[id_pos].strip()
            if not sample_id:
                raise JobError(f"{path} row {line}: empty id cell")
            cells = [c for i, c in enumerate(row) if i != id_pos]
            try:
                vec = np.array([float(c) for c in cells], dtype="<f4")
            except ValueError:
                raise JobError(
                    f"{path} row {line}: feature cells must be floats"
                ) from None
            pairs.append((sample_id, vec))
    if not pairs:
        raise JobError(f"no vector rows in {path}")
    _reject_duplicates([s for s, _ in pairs], "vector ids")
    pairs.sort(key=lambda pair: pair[0])
    return pairs


def _load_vectors(job: ExportJob) -> tuple[list[str], np.ndarray]:
    src = job.vectors
    if src.is_dir():
        pairs = _vectors_from_dir(src)
    elif src.is_file():
        pairs = _vectors_from_csv(src, job.vector_id_column)
    else:
        raise FileNotFoundError(f"vector source not found: {src}")
    widths = sorted({v.size for _, v in pairs})
    if len(widths) > 1:
        raise WidthError(f"vectors disagree on width: {widths}")
    if widths[0] == 0:
        raise WidthError("vectors are empty")
    ids = [s for s, _ in pairs]
    matrix = np.vstack([v for _, v in pairs])
    bad = [ids[i] for i in np.flatnonzero(~np.isfinite(matrix).all(axis=1))]
    if bad:
        raise NonFiniteError(f"non-finite values in: {', '.join(bad[:10])}")
    return ids, matrix


def _load_metadata(job: ExportJob) -> dict[str, dict]:
    with open(job.metadata, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise JobError(f"{job.metadata} is empty")
        missing = sorted(set(job.mapping) - set(reader.fieldnames))
        if missing:
            raise JobError(
                f"{job.metadata} lacks mapped columns: {', '.join(missing)}"
            )
        rows: dict[str, dict] = {}
        for line, row in enumerate(reader, start=2):
            translated = {
                dst: (row[src] or "").strip() for src, dst in job.mapping.items()
            }
            sample_id = translated["sample_id"]
            if not sample_id:
                raise JobError(f"{job.metadata} row {line}: empty sample id")
            if sample_id in rows:
                raise JobError(
                    f"{job.metadata}: duplicate metadata id {sample_id!r}"
                )
            rows[sample_id] = translated
    return rows


def export(job: ExportJob) -> ExportSummary:
    """Run the job, writing out_qemb and out_manifest.

    A vector id without a metadata row aborts the export; a metadata row
    without a vector is dropped and listed in the summary. Container
    rows and manifest rows share one order: lexicographic by sample id.
    """
    ids, matrix = _load_vectors(job)
    metadata = _load_metadata(job)
    unmatched = [s for s in ids if s not in metadata]
    if unmatched:
        raise MetadataError(
            f"{len(unmatched)} vector ids lack metadata rows: "
            + ", ".join(unmatched[:10])
        )
    dropped = sorted(set(metadata) - set(ids))

    mapped = set(job.mapping.values())
    columns = list(REQUIRED_COLUMNS) + [c for c in OPTIONAL_COLUMNS if c in mapped]
    for path in (job.out_qemb, job.out_manifest):
        path.parent.mkdir(parents=True, exist_ok=True)
    write_qemb(job.out_qemb, matrix)
    with open(job.out_manifest, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for sample_id in ids:
            row = metadata[sample_id]
            writer.writerow([row.get(c, "") for c in columns])
    return ExportSummary(
        count=len(ids), width=int(matrix.shape[1]), dropped_metadata_ids=dropped
    )
