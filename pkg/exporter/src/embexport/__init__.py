"""Bridge from external feature-extraction pipelines to the audit toolkit:
raw per-sample vectors plus a metadata table in, embedding container plus
manifest out, byte-compatible with what the toolkit itself writes."""

__version__ = "0.1.0"

from .errors import (
    ExportError,
    JobError,
    MetadataError,
    NonFiniteError,
    WidthError,
)
from .export import ExportSummary, export
from .extract import demo_extract
from .job import OPTIONAL_COLUMNS, REQUIRED_COLUMNS, ExportJob
from .qemb import HEADER_SIZE, MAGIC, VERSION, write_qemb

__all__ = [
    "__version__",
    "ExportError",
    "JobError",
    "MetadataError",
    "NonFiniteError",
    "WidthError",
    "ExportSummary",
    "export",
    "demo_extract",
    "OPTIONAL_COLUMNS",
    "REQUIRED_COLUMNS",
    "ExportJob",
    "HEADER_SIZE",
    "MAGIC",
    "VERSION",
    "write_qemb",
]
