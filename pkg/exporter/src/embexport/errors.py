"""Typed failures raised by the export pipeline."""


class ExportError(Exception):
    """Base class for everything the exporter raises on purpose."""


class JobError(ExportError):
    """The job description or a source file is unusable: bad mapping,
    malformed vector source, duplicate or empty ids."""


class WidthError(ExportError):
    """Vectors disagree on width, or a payload is not a whole number of
    little-endian float32 values."""


class MetadataError(ExportError):
    """A vector id has no row in the metadata table."""


class NonFiniteError(ExportError):
    """A vector holds NaN or Inf."""
