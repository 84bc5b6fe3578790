"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class PrefallError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PrefallError):
    """Invalid configuration: bad joint map, bad network config, bad options."""


class ParseError(PrefallError):
    """Malformed row in a keypoint, manifest, dataset or key-value file."""

    def __init__(self, message: str, path=None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class StructureError(PrefallError):
    """Well-formed rows that violate a structural invariant (ordering, counts)."""


class AnnotationError(PrefallError):
    """Missing or inconsistent impact-frame annotation."""


class MappingError(PrefallError):
    """Activity id with no entry in the activity-to-label mapping."""


class FormatVersionError(PrefallError):
    """File written by a newer format version than this build understands."""


class ExtractionError(PrefallError):
    """A requested window does not fit inside the sequence."""


class MaskedDataError(ExtractionError):
    """A requested window contains features flagged invalid."""


class NumericError(PrefallError):
    """Non-finite values reached the network."""


class ModelFormatError(PrefallError):
    """Model file has a bad magic header or is otherwise unreadable."""


class TruncatedModelError(ModelFormatError):
    """Model file ends before all parameter blocks were read."""


class ModelShapeError(ModelFormatError):
    """Model file dimensions disagree with its payload or with the network contract."""


class ModelVersionError(ModelFormatError, FormatVersionError):
    """Model file format version is newer than supported."""
