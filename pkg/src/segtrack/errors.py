"""Exception types shared across the toolkit."""


class SegtrackError(Exception):
    """Base class for all domain errors raised by this package."""


class InvalidPolygonError(SegtrackError):
    """Polygon violates a structural requirement (too few vertices, non-finite coordinates)."""


class CorruptRleError(SegtrackError):
    """Run-length counts are inconsistent with the stated mask dimensions."""


class CorruptStringError(SegtrackError):
    """Compressed counts string is malformed (bad character or truncated group)."""


class EmptySegmentationError(SegtrackError):
    """Operation requires at least one foreground pixel."""


class ParseError(SegtrackError):
    """Input document is not well-formed."""


class SchemaError(SegtrackError):
    """Input document is well-formed but violates the expected schema."""


class ConflictError(SegtrackError):
    """Two inputs claim the same identity (e.g. duplicate file names)."""


class IntegrityError(SegtrackError):
    """Dataset references are dangling or ids collide."""


class OutOfRangeError(SegtrackError):
    """A numeric field lies outside its documented range."""


class UndefinedMetricError(SegtrackError):
    """Metric denominator is empty; the value is undefined."""


class ConfigError(SegtrackError):
    """Generator configuration is infeasible."""


class MissingDataError(SegtrackError):
    """Required per-frame data (e.g. masks) is absent."""
