"""Exception types raised across the package.

Every loader and numerical routine raises one of these instead of returning
partial objects, so callers can catch :class:`CurationError` at a boundary.
"""


class CurationError(Exception):
    """Base class for all package errors."""


# -- ingestion / persistence -------------------------------------------------


class MissingFile(CurationError, FileNotFoundError):
    pass


class MalformedHeader(CurationError, ValueError):
    pass


class TruncatedPayload(CurationError, ValueError):
    pass


class BadMagic(CurationError, ValueError):
    pass


class UnsupportedVersion(CurationError, ValueError):
    pass


class DimOverflow(CurationError, ValueError):
    pass


class ZeroDim(CurationError, ValueError):
    pass


class NonFiniteData(CurationError, ValueError):
    pass


class IoFailure(CurationError, OSError):
    pass


class MalformedJson(CurationError, ValueError):
    pass


class DuplicateId(CurationError, ValueError):
    pass


class InvalidEntry(CurationError, ValueError):
    """A manifest entry field is out of range (e.g. dice outside [0, 1])."""


class MalformedModel(CurationError, ValueError):
    pass


class MalformedCsv(CurationError, ValueError):
    pass


# -- numerical preconditions -------------------------------------------------


class DegenerateDims(CurationError, ValueError):
    pass


class DegenerateInput(CurationError, ValueError):
    pass


class OneSidedData(DegenerateInput):
    pass


class UnscorableImage(CurationError, ValueError):
    pass


class ModelDimensionMismatch(CurationError, ValueError):
    pass


class TooFewRows(CurationError, ValueError):
    pass


class TooManyLevels(CurationError, ValueError):
    pass


# -- metrics -----------------------------------------------------------------


class DimMismatch(CurationError, ValueError):
    pass


class NoPositives(CurationError, ValueError):
    pass


# -- gates -------------------------------------------------------------------


class MissingScore(CurationError, ValueError):
    pass


class EmptyInput(CurationError, ValueError):
    pass


class FractionInfeasible(CurationError, ValueError):
    pass


class MapTooSmall(CurationError, ValueError):
    pass


class MissingDice(CurationError, ValueError):
    pass


class MissingFeature(CurationError, ValueError):
    pass


class SingleClass(CurationError, ValueError):
    pass


class LengthMismatch(CurationError, ValueError):
    pass


class ChannelMismatch(LengthMismatch):
    pass


class Degenerate(CurationError, ValueError):
    """Training vectors carry no information that separates the classes."""
