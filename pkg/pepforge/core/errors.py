# pepforge error hierarchy
#
# Every failure an operation can report maps to one class below. The CLI catches PepforgeError
# once and exits with the class' exit_code:
#   0 success, 1 unexpected, 2 config error, 3 data error, 4 numeric divergence.

from __future__ import annotations


class PepforgeError(Exception):
    """Base class for all pepforge failures."""
    exit_code = 1


# -----------------
# Configuration (2)
# -----------------
class ConfigError(PepforgeError):
    """Invalid configuration, out-of-range parameter, or incompatible checkpoints."""
    exit_code = 2


class ConfigValidationError(ConfigError):
    """Raised when a run configuration fails validation with path-scoped details."""
    pass


class RangeError(ConfigError):
    """A discrete index (time step, residue count) is outside its declared range."""
    pass


# -----------------
# Data (3)
# -----------------
class DataError(PepforgeError):
    """Input data is missing, malformed, or violates a representation invariant."""
    exit_code = 3


class InvalidValueError(DataError):
    """Non-finite or otherwise unusable scalar input."""
    pass


class DegenerateGeometryError(DataError):
    """Coincident or collinear points where a well-defined frame is required."""
    pass


class TooShortError(DataError):
    """Backbone has fewer residues than the operation needs."""
    pass


class EmptyStructureError(DataError):
    """No parsable ATOM/HETATM records."""
    pass


class ChainLookupError(DataError):
    """Requested chain id is not present in the structure."""
    pass


class EmptyPocketError(DataError):
    """No receptor residue lies within the contact cutoff."""
    pass


class DatasetSizeError(DataError):
    """Too few examples for the requested partitioning."""
    pass


class AlphabetError(DataError):
    """Sequence contains a letter outside the alignment alphabet."""
    pass


class EmptyDataError(DataError):
    """An aggregate was requested over an empty collection."""
    pass


class InvariantError(DataError):
    """Input violates a representation invariant (e.g. angles not wrapped)."""
    pass


class ShapeError(DataError):
    """Array shapes are inconsistent with each other or with the configuration."""
    pass


class DegenerateNormalizerError(DataError):
    """A normalising score is zero."""
    pass


# -----------------
# Numerics (4)
# -----------------
class NumericError(PepforgeError):
    """Numeric failure during training or sampling."""
    exit_code = 4


class TrainingDivergenceError(NumericError):
    """Loss or gradients became non-finite."""
    pass


class SamplingDivergenceError(NumericError):
    """A reverse-diffusion intermediate became non-finite."""
    pass


class DegeneratePosteriorError(NumericError):
    """Discrete posterior normaliser is zero."""
    pass


class GraphStateError(NumericError):
    """backward() called on a value with no recorded forward graph."""
    pass


class MaskingError(NumericError):
    """An attention query has no unmasked key."""
    pass


__all__ = [
    "PepforgeError",
    "ConfigError",
    "ConfigValidationError",
    "RangeError",
    "DataError",
    "InvalidValueError",
    "DegenerateGeometryError",
    "TooShortError",
    "EmptyStructureError",
    "ChainLookupError",
    "EmptyPocketError",
    "DatasetSizeError",
    "AlphabetError",
    "EmptyDataError",
    "InvariantError",
    "ShapeError",
    "DegenerateNormalizerError",
    "NumericError",
    "TrainingDivergenceError",
    "SamplingDivergenceError",
    "DegeneratePosteriorError",
    "GraphStateError",
    "MaskingError",
]
