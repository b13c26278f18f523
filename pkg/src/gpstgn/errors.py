"""Exception hierarchy shared across the package.

The CLI maps these to exit codes: ``DataError`` and ``ConfigError`` exit 2,
``NumericError`` exits 3.
"""


class GPSTGNError(Exception):
    """Base class for all package errors."""


class ShapeError(GPSTGNError, ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class ConfigError(GPSTGNError, ValueError):
    """A configuration value violates its documented constraints."""


class DataError(GPSTGNError, ValueError):
    """Input data is malformed, degenerate or inconsistent."""


class ParseError(DataError):
    """A text file could not be parsed; carries the offending location."""

    def __init__(self, message, path=None, row=None, column=None):
        loc = []
        if path is not None:
            loc.append(str(path))
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column}")
        prefix = ":".join(loc)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.path = path
        self.row = row
        self.column = column


class GraphMismatchError(DataError):
    """Graph and feature data disagree on node count or labels."""


class CheckpointError(DataError):
    """A checkpoint file is corrupt, truncated or inconsistent with its config."""


class TransferIncompatibleError(ConfigError):
    """Source checkpoint config cannot be reused for the target model."""


class NumericError(GPSTGNError, ArithmeticError):
    """A loss or parameter became non-finite during training."""
