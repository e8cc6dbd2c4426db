"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: validation problems exit 1, runtime or
numeric problems exit 2, file-format and other I/O problems exit 3.
"""


class SpdefitError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(SpdefitError, ValueError):
    """A parameter, grid, or configuration value violates its constraints."""


class ConfigError(ValidationError):
    """A configuration document could not be parsed or contains bad keys."""


class SimulationError(SpdefitError, RuntimeError):
    """The requested simulation is not well posed (e.g. a non-dissipative mode)."""


class EstimationError(SpdefitError, RuntimeError):
    """An estimator received degenerate input or failed to converge."""


class StudyError(SpdefitError, RuntimeError):
    """Too many replications of a Monte Carlo study failed."""


class FieldFormatError(SpdefitError, IOError):
    """Base class for problems with the binary field-file format."""


class BadMagicError(FieldFormatError):
    """The file does not start with the expected magic bytes."""


class VersionError(FieldFormatError):
    """The file declares an unsupported format version."""


class TruncatedFieldError(FieldFormatError):
    """The file body ends before the slice count promised by the header."""


class HeaderMismatchError(FieldFormatError):
    """Header fields are inconsistent with the file body."""


class SinkWriteError(FieldFormatError):
    """A slice consumer failed; the message names the failing slice index."""
