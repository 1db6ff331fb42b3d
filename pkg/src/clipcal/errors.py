"""Exception hierarchy and process exit codes shared across the toolkit."""

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class ClipcalError(Exception):
    """Base class for all toolkit errors."""


class DataError(ClipcalError):
    """A dataset, calibrator file, or CLI input is structurally invalid."""


class MissingFileError(DataError):
    """A file named by a manifest (or the manifest itself) does not exist."""


class ManifestError(DataError):
    """manifest.json is missing required fields or declares unsupported values."""


class SizeMismatchError(DataError):
    """A binary tensor file does not hold the element count the manifest declares."""


class ChecksumMismatchError(DataError):
    """A tensor file's sha256 digest differs from the manifest's."""


class LabelRangeError(DataError):
    """A label lies outside [0, k)."""


class MissingHeadError(DataError):
    """An operation needs head weights/bias but the dataset has none."""


class CalibratorSpecError(DataError):
    """A calibrator pipeline violates stage-ordering or parameter constraints."""


class NumericDegeneracyError(ClipcalError):
    """A numeric routine was called in a regime where its result is undefined
    (vanishing truncation mass, sigma ~ 0, no positive feature entries, ...)."""
