"""Exception hierarchy; the CLI maps these onto distinct exit codes."""


class LowmtError(Exception):
    """Base class for workbench failures."""


class ConfigError(LowmtError):
    """Invalid configuration: bad sizes, unknown languages, shape mismatches."""


class DataError(LowmtError):
    """Unusable input data: missing files, misalignment, bad encoding."""


class NumericError(LowmtError):
    """Numerical failure during training or decoding (NaN/Inf loss)."""


class AlignmentError(DataError):
    """Parallel files disagree on line counts."""


class DecodeError(DataError):
    """A corpus file is not valid UTF-8."""


class TransferError(ConfigError):
    """Parent checkpoint is shape-incompatible with the child model."""
