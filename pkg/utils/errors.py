EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MALFORMED_INPUT = 2
EXIT_INVARIANT_VIOLATION = 3


class SdmError(Exception):
    """Base class for every error raised by the toolkit"""
    exit_code = EXIT_INVARIANT_VIOLATION


class UsageError(SdmError):
    """Raised when a command is invoked with inconsistent arguments"""
    exit_code = EXIT_USAGE


class MalformedInputError(SdmError):
    """Raised when an input file or document cannot be parsed"""
    exit_code = EXIT_MALFORMED_INPUT


class InvariantViolationError(SdmError):
    """Raised when a value breaks a precondition or invariant"""
    exit_code = EXIT_INVARIANT_VIOLATION


class SpectralTransferError(InvariantViolationError):
    """Raised when there's an error in a Fourier transform or amplitude swap"""
    pass


class MarginModelError(InvariantViolationError):
    """Raised when there's an error in the classifier head, loss or query scores"""
    pass


class ActiveLoopError(InvariantViolationError):
    """Raised when there's an error in pools, budgets or the selection protocol"""
    pass


class CalibrationError(InvariantViolationError):
    """Raised when there's an error computing calibration or accuracy metrics"""
    pass


class SyntheticDataError(InvariantViolationError):
    """Raised when synthetic bench parameters are invalid"""
    pass


class ConfigError(InvariantViolationError):
    """Raised when an experiment configuration is rejected"""
    pass


class DataIOError(MalformedInputError):
    """Raised when there's an error reading or writing a file format"""
    code = "io_error"


class BadMagicError(DataIOError):
    code = "bad_magic"


class TruncatedFileError(DataIOError):
    code = "truncated"


class TrailingBytesError(DataIOError):
    code = "trailing_bytes"


class SizeOverflowError(DataIOError):
    code = "size_overflow"


class UnsupportedVersionError(DataIOError):
    code = "unsupported_version"


class NetpbmFormatError(DataIOError):
    code = "netpbm_format"
