"""Exception hierarchy shared by the library and the command line.

Every class carries the process exit code the CLI reports for it.
"""

from typing import Any, List, Optional, Sequence


class CainnError(Exception):
    """Base class for all cainn-flow errors."""

    exit_code: int = 1


class ContractError(CainnError, ValueError):
    """A caller violated an operation precondition."""


class ShapeError(ContractError):
    """Tensor extents do not fit the operation."""


class NumericError(CainnError, ArithmeticError):
    """A computation produced non-finite values."""


class OracleError(NumericError):
    """A verification oracle could not produce a trustworthy answer."""


class TrainingDivergedError(NumericError):
    """Training produced a non-finite loss.

    The model from the last finite step and the loss history up to it are
    kept on the exception so the caller can still persist them.
    """

    def __init__(
        self,
        message: str,
        last_good_model: Any = None,
        history: Optional[List[float]] = None,
    ):
        super().__init__(message)
        self.last_good_model = last_good_model
        self.history = list(history or [])


class DataIOError(CainnError, OSError):
    """A file could not be read or written in the expected format."""

    exit_code = 2


class MagicMismatchError(DataIOError):
    """The file does not start with the expected magic bytes."""


class VersionMismatchError(DataIOError):
    """The file was written by an unsupported format version."""


class TruncatedFileError(DataIOError):
    """The file ended before its declared contents."""


class ChecksumMismatchError(DataIOError):
    """The trailing CRC32 does not match the file contents."""


class VerificationFailure(CainnError):
    """One or more invariant suites failed.

    ``report`` holds the suite's full result document when one exists.
    """

    exit_code = 3

    def __init__(self, failed: Sequence[str], report: Optional[dict] = None):
        self.failed = list(failed)
        self.report = report
        super().__init__(f"Invariant checks failed: {', '.join(self.failed)}")
