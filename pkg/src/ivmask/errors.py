"""Exception hierarchy shared across the toolkit."""


class IVMError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatch(IVMError, ValueError):
    pass


class LengthMismatch(IVMError, ValueError):
    pass


class ShapeMismatch(IVMError, ValueError):
    pass


class MalformedRle(IVMError, ValueError):
    pass


class NumericalError(IVMError, FloatingPointError):
    """A loss or parameter vector became NaN or infinite."""


class NonFiniteParams(NumericalError):
    pass


class EmptyBatch(IVMError, ValueError):
    pass


class EmptyDataset(IVMError, ValueError):
    pass


class EmptyProposalSet(IVMError, ValueError):
    pass


class ExpertError(IVMError, RuntimeError):
    def __init__(self, expert_id: str, cause: BaseException):
        super().__init__(f"expert {expert_id!r} failed: {cause}")
        self.expert_id = expert_id
        self.cause = cause


class AnnotationFailed(IVMError, RuntimeError):
    pass


class PlacementFailure(IVMError, RuntimeError):
    pass


# --- dataset_io ---------------------------------------------------------------


class FormatError(IVMError, ValueError):
    """Raised for any unreadable or inconsistent file."""


class MalformedLine(FormatError):
    def __init__(self, line_no: int, reason: str = ""):
        super().__init__(f"line {line_no}: {reason}" if reason else f"line {line_no}")
        self.line_no = line_no


class DuplicateId(FormatError):
    pass


class UnsupportedFormat(FormatError):
    pass


class TruncatedFile(FormatError):
    pass


class BadMagic(FormatError):
    pass


class BadVersion(FormatError):
    pass


class SizeMismatch(FormatError):
    pass


class ValueOutOfRange(FormatError):
    pass


class RecordIOError(IVMError, OSError):
    """I/O failure while processing a specific manifest record."""

    def __init__(self, record_id: str, cause: BaseException):
        super().__init__(f"record {record_id!r}: {cause}")
        self.record_id = record_id
        self.cause = cause
