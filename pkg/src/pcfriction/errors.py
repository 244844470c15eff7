"""Exception hierarchy shared by every pcfriction module."""


class PCFrictionError(Exception):
    """Base class for all package errors."""


class ArgumentError(PCFrictionError, ValueError):
    """An argument is outside the operation's valid domain."""


class EmptyInputError(PCFrictionError, ValueError):
    """An input that must hold data holds none."""


class ParseError(PCFrictionError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FormatError(PCFrictionError, ValueError):
    """A binary file does not carry the expected structure."""


class UnsupportedFormatError(FormatError):
    def __init__(self, format_id):
        self.format_id = format_id
        super().__init__(f"unsupported LAS point format {format_id} (supported: 0, 1, 2, 3)")


class DegenerateFitError(PCFrictionError, ValueError):
    """Least-squares fit has no unique solution."""


class ContractError(PCFrictionError, ValueError):
    """A precondition of an operation was violated by the caller."""


class CorpusError(PCFrictionError, ValueError):
    def __init__(self, message, region_id=None):
        self.region_id = region_id
        super().__init__(message)


class CheckpointVersionError(PCFrictionError):
    """Checkpoint written by an incompatible format version or config."""


class CheckpointCorruptError(PCFrictionError):
    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)


class UndefinedNSEError(PCFrictionError, ValueError):
    """NSE is undefined for a constant observed series."""
