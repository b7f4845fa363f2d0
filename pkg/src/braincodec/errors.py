"""Shared exception types."""


class CodecError(Exception):
    """Base class for errors raised by this package."""


class FormatError(CodecError):
    """A file or byte stream violates one of the documented wire formats."""
