"""Exception hierarchy shared by every dlmsgd module."""


class DlmsGdError(Exception):
    """Base class for all errors raised by this package."""


class EncodingError(DlmsGdError, ValueError):
    """A reading field is out of range for its DLMS encoding."""

    def __init__(self, field: str, value: object, reason: str = "out of range") -> None:
        super().__init__(f"cannot encode field {field!r}={value!r}: {reason}")
        self.field = field
        self.value = value


class MalformedBufferError(DlmsGdError, ValueError):
    """An encoded buffer does not follow the expected byte layout."""

    def __init__(self, offset: int, message: str) -> None:
        super().__init__(f"malformed buffer at offset {offset}: {message}")
        self.offset = offset


class PatternError(DlmsGdError, ValueError):
    """A pattern string could not be parsed or names an unsupported transform."""


class CoverageError(DlmsGdError, ValueError):
    """A pattern cannot tile a buffer of the given length without gaps."""

    def __init__(self, stride: int, remainder: int, length: int, detail: str = "") -> None:
        msg = f"pattern stride {stride} does not tile {length} bytes (remainder {remainder})"
        super().__init__(f"{msg}: {detail}" if detail else msg)
        self.stride = stride
        self.remainder = remainder
        self.length = length


class TransformError(DlmsGdError, ValueError):
    """A chunk does not have the size its transform requires."""


class CorruptStreamError(DlmsGdError, ValueError):
    """A compressed payload is inconsistent with the decompressor state."""


class StateFormatError(DlmsGdError, ValueError):
    """A state or container file has a bad magic, version or layout."""
