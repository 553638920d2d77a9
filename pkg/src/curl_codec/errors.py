"""Exception hierarchy for the codec."""


class CurlError(Exception):
    """Base class for every error raised by curl_codec."""


class ZeroRange(CurlError, ValueError):
    pass


class EmptyCloud(CurlError, ValueError):
    pass


class ChannelRecoveryFailed(CurlError, ValueError):
    pass


class DegenerateInput(CurlError, ValueError):
    pass


class EmptyMesh(CurlError, ValueError):
    pass


class DimensionMismatch(CurlError, ValueError):
    pass


class NumericalFailure(CurlError, ArithmeticError):
    pass


class EmptyPatch(CurlError):
    pass


class InvalidMultiplier(CurlError, ValueError):
    pass


class CurlFormatError(CurlError):
    """The byte stream is not a usable CURL container."""


class BadMagic(CurlFormatError):
    pass


class UnsupportedVersion(CurlFormatError):
    pass


class ChecksumMismatch(CurlFormatError):
    pass


class Truncated(ChecksumMismatch):
    """Payload shorter than its own header declares.

    Truncation always breaks the trailing CRC too, hence the subclassing.
    """


class UnknownFormat(CurlError, ValueError):
    pass


class MalformedFile(CurlError, ValueError):
    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
