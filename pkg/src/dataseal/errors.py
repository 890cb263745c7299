"""Exception hierarchy shared across the package."""

from __future__ import annotations


class DataSealError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(DataSealError):
    pass


class ModulusMismatch(DataSealError):
    pass


class InvalidExponent(DataSealError):
    pass


class GeometryError(DataSealError):
    pass


class RangeError(DataSealError):
    pass


class ZeroEntryError(DataSealError):
    """A polynomial encoding saw a zero entry, voiding its column checksum."""


class InvalidParams(DataSealError):
    pass


class TooWide(DataSealError):
    """Matrix has more columns than the backend has slots."""


class DepthExceeded(DataSealError):
    """Operation would push a ciphertext past the multiplicative depth budget."""


class ShapeMismatch(DataSealError):
    pass


class FrameError(DataSealError):
    """Base class for wire-frame decode failures."""


class BadMagic(FrameError):
    pass


class UnknownType(FrameError):
    pass


class LengthMismatch(FrameError):
    pass


class ValueOutOfRange(FrameError):
    pass


class Truncated(FrameError):
    pass


class CrcMismatch(FrameError):
    pass


class TransportError(DataSealError):
    pass


class RemoteError(DataSealError):
    """Server answered with an ERROR message; carries its code and text."""

    def __init__(self, job_id: int, code: int, text: str):
        super().__init__(f"job {job_id}: server error {code}: {text}")
        self.job_id = job_id
        self.code = code
        self.text = text


class UnknownJob(DataSealError):
    """Result delivered for a job id that is not pending (unknown or consumed)."""


class LayerRejected(DataSealError):
    """A pipeline layer failed verification; carries the 1-based layer index."""

    def __init__(self, layer: int, verdict):
        super().__init__(f"layer {layer} rejected: {verdict}")
        self.layer = layer
        self.verdict = verdict
