"""Exception types shared across the toolkit.

Every error carries a stable machine-parsable ``code`` so front ends (CLI,
HTTP service) can map failures without string matching.
"""


class DataError(Exception):
    """Base class for data-level failures (bad files, incompatible inputs)."""

    code = "DATA_ERROR"


class MalformedHeader(DataError):
    code = "MALFORMED_HEADER"


class TruncatedPayload(DataError):
    code = "TRUNCATED_PAYLOAD"


class OutOfRange(DataError):
    code = "OUT_OF_RANGE"


class ShapeMismatch(DataError):
    code = "SHAPE_MISMATCH"


class EmptyMask(DataError):
    code = "EMPTY_MASK"


class LengthMismatch(DataError):
    code = "LENGTH_MISMATCH"


class InfeasibleSpec(DataError):
    code = "INFEASIBLE_SPEC"


class ImageTooSmall(DataError):
    code = "IMAGE_TOO_SMALL"


class InvalidConfig(DataError):
    code = "INVALID_CONFIG"
