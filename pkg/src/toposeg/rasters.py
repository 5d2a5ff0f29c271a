"""Core raster types and bit-exact file I/O.

Two on-disk formats are supported:

* ``F32R`` — magic ``F32R``, height and width as u32 little-endian, then
  height*width IEEE-754 float32 little-endian samples, row-major. Lossless
  at float32 precision.
* ``PGM8`` — binary PGM (``P5``), maxval 255 only. Samples are mapped v/255
  on read and round-half-up quantized on write.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import MalformedHeader, OutOfRange, TruncatedPayload

# F32R samples slightly outside [0, 1] are clamped up to this tolerance;
# anything further out is rejected as corrupt.
VALUE_TOLERANCE = 1e-6

_WHITESPACE = b" \t\r\n\x0b\x0c"


class RasterFormat(enum.Enum):
    PGM8 = "pgm8"
    F32R = "f32r"


class PixelCoord(NamedTuple):
    row: int
    col: int


@dataclass(frozen=True)
class Spacing:
    """Physical pixel spacing in millimeters (row step, column step)."""

    dy: float = 1.0
    dx: float = 1.0

    def __post_init__(self):
        if not (self.dy > 0 and self.dx > 0):
            raise ValueError(f"spacing must be positive, got ({self.dy}, {self.dx})")


def _as_2d(values, height: int, width: int, dtype) -> np.ndarray:
    if height <= 0 or width <= 0:
        raise ValueError(f"dimensions must be positive, got {height}x{width}")
    arr = np.asarray(values, dtype=dtype)
    if arr.ndim == 1:
        if arr.size != height * width:
            raise ValueError(
                f"expected {height * width} values for {height}x{width}, got {arr.size}"
            )
        arr = arr.reshape(height, width)
    elif arr.shape != (height, width):
        raise ValueError(f"expected shape ({height}, {width}), got {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class LikelihoodMap:
    """Dense 2D raster of per-pixel foreground probabilities in [0, 1].

    The backing array is float64 and marked read-only; all operations treat
    maps as immutable values.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"expected a non-empty 2D array, got shape {arr.shape}")
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            bad = float(arr[(arr < 0.0) | (arr > 1.0)].flat[0])
            raise OutOfRange(f"likelihood value {bad!r} outside [0, 1]")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_values(cls, height: int, width: int, values: Sequence[float]) -> "LikelihoodMap":
        return cls(_as_2d(values, height, width, np.float64))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def values(self) -> np.ndarray:
        return self.data.ravel()


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Dense 2D raster of {0, 1} labels."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"expected a non-empty 2D array, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if not np.all(np.isin(arr, (0, 1))):
                raise OutOfRange("mask values must be 0 or 1")
            arr = arr.astype(np.uint8)
        elif arr.max(initial=0) > 1:
            raise OutOfRange("mask values must be 0 or 1")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_values(cls, height: int, width: int, values: Sequence[int]) -> "BinaryMask":
        return cls(_as_2d(values, height, width, np.int64))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def values(self) -> np.ndarray:
        return self.data.ravel()

    def as_likelihood(self) -> LikelihoodMap:
        """View the mask as a 0/1-valued likelihood map."""
        return LikelihoodMap(self.data.astype(np.float64))


def binarize(lmap: LikelihoodMap, threshold: float = 0.5) -> BinaryMask:
    """Threshold a likelihood map; ``>=`` is inclusive so a 0/1 map at 0.5
    binarizes back to itself."""
    if not (0.0 <= threshold <= 1.0):
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    return BinaryMask((lmap.data >= threshold).astype(np.uint8))


# --- file formats -----------------------------------------------------------


def detect_format(data: bytes) -> RasterFormat:
    if data[:4] == b"F32R":
        return RasterFormat.F32R
    if data[:2] == b"P5":
        return RasterFormat.PGM8
    raise MalformedHeader("unrecognized raster magic (expected P5 or F32R)")


def _read_pgm(data: bytes) -> LikelihoodMap:
    if data[:2] != b"P5":
        raise MalformedHeader("not a binary PGM (missing P5 magic)")
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos] in _WHITESPACE:
            pos += 1
        start = pos
        while pos < len(data) and data[pos] not in _WHITESPACE:
            pos += 1
        if start == pos:
            raise MalformedHeader("incomplete PGM header")
        try:
            fields.append(int(data[start:pos]))
        except ValueError:
            raise MalformedHeader(f"non-numeric PGM header field {data[start:pos]!r}") from None
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise MalformedHeader("missing whitespace after PGM maxval")
    pos += 1
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise MalformedHeader(f"bad PGM dimensions {width}x{height}")
    if maxval != 255:
        raise MalformedHeader(f"only maxval 255 is supported, got {maxval}")
    payload = data[pos:]
    if len(payload) < height * width:
        raise TruncatedPayload(
            f"PGM payload has {len(payload)} bytes, expected {height * width}"
        )
    if len(payload) > height * width:
        raise MalformedHeader(f"{len(payload) - height * width} trailing bytes after PGM payload")
    samples = np.frombuffer(payload, dtype=np.uint8).astype(np.float64) / 255.0
    return LikelihoodMap(samples.reshape(height, width))


def _read_f32r(data: bytes) -> LikelihoodMap:
    if data[:4] != b"F32R":
        raise MalformedHeader("not an F32R raster (missing magic)")
    if len(data) < 12:
        raise MalformedHeader("F32R header truncated")
    height, width = struct.unpack_from("<II", data, 4)
    if height == 0 or width == 0:
        raise MalformedHeader(f"bad F32R dimensions {height}x{width}")
    payload = data[12:]
    expected = height * width * 4
    if len(payload) < expected:
        raise TruncatedPayload(f"F32R payload has {len(payload)} bytes, expected {expected}")
    if len(payload) > expected:
        raise MalformedHeader(f"{len(payload) - expected} trailing bytes after F32R payload")
    samples = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    low = samples < 0.0
    high = samples > 1.0
    if np.any(samples < -VALUE_TOLERANCE) or np.any(samples > 1.0 + VALUE_TOLERANCE):
        bad = samples[(samples < -VALUE_TOLERANCE) | (samples > 1.0 + VALUE_TOLERANCE)]
        raise OutOfRange(f"F32R value {float(bad.flat[0])!r} outside [0, 1] beyond tolerance")
    samples = samples.copy()
    samples[low] = 0.0
    samples[high] = 1.0
    return LikelihoodMap(samples.reshape(height, width))


def read_raster(data: bytes, fmt: RasterFormat) -> LikelihoodMap:
    if fmt is RasterFormat.PGM8:
        return _read_pgm(data)
    if fmt is RasterFormat.F32R:
        return _read_f32r(data)
    raise ValueError(f"unknown raster format {fmt!r}")


def write_raster(lmap: LikelihoodMap, fmt: RasterFormat) -> bytes:
    if fmt is RasterFormat.PGM8:
        # round-half-up so golden files are bit-exact across platforms
        samples = np.floor(lmap.data * 255.0 + 0.5).astype(np.uint8)
        header = f"P5\n{lmap.width} {lmap.height}\n255\n".encode("ascii")
        return header + samples.tobytes()
    if fmt is RasterFormat.F32R:
        header = b"F32R" + struct.pack("<II", lmap.height, lmap.width)
        return header + lmap.data.astype("<f4").tobytes()
    raise ValueError(f"unknown raster format {fmt!r}")


def load_raster(path) -> LikelihoodMap:
    """Read a raster file, detecting the format from its magic bytes."""
    with open(path, "rb") as fh:
        data = fh.read()
    return read_raster(data, detect_format(data))


def signed_f32r_bytes(arr: np.ndarray) -> bytes:
    """Serialize an arbitrary 2D float array in the F32R layout. Used for
    signed rasters (gradients) that must bypass the [0, 1] likelihood check."""
    if arr.ndim != 2:
        raise ValueError(f"expected a 2D array, got shape {arr.shape}")
    height, width = arr.shape
    header = b"F32R" + struct.pack("<II", height, width)
    return header + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def signed_f32r_array(data: bytes) -> np.ndarray:
    """Parse F32R-layout bytes into a float64 array without range checks."""
    if data[:4] != b"F32R":
        raise MalformedHeader("not an F32R raster (missing magic)")
    if len(data) < 12:
        raise MalformedHeader("F32R header truncated")
    height, width = struct.unpack_from("<II", data, 4)
    if height == 0 or width == 0:
        raise MalformedHeader(f"bad F32R dimensions {height}x{width}")
    payload = data[12:]
    expected = height * width * 4
    if len(payload) < expected:
        raise TruncatedPayload(f"F32R payload has {len(payload)} bytes, expected {expected}")
    if len(payload) > expected:
        raise MalformedHeader(f"{len(payload) - expected} trailing bytes after F32R payload")
    return np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(height, width)


def save_raster(lmap: LikelihoodMap, path, fmt: RasterFormat | None = None) -> None:
    """Write a raster; format defaults from the file suffix (.pgm -> PGM8)."""
    if fmt is None:
        fmt = RasterFormat.PGM8 if str(path).endswith(".pgm") else RasterFormat.F32R
    with open(path, "wb") as fh:
        fh.write(write_raster(lmap, fmt))
