"""Raster images and lossless file I/O (PNG, binary PGM/PPM).

Pixels are addressed with 0-based ``(col, row)`` indices; the center of pixel
``k`` along an axis sits at continuous coordinate ``k + 0.5``.
"""

from __future__ import annotations

import io
import re
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"

# PNG colour types (IHDR byte 9)
_PNG_GRAY, _PNG_RGB, _PNG_PALETTE, _PNG_GRAY_ALPHA, _PNG_RGBA = 0, 2, 3, 4, 6


class ImageFormatError(ValueError):
    """Base class for file contents that cannot be turned into an Image."""


class UnsupportedFormatError(ImageFormatError):
    """Well-formed input in a format, bit depth or layout we refuse to handle."""


class CorruptImageError(ImageFormatError):
    """Header or payload is truncated or malformed."""


class Image:
    """Immutable 8-bit raster with 1 (gray) or 3 (RGB) channels.

    Backed by a read-only ``uint8`` array of shape ``(height, width, channels)``,
    i.e. row-major with interleaved channels.
    """

    __slots__ = ("_pixels",)

    def __init__(self, pixels):
        arr = np.asarray(pixels)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValueError(f"expected a (height, width[, channels]) array, got shape {arr.shape}")
        if arr.shape[2] not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {arr.shape[2]}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"image must be at least 1x1, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if not np.issubdtype(arr.dtype, np.integer):
                raise ValueError(f"samples must be integers, got {arr.dtype}")
            if arr.min() < 0 or arr.max() > 255:
                raise ValueError("samples must lie in [0, 255]")
        arr = np.array(arr, dtype=np.uint8, order="C", copy=True)
        arr.setflags(write=False)
        self._pixels = arr

    @classmethod
    def from_samples(cls, width: int, height: int, channels: int, samples) -> Image:
        data = np.frombuffer(bytes(samples), dtype=np.uint8)
        if data.size != width * height * channels:
            raise ValueError(
                f"expected {width * height * channels} samples for {width}x{height}x{channels}, got {data.size}"
            )
        return cls(data.reshape(height, width, channels))

    @classmethod
    def filled(cls, width: int, height: int, value, channels: int = 1) -> Image:
        return cls(np.full((height, width, channels), value, dtype=np.uint8))

    @property
    def pixels(self) -> np.ndarray:
        """Read-only ``(height, width, channels)`` view of the samples."""
        return self._pixels

    @property
    def width(self) -> int:
        return self._pixels.shape[1]

    @property
    def height(self) -> int:
        return self._pixels.shape[0]

    @property
    def channels(self) -> int:
        return self._pixels.shape[2]

    @property
    def size(self) -> tuple[int, int]:
        return self.width, self.height

    @property
    def samples(self) -> bytes:
        return self._pixels.tobytes()

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self._pixels.shape == other._pixels.shape and np.array_equal(self._pixels, other._pixels)

    def __hash__(self):
        return hash((self._pixels.shape, self._pixels.tobytes()))

    def __repr__(self):
        return f"Image(width={self.width}, height={self.height}, channels={self.channels})"


@dataclass(frozen=True)
class PixelCoord:
    col: int
    row: int

    def __post_init__(self):
        if self.col < 0 or self.row < 0:
            raise ValueError(f"pixel coordinates must be non-negative, got ({self.col}, {self.row})")

    @classmethod
    def within(cls, col: int, row: int, width: int, height: int) -> PixelCoord:
        if not (0 <= col < width and 0 <= row < height):
            raise ValueError(f"pixel ({col}, {row}) outside {width}x{height}")
        return cls(col, row)


# ---------------------------------------------------------------------------
# Loading


def load_image(path) -> Image:
    """Read a PNG or binary PGM/PPM file without any colour conversion.

    Raises ``OSError`` on I/O failure, :class:`UnsupportedFormatError` for
    unknown formats, 16-bit or sub-8-bit data, palettes and alpha channels, and
    :class:`CorruptImageError` for truncated or malformed files.
    """
    data = Path(path).read_bytes()
    if data.startswith(PNG_SIGNATURE):
        return _decode_png(data)
    if data[:2] in (b"P5", b"P6"):
        return _decode_netpbm(data)
    if data[:2] in (b"P1", b"P2", b"P3", b"P4"):
        raise UnsupportedFormatError(f"{path}: only binary P5/P6 netpbm files are supported")
    raise UnsupportedFormatError(f"{path}: not a PNG, PGM or PPM file")


def _decode_png(data: bytes) -> Image:
    # IHDR must be the first chunk: length(4) type(4) width(4) height(4) depth(1) colour(1)
    if len(data) < 33 or data[12:16] != b"IHDR":
        raise CorruptImageError("PNG header is truncated or missing IHDR")
    bit_depth, colour_type = data[24], data[25]
    if colour_type in (_PNG_GRAY_ALPHA, _PNG_RGBA):
        raise UnsupportedFormatError("PNG with alpha channel is not supported")
    if colour_type == _PNG_PALETTE:
        raise UnsupportedFormatError("palette PNG is not supported")
    if colour_type not in (_PNG_GRAY, _PNG_RGB):
        raise CorruptImageError(f"invalid PNG colour type {colour_type}")
    if bit_depth == 16:
        raise UnsupportedFormatError("16-bit PNG is not supported")
    if bit_depth != 8:
        raise UnsupportedFormatError(f"{bit_depth}-bit PNG is not supported")
    _check_png_chunks(data)
    try:
        with PILImage.open(io.BytesIO(data)) as im:
            im.load()
            arr = np.asarray(im)
    except (OSError, SyntaxError, ValueError) as exc:
        raise CorruptImageError(f"cannot decode PNG: {exc}") from exc
    expected_ndim = 2 if colour_type == _PNG_GRAY else 3
    if arr.dtype != np.uint8 or arr.ndim != expected_ndim:
        raise CorruptImageError(f"decoded PNG has unexpected layout {arr.dtype} {arr.shape}")
    return Image(arr)


def _check_png_chunks(data: bytes) -> None:
    # the decoder tolerates a missing tail, so walk the chunk list ourselves
    pos = len(PNG_SIGNATURE)
    while True:
        if pos + 12 > len(data):
            raise CorruptImageError("PNG is truncated before IEND")
        (length,) = struct.unpack(">I", data[pos:pos + 4])
        end = pos + 12 + length
        if end > len(data):
            raise CorruptImageError("PNG chunk runs past end of file")
        body = data[pos + 4:end - 4]
        if zlib.crc32(body) != struct.unpack(">I", data[end - 4:end])[0]:
            raise CorruptImageError(f"PNG chunk {body[:4]!r} has a bad CRC")
        if body[:4] == b"IEND":
            return
        pos = end


_NETPBM_TOKEN = re.compile(rb"(?:\s|#[^\n\r]*[\n\r])*(\d+)")


def _decode_netpbm(data: bytes) -> Image:
    channels = 1 if data[:2] == b"P5" else 3
    pos = 2
    fields = []
    for _ in range(3):
        m = _NETPBM_TOKEN.match(data, pos)
        if m is None:
            raise CorruptImageError("netpbm header is truncated or malformed")
        fields.append(int(m.group(1)))
        pos = m.end()
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data) or data[pos:pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise CorruptImageError("netpbm header is truncated or malformed")
    pos += 1
    width, height, maxval = fields
    if width < 1 or height < 1 or maxval < 1:
        raise CorruptImageError(f"invalid netpbm header values {fields}")
    if maxval > 255:
        raise UnsupportedFormatError("16-bit netpbm is not supported")
    n = width * height * channels
    if len(data) - pos < n:
        raise CorruptImageError(f"netpbm raster truncated: expected {n} bytes, found {len(data) - pos}")
    raster = np.frombuffer(data, dtype=np.uint8, count=n, offset=pos)
    return Image(raster.reshape(height, width, channels))


# ---------------------------------------------------------------------------
# Saving


def save_image(img: Image, path) -> None:
    """Write ``img`` losslessly; the extension picks PNG or netpbm.

    Netpbm output is P5 for gray images and P6 for RGB, whichever of ``.pgm``
    and ``.ppm`` is used.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".png":
        arr = img.pixels[:, :, 0] if img.channels == 1 else img.pixels
        buf = io.BytesIO()
        PILImage.fromarray(np.ascontiguousarray(arr)).save(buf, format="PNG")
        path.write_bytes(buf.getvalue())
    elif suffix in (".pgm", ".ppm"):
        magic = b"P5" if img.channels == 1 else b"P6"
        header = magic + f"\n{img.width} {img.height}\n255\n".encode("ascii")
        path.write_bytes(header + img.samples)
    else:
        raise UnsupportedFormatError(f"unsupported output extension {suffix!r} (use .png, .pgm or .ppm)")
