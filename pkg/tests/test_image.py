import struct
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from scaleattack.image import (
    CorruptImageError,
    Image,
    PixelCoord,
    UnsupportedFormatError,
    load_image,
    save_image,
)


def _png_bytes(width, height, bit_depth, colour_type, raw=b""):
    def chunk(kind, data):
        return struct.pack(">I", len(data)) + kind + data + struct.pack(">I", zlib.crc32(kind + data))

    ihdr = struct.pack(">IIBBBBB", width, height, bit_depth, colour_type, 0, 0, 0)
    return b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr) + chunk(b"IDAT", zlib.compress(raw)) + chunk(b"IEND", b"")


def test_load_ppm_p6(tmp_path):
    body = bytes([255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 255])
    path = tmp_path / "a.ppm"
    path.write_bytes(b"P6\n2 2\n255\n" + body)
    img = load_image(path)
    assert (img.width, img.height, img.channels) == (2, 2, 3)
    assert img.samples == body


def test_load_ppm_with_comments(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# made by hand\n3 1 # width height\n255\n\x01\x02\x03")
    img = load_image(path)
    assert img.samples == b"\x01\x02\x03"
    assert img.channels == 1


def test_save_pgm_single_byte(tmp_path):
    path = tmp_path / "one.pgm"
    save_image(Image.filled(1, 1, 128), path)
    data = path.read_bytes()
    assert data.endswith(b"\n\x80")
    assert data[-1:] == b"\x80"
    assert data.startswith(b"P5")


def test_png_roundtrip_17x13_rgb(tmp_path):
    rng = np.random.default_rng(1)
    img = Image(rng.integers(0, 256, (13, 17, 3), dtype=np.uint8))
    for ext in ("png", "ppm"):
        path = tmp_path / f"x.{ext}"
        save_image(img, path)
        assert load_image(path) == img


@settings(max_examples=40, deadline=None)
@given(
    arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12), st.sampled_from([1, 3]))),
    st.sampled_from(["png", "pgm", "ppm"]),
)
def test_save_load_identity(tmp_path_factory, pixels, ext):
    img = Image(pixels)
    path = tmp_path_factory.mktemp("rt") / f"img.{ext}"
    save_image(img, path)
    back = load_image(path)
    assert (back.width, back.height, back.channels) == (img.width, img.height, img.channels)
    assert back.samples == img.samples


def test_truncated_ppm_is_corrupt(tmp_path):
    path = tmp_path / "t.ppm"
    path.write_bytes(b"P6\n4 4\n255\n" + bytes(10))
    with pytest.raises(CorruptImageError):
        load_image(path)


def test_truncated_header_is_corrupt(tmp_path):
    path = tmp_path / "h.ppm"
    path.write_bytes(b"P6\n4 ")
    with pytest.raises(CorruptImageError):
        load_image(path)


def test_truncated_png_is_corrupt(tmp_path):
    src = tmp_path / "ok.png"
    save_image(Image(np.arange(64 * 3, dtype=np.uint8).reshape(8, 8, 3)), src)
    data = src.read_bytes()
    for cut in (20, len(data) // 2, len(data) - 14):
        bad = tmp_path / f"cut{cut}.png"
        bad.write_bytes(data[:cut])
        with pytest.raises(CorruptImageError):
            load_image(bad)


def test_16bit_png_rejected(tmp_path):
    path = tmp_path / "deep.png"
    path.write_bytes(_png_bytes(1, 1, 16, 0, b"\x00\x12\x34"))
    with pytest.raises(UnsupportedFormatError, match="16-bit"):
        load_image(path)


def test_16bit_pgm_rejected(tmp_path):
    path = tmp_path / "deep.pgm"
    path.write_bytes(b"P5\n1 1\n65535\n\x12\x34")
    with pytest.raises(UnsupportedFormatError):
        load_image(path)


def test_alpha_png_rejected(tmp_path):
    path = tmp_path / "rgba.png"
    path.write_bytes(_png_bytes(1, 1, 8, 6, b"\x00\x01\x02\x03\x04"))
    with pytest.raises(UnsupportedFormatError, match="alpha"):
        load_image(path)


def test_unknown_format(tmp_path):
    path = tmp_path / "x.bin"
    path.write_bytes(b"GIF89a....")
    with pytest.raises(UnsupportedFormatError):
        load_image(path)


def test_error_kinds_are_distinct(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_image(tmp_path / "missing.png")
    assert not issubclass(CorruptImageError, UnsupportedFormatError)
    assert not issubclass(UnsupportedFormatError, CorruptImageError)


def test_save_unwritable_directory(tmp_path):
    with pytest.raises(OSError):
        save_image(Image.filled(2, 2, 0), tmp_path / "no" / "such" / "dir" / "x.png")


def test_save_unsupported_extension(tmp_path):
    with pytest.raises(UnsupportedFormatError):
        save_image(Image.filled(2, 2, 0), tmp_path / "x.jpg")


def test_image_invariants():
    with pytest.raises(ValueError):
        Image(np.zeros((0, 3), dtype=np.uint8))
    with pytest.raises(ValueError):
        Image(np.zeros((2, 2, 4), dtype=np.uint8))
    with pytest.raises(ValueError):
        Image(np.full((2, 2), 300))
    with pytest.raises(ValueError):
        Image.from_samples(2, 2, 3, bytes(11))
    img = Image.from_samples(2, 1, 3, bytes(range(6)))
    assert len(img.samples) == img.width * img.height * img.channels


def test_image_is_immutable():
    src = np.zeros((2, 2), dtype=np.uint8)
    img = Image(src)
    src[0, 0] = 9  # caller's buffer is copied
    assert img.pixels[0, 0, 0] == 0
    with pytest.raises(ValueError):
        img.pixels[0, 0, 0] = 1


def test_pixel_coord_bounds():
    assert PixelCoord.within(2, 3, 5, 4) == PixelCoord(2, 3)
    with pytest.raises(ValueError):
        PixelCoord.within(5, 0, 5, 4)
    with pytest.raises(ValueError):
        PixelCoord(-1, 0)
