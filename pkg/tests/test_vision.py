import numpy as np
import pytest

from src.utils.errors import EmptyPacket, ZeroStd
from src.vision.transform import (
    IMAGE_SIDE, MAX_PACKET_BYTES, PacketImage, TransformConfig, normalize, packet_to_image, read_image, write_image,
)

QUADRANTS = bytes([0x00, 0xFF, 0x10, 0x20])
PPM_HEADER = b"P6\n224 224\n255\n"


def test_four_bytes_fill_quadrants():
    img = packet_to_image(QUADRANTS)
    half = IMAGE_SIDE // 2
    arr = img.array
    assert np.all(arr[:half, :half] == 0x00)
    assert np.all(arr[:half, half:] == 0xFF)
    assert np.all(arr[half:, :half] == 0x10)
    assert np.all(arr[half:, half:] == 0x20)


def test_quadrant_boundaries():
    img = packet_to_image(QUADRANTS)
    assert img.pixel(111, 111, 0) == 0x00
    assert img.pixel(111, 112, 1) == 0xFF
    assert img.pixel(112, 111, 2) == 0x10
    assert img.pixel(223, 223, 0) == 0x20


def test_single_byte_broadcasts():
    img = packet_to_image(b"\x7b")
    assert img.pixels == b"\x7b" * (224 * 224 * 3)


def test_full_grid_is_identity():
    data = bytes(k % 256 for k in range(MAX_PACKET_BYTES))
    arr = packet_to_image(data).array
    y, x = np.mgrid[0:IMAGE_SIDE, 0:IMAGE_SIDE]
    expected = (224 * y + x) % 256
    for c in range(3):
        assert np.array_equal(arr[:, :, c], expected)


def test_long_packets_keep_leading_bytes():
    data = bytes(k % 256 for k in range(MAX_PACKET_BYTES)) + b"\xaa" * 1000
    assert packet_to_image(data) == packet_to_image(data[:MAX_PACKET_BYTES])


def test_custom_max_bytes_truncates():
    cfg = TransformConfig(max_bytes=4)
    assert packet_to_image(QUADRANTS + b"\x99" * 60, cfg) == packet_to_image(QUADRANTS)


def test_channels_are_equal_and_deterministic():
    data = bytes(range(200))
    a, b = packet_to_image(data), packet_to_image(data)
    assert a == b
    assert a.pixels == b.pixels
    assert np.array_equal(a.array[:, :, 0], a.array[:, :, 2])


def test_empty_packet():
    with pytest.raises(EmptyPacket):
        packet_to_image(b"")


def test_image_is_read_only():
    img = packet_to_image(QUADRANTS)
    with pytest.raises(ValueError):
        img.array[0, 0, 0] = 1


def test_normalize_zero_image():
    img = PacketImage(np.zeros((224, 224, 3), dtype=np.uint8))
    tensor = normalize(img, (0, 0, 0), (1, 1, 1))
    assert tensor.shape == (3, 224, 224)
    assert np.all(tensor.values == 0.0)


def test_normalize_full_white_is_one():
    img = PacketImage(np.full((224, 224, 3), 255, dtype=np.uint8))
    assert np.allclose(normalize(img).values, 1.0)


def test_normalize_mid_gray():
    img = PacketImage(np.full((224, 224, 3), 128, dtype=np.uint8))
    value = normalize(img).values[0, 0, 0]
    assert value == pytest.approx((128 / 255 - 0.5) / 0.5)
    assert value == pytest.approx(0.00392, abs=1e-5)


def test_normalize_zero_std():
    with pytest.raises(ZeroStd):
        normalize(packet_to_image(QUADRANTS), (0.5, 0.5, 0.5), (0.5, 0.0, 0.5))


def test_write_ppm_zero_image(tmp_path):
    path = tmp_path / "zero.ppm"
    write_image(PacketImage(np.zeros((224, 224, 3), dtype=np.uint8)), path, "ppm")
    data = path.read_bytes()
    assert data[:15] == PPM_HEADER
    assert len(data) == 15 + 150528
    assert data[15:] == b"\x00" * 150528


def test_write_ppm_quadrants(tmp_path):
    path = tmp_path / "q.ppm"
    write_image(packet_to_image(QUADRANTS), path)
    data = path.read_bytes()
    assert data[15:18] == b"\x00\x00\x00"
    assert data[-3:] == b"\x20\x20\x20"


def test_write_pgm(tmp_path):
    path = tmp_path / "g.pgm"
    write_image(packet_to_image(b"\x7b"), path, "pgm")
    data = path.read_bytes()
    assert data.startswith(b"P5\n224 224\n255\n")
    assert data[15:] == b"\x7b" * 50176


def test_image_reads_back(tmp_path):
    img = packet_to_image(bytes(range(97)))
    for fmt in ("ppm", "pgm"):
        path = tmp_path / f"img.{fmt}"
        write_image(img, path, fmt)
        assert read_image(path) == img
