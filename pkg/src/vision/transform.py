"""
Packet -> image transform

The packet's bytes (header and payload) fill an s x s grayscale grid row by
row, s = ceil(sqrt(L)), zero padded. The grid is resized to 224 x 224 with
nearest-neighbour sampling, source index = floor(target * s / 224), and the
gray value is replicated to three channels.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np
from PIL import Image

from src.utils.errors import EmptyPacket, ImageIoError, ZeroStd

logger = logging.getLogger(__name__)

IMAGE_SIDE = 224
IMAGE_CHANNELS = 3
MAX_PACKET_BYTES = IMAGE_SIDE * IMAGE_SIDE

DEFAULT_MEAN = (0.5, 0.5, 0.5)
DEFAULT_STD = (0.5, 0.5, 0.5)

IMAGE_FORMATS = ("ppm", "pgm")


@dataclass(frozen=True)
class TransformConfig:
    # longer packets are cut to their leading bytes
    max_bytes: int = MAX_PACKET_BYTES

    def __post_init__(self):
        if not 1 <= self.max_bytes <= MAX_PACKET_BYTES:
            raise ValueError(f"max_bytes must be in [1, {MAX_PACKET_BYTES}]")


DEFAULT_TRANSFORM = TransformConfig()


@dataclass(frozen=True, eq=False)
class PacketImage:
    """224 x 224 x 3 uint8 grid, row-major, channel-interleaved"""
    array: np.ndarray

    def __post_init__(self):
        if self.array.shape != (IMAGE_SIDE, IMAGE_SIDE, IMAGE_CHANNELS) or self.array.dtype != np.uint8:
            raise ValueError(f"PacketImage must be uint8 {IMAGE_SIDE}x{IMAGE_SIDE}x{IMAGE_CHANNELS}")
        self.array.setflags(write=False)

    @property
    def pixels(self) -> bytes:
        return self.array.tobytes()

    def pixel(self, y: int, x: int, c: int) -> int:
        return int(self.array[y, x, c])

    def __eq__(self, other):
        return isinstance(other, PacketImage) and np.array_equal(self.array, other.array)


@dataclass(frozen=True, eq=False)
class ImageTensor:
    """Inference view of a PacketImage, shape (channels, height, width)"""
    values: np.ndarray

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.values.shape)


def packet_to_image(pkt_bytes: bytes, cfg: TransformConfig = DEFAULT_TRANSFORM) -> PacketImage:
    data = bytes(pkt_bytes)[:cfg.max_bytes]
    length = len(data)
    if length == 0:
        raise EmptyPacket("cannot render an empty packet")

    side = math.isqrt(length)
    if side * side < length:
        side += 1

    grid = np.zeros(side * side, dtype=np.uint8)
    grid[:length] = np.frombuffer(data, dtype=np.uint8)
    grid = grid.reshape(side, side)

    index = (np.arange(IMAGE_SIDE) * side) // IMAGE_SIDE
    gray = grid[np.ix_(index, index)]
    rgb = np.repeat(gray[:, :, np.newaxis], IMAGE_CHANNELS, axis=2)
    return PacketImage(np.ascontiguousarray(rgb))


def normalize(img: PacketImage, mean: Sequence[float] = DEFAULT_MEAN,
              std: Sequence[float] = DEFAULT_STD) -> ImageTensor:
    mean_arr = np.asarray(mean, dtype=np.float64).reshape(IMAGE_CHANNELS, 1, 1)
    std_arr = np.asarray(std, dtype=np.float64).reshape(IMAGE_CHANNELS, 1, 1)
    if np.any(std_arr == 0):
        raise ZeroStd(f"std has a zero channel: {list(std)}")

    chw = img.array.transpose(2, 0, 1).astype(np.float64) / 255.0
    values = (chw - mean_arr) / std_arr
    if not np.all(np.isfinite(values)):
        raise ValueError("normalization produced non-finite values")
    return ImageTensor(values)


def write_image(img: PacketImage, path: Union[str, Path], fmt: str = "ppm") -> None:
    """Binary PPM (P6, RGB) or PGM (P5, channel 0)"""
    fmt = fmt.lower()
    if fmt == "ppm":
        image = Image.fromarray(np.ascontiguousarray(img.array))
    elif fmt == "pgm":
        image = Image.fromarray(np.ascontiguousarray(img.array[:, :, 0]))
    else:
        raise ValueError(f"unknown image format {fmt!r}, expected one of {IMAGE_FORMATS}")

    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        image.save(path, format="PPM")
    except OSError as e:
        raise ImageIoError(f"cannot write {path}: {e}") from e


def read_image(path: Union[str, Path]) -> PacketImage:
    try:
        with Image.open(path) as image:
            image.load()
            if image.mode == "L":
                gray = np.asarray(image, dtype=np.uint8)
                array = np.repeat(gray[:, :, np.newaxis], IMAGE_CHANNELS, axis=2)
            else:
                array = np.asarray(image.convert("RGB"), dtype=np.uint8)
    except OSError as e:
        raise ImageIoError(f"cannot read {path}: {e}") from e
    return PacketImage(np.ascontiguousarray(array))
