"""
Toy-scale reference models for the three CNN families compared by the bench

    tiny-squeeze  fire-style squeeze (1x1) / expand (3x3) block
    tiny-mobile   depthwise-separable blocks
    tiny-res      one residual block

Weights are He-uniform values taken from a counter hash (murmur3 finaliser)
rather than a numpy Generator, so a given (name, seed) produces the same
model file on every numpy release. The committed copies under tests/fixtures/
were written from DEFAULT_SEED.
"""

import logging
import math
from pathlib import Path
from typing import Callable, Dict, List, Union

import numpy as np

from src.engine.layers import (
    Layer, conv2d, dense, depthwise_conv2d, global_avg_pool, maxpool2d, relu, residual_block, softmax,
)
from src.engine.model_file import save_model
from src.engine.network import Model
from src.models.models import TrafficClass

logger = logging.getLogger(__name__)

DEFAULT_SEED = 2022


_MASK32 = np.uint64(0xFFFFFFFF)


def _mix32(x: np.ndarray) -> np.ndarray:
    # operands stay below 2**32, so every product fits in uint64
    x = x ^ (x >> np.uint64(16))
    x = (x * np.uint64(0x85EBCA6B)) & _MASK32
    x = x ^ (x >> np.uint64(13))
    x = (x * np.uint64(0xC2B2AE35)) & _MASK32
    return x ^ (x >> np.uint64(16))


class _Init:
    """Draws weights in construction order from one counter stream per model"""

    def __init__(self, seed: int):
        self.offset = np.uint64((seed * 0x9E3779B9) & 0xFFFFFFFF)
        self.counter = 0

    def uniform(self, size: int) -> np.ndarray:
        """size values in [-1, 1)"""
        index = np.arange(self.counter, self.counter + size, dtype=np.uint64)
        self.counter += size
        hashed = _mix32((index + self.offset) & _MASK32)
        return hashed.astype(np.float64) / 2.0 ** 32 * 2.0 - 1.0

    def he(self, shape, fan_in: int) -> np.ndarray:
        limit = math.sqrt(6.0 / fan_in)
        return (self.uniform(int(np.prod(shape))) * limit).reshape(shape).astype(np.float32)

    def bias(self, size: int) -> np.ndarray:
        return (self.uniform(size) * 0.01).astype(np.float32)

    def conv(self, cin: int, cout: int, k: int, stride: int = 1, padding: int = 0) -> Layer:
        return conv2d(cin, cout, k, self.he((cout, cin, k, k), cin * k * k), self.bias(cout), stride, padding)

    def dw(self, channels: int, k: int, stride: int = 1, padding: int = 0) -> Layer:
        return depthwise_conv2d(channels, k, self.he((channels, k, k), k * k), self.bias(channels), stride, padding)

    def fc(self, fin: int, fout: int) -> Layer:
        return dense(fin, fout, self.he((fout, fin), fin), self.bias(fout))


def _stem(init: _Init) -> List[Layer]:
    # 3x224x224 -> 8x56x56
    return [init.conv(3, 8, 3, stride=4, padding=1), relu()]


def _head(init: _Init, channels: int) -> List[Layer]:
    return [global_avg_pool(), init.fc(channels, len(TrafficClass)), softmax()]


def tiny_squeeze(seed: int = DEFAULT_SEED) -> Model:
    init = _Init(seed)
    layers = _stem(init) + [
        maxpool2d(2),
        init.conv(8, 4, 1), relu(),               # squeeze
        init.conv(4, 16, 3, padding=1), relu(),   # expand
        maxpool2d(2),
        init.conv(16, 4, 1), relu(),
        init.conv(4, 16, 3, padding=1), relu(),
    ] + _head(init, 16)
    return Model("tiny-squeeze", TrafficClass.wire_names(), layers)


def tiny_mobile(seed: int = DEFAULT_SEED) -> Model:
    init = _Init(seed)
    layers = _stem(init) + [
        init.dw(8, 3, stride=2, padding=1), relu(),
        init.conv(8, 16, 1), relu(),
        init.dw(16, 3, stride=2, padding=1), relu(),
        init.conv(16, 32, 1), relu(),
    ] + _head(init, 32)
    return Model("tiny-mobile", TrafficClass.wire_names(), layers)


def tiny_res(seed: int = DEFAULT_SEED) -> Model:
    init = _Init(seed)
    layers = _stem(init) + [
        maxpool2d(2),
        residual_block(
            init.conv(8, 8, 3, padding=1), relu(),
            init.conv(8, 8, 3, padding=1),
        ),
        relu(),
    ] + _head(init, 8)
    return Model("tiny-res", TrafficClass.wire_names(), layers)


REFERENCE_MODELS: Dict[str, Callable[[int], Model]] = {
    "tiny-squeeze": tiny_squeeze,
    "tiny-mobile": tiny_mobile,
    "tiny-res": tiny_res,
}


def build_reference_model(name: str, seed: int = DEFAULT_SEED) -> Model:
    try:
        return REFERENCE_MODELS[name](seed)
    except KeyError:
        raise ValueError(f"unknown reference model {name!r}; choose from {sorted(REFERENCE_MODELS)}") from None


def write_reference_models(out_dir: Union[str, Path], seed: int = DEFAULT_SEED) -> List[Path]:
    out = Path(out_dir)
    paths = []
    for name in REFERENCE_MODELS:
        path = out / f"{name}.vnn"
        save_model(build_reference_model(name, seed), path)
        paths.append(path)
    logger.info(f"Wrote {len(paths)} reference models to {out}")
    return paths
