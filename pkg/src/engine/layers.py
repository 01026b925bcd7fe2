"""
Layer definitions and shape propagation for the inference engine

Tensors are (channels, height, width). Weight layouts:
    conv2d            [out, in, kh, kw]
    depthwise_conv2d  [channels, kh, kw]
    dense             [out, in]  (input flattened in c, y, x order)
"""

import enum
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from src.utils.errors import SchemaError, ShapeError

Shape = Tuple[int, int, int]


class LayerKind(enum.Enum):
    CONV2D = "conv2d"
    DEPTHWISE_CONV2D = "depthwise_conv2d"
    RELU = "relu"
    MAXPOOL2D = "maxpool2d"
    GLOBAL_AVG_POOL = "global_avg_pool"
    DENSE = "dense"
    SOFTMAX = "softmax"
    RESIDUAL_BLOCK = "residual_block"


PARAMETERLESS = {LayerKind.RELU, LayerKind.MAXPOOL2D, LayerKind.GLOBAL_AVG_POOL, LayerKind.SOFTMAX}


def _frozen(values) -> Optional[np.ndarray]:
    if values is None:
        return None
    array = np.array(values, dtype=np.float32)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Layer:
    kind: LayerKind
    kernel: Tuple[int, int] = (1, 1)
    stride: int = 1
    padding: int = 0
    in_channels: int = 0
    out_channels: int = 0
    in_features: int = 0
    out_features: int = 0
    weights: Optional[np.ndarray] = None
    bias: Optional[np.ndarray] = None
    inner: Tuple["Layer", ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "kernel", tuple(int(k) for k in self.kernel))
        object.__setattr__(self, "inner", tuple(self.inner))
        object.__setattr__(self, "weights", _frozen(self.weights))
        object.__setattr__(self, "bias", _frozen(self.bias))
        self._check_parameters()

    @property
    def weight_shape(self) -> Tuple[int, ...]:
        kh, kw = self.kernel
        if self.kind is LayerKind.CONV2D:
            return (self.out_channels, self.in_channels, kh, kw)
        if self.kind is LayerKind.DEPTHWISE_CONV2D:
            return (self.in_channels, kh, kw)
        if self.kind is LayerKind.DENSE:
            return (self.out_features, self.in_features)
        return (0,)

    @property
    def bias_size(self) -> int:
        if self.kind is LayerKind.DENSE:
            return self.out_features
        if self.kind in (LayerKind.CONV2D, LayerKind.DEPTHWISE_CONV2D):
            return self.out_channels
        return 0

    def _check_parameters(self):
        kind = self.kind
        if kind in PARAMETERLESS or kind is LayerKind.RESIDUAL_BLOCK:
            if self.weights is not None and self.weights.size or self.bias is not None and self.bias.size:
                raise SchemaError(f"{kind.value} carries no weights")
            if kind is LayerKind.MAXPOOL2D and (min(self.kernel) < 1 or self.stride < 1):
                raise SchemaError("maxpool2d needs a positive kernel and stride")
            if kind is LayerKind.RESIDUAL_BLOCK and not self.inner:
                raise SchemaError("residual_block needs at least one inner layer")
            return

        if min(self.kernel) < 1 or self.stride < 1 or self.padding < 0:
            raise SchemaError(f"{kind.value}: invalid kernel/stride/padding")
        if kind is LayerKind.DEPTHWISE_CONV2D and self.in_channels != self.out_channels:
            raise SchemaError("depthwise_conv2d must keep the channel count")
        if kind is LayerKind.DENSE and (self.in_features < 1 or self.out_features < 1):
            raise SchemaError("dense needs positive in/out features")
        if kind in (LayerKind.CONV2D, LayerKind.DEPTHWISE_CONV2D) and (self.in_channels < 1 or self.out_channels < 1):
            raise SchemaError(f"{kind.value} needs positive channel counts")

        expected = int(np.prod(self.weight_shape))
        if self.weights is None or self.weights.size != expected:
            got = 0 if self.weights is None else self.weights.size
            raise SchemaError(f"{kind.value}: expected {expected} weights, got {got}")
        object.__setattr__(self, "weights", self.weights.reshape(self.weight_shape))
        if self.bias is not None and self.bias.size != self.bias_size:
            raise SchemaError(f"{kind.value}: expected {self.bias_size} bias values, got {self.bias.size}")


def conv2d(in_channels: int, out_channels: int, kernel: int, weights, bias=None,
           stride: int = 1, padding: int = 0) -> Layer:
    return Layer(LayerKind.CONV2D, kernel=(kernel, kernel), stride=stride, padding=padding,
                 in_channels=in_channels, out_channels=out_channels, weights=weights, bias=bias)


def depthwise_conv2d(channels: int, kernel: int, weights, bias=None, stride: int = 1, padding: int = 0) -> Layer:
    return Layer(LayerKind.DEPTHWISE_CONV2D, kernel=(kernel, kernel), stride=stride, padding=padding,
                 in_channels=channels, out_channels=channels, weights=weights, bias=bias)


def dense(in_features: int, out_features: int, weights, bias=None) -> Layer:
    return Layer(LayerKind.DENSE, in_features=in_features, out_features=out_features, weights=weights, bias=bias)


def maxpool2d(kernel: int, stride: Optional[int] = None, padding: int = 0) -> Layer:
    return Layer(LayerKind.MAXPOOL2D, kernel=(kernel, kernel), stride=stride or kernel, padding=padding)


def relu() -> Layer:
    return Layer(LayerKind.RELU)


def global_avg_pool() -> Layer:
    return Layer(LayerKind.GLOBAL_AVG_POOL)


def softmax() -> Layer:
    return Layer(LayerKind.SOFTMAX)


def residual_block(*inner: Layer) -> Layer:
    return Layer(LayerKind.RESIDUAL_BLOCK, inner=tuple(inner))


def _window_out(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def output_shape(layer: Layer, input_shape: Shape) -> Shape:
    """Shape after the layer; ShapeError when the input does not fit"""
    c, h, w = input_shape
    kind = layer.kind
    if kind in (LayerKind.CONV2D, LayerKind.DEPTHWISE_CONV2D, LayerKind.MAXPOOL2D):
        kh, kw = layer.kernel
        if kind is not LayerKind.MAXPOOL2D and c != layer.in_channels:
            raise ShapeError(f"{kind.value} expects {layer.in_channels} channels, got {c}")
        h_out = _window_out(h, kh, layer.stride, layer.padding)
        w_out = _window_out(w, kw, layer.stride, layer.padding)
        if h_out < 1 or w_out < 1:
            raise ShapeError(f"{kind.value} window {kh}x{kw} does not fit input {h}x{w}")
        out_c = c if kind is LayerKind.MAXPOOL2D else layer.out_channels
        return (out_c, h_out, w_out)
    if kind is LayerKind.DENSE:
        if c * h * w != layer.in_features:
            raise ShapeError(f"dense expects {layer.in_features} inputs, got {c * h * w}")
        return (layer.out_features, 1, 1)
    if kind is LayerKind.GLOBAL_AVG_POOL:
        return (c, 1, 1)
    if kind is LayerKind.RESIDUAL_BLOCK:
        shape = input_shape
        for inner in layer.inner:
            shape = output_shape(inner, shape)
        if shape != input_shape:
            raise ShapeError(f"residual_block changes shape {input_shape} -> {shape}")
        return input_shape
    return input_shape


def chain_shapes(layers, input_shape: Shape):
    """Output shape after every layer of a sequence"""
    shapes = []
    shape = input_shape
    for layer in layers:
        shape = output_shape(layer, shape)
        shapes.append(shape)
    return shapes
