"""
Parameter and FLOP accounting

One multiply-accumulate counts as 2 FLOPs. Biases, activations, pooling,
softmax and the residual skip addition are not counted.
"""

from dataclasses import dataclass
from typing import List, Tuple, Union

from src.engine.layers import Layer, LayerKind, Shape, output_shape
from src.engine.network import Model


@dataclass(frozen=True)
class LayerReport:
    index: str
    kind: str
    input_shape: Shape
    output_shape: Shape
    params: int
    flops: int
    detail: str


def count_params(target: Union[Model, Layer]) -> int:
    if isinstance(target, Model):
        return sum(count_params(layer) for layer in target.layers)
    total = 0
    if target.weights is not None:
        total += int(target.weights.size)
    if target.bias is not None:
        total += int(target.bias.size)
    for inner in target.inner:
        total += count_params(inner)
    return total


def flops(layer: Layer, input_shape: Shape) -> int:
    kind = layer.kind
    if kind is LayerKind.RESIDUAL_BLOCK:
        total, shape = 0, input_shape
        for inner in layer.inner:
            total += flops(inner, shape)
            shape = output_shape(inner, shape)
        return total
    if kind not in (LayerKind.CONV2D, LayerKind.DEPTHWISE_CONV2D, LayerKind.DENSE):
        return 0

    out_c, out_h, out_w = output_shape(layer, input_shape)
    kh, kw = layer.kernel
    if kind is LayerKind.CONV2D:
        return 2 * kh * kw * layer.in_channels * layer.out_channels * out_h * out_w
    if kind is LayerKind.DEPTHWISE_CONV2D:
        return 2 * kh * kw * layer.in_channels * out_h * out_w
    return 2 * layer.in_features * layer.out_features


def layer_flops(model: Model) -> List[Tuple[Layer, Shape, int]]:
    rows = []
    shape = model.input_shape
    for layer in model.layers:
        rows.append((layer, shape, flops(layer, shape)))
        shape = output_shape(layer, shape)
    return rows


def flops_total(model: Model) -> int:
    return sum(count for _, _, count in layer_flops(model))


def trailing_dense_index(model: Model) -> int:
    for index in range(len(model.layers) - 1, -1, -1):
        if model.layers[index].kind is LayerKind.DENSE:
            return index
    raise ValueError(f"model {model.name} has no dense layer")


def last_layer_complexity(model: Model) -> float:
    """Share (percent) of total FLOPs spent in the trailing dense layer"""
    rows = layer_flops(model)
    total = sum(count for _, _, count in rows)
    if total == 0:
        return 0.0
    return 100.0 * rows[trailing_dense_index(model)][2] / total


def _describe(layer: Layer) -> str:
    kind = layer.kind
    kh, kw = layer.kernel
    if kind is LayerKind.CONV2D:
        return f"{kh}x{kw} {layer.in_channels}->{layer.out_channels} s{layer.stride} p{layer.padding}"
    if kind is LayerKind.DEPTHWISE_CONV2D:
        return f"{kh}x{kw} dw{layer.in_channels} s{layer.stride} p{layer.padding}"
    if kind is LayerKind.MAXPOOL2D:
        return f"{kh}x{kw} s{layer.stride} p{layer.padding}"
    if kind is LayerKind.DENSE:
        return f"{layer.in_features}->{layer.out_features}"
    if kind is LayerKind.RESIDUAL_BLOCK:
        return f"{len(layer.inner)} inner layers"
    return ""


def _summarize(layers, shape: Shape, prefix: str, rows: List[LayerReport]) -> Shape:
    for i, layer in enumerate(layers):
        index = f"{prefix}{i}"
        out = output_shape(layer, shape)
        rows.append(LayerReport(index, layer.kind.value, shape, out, count_params(layer),
                                flops(layer, shape), _describe(layer)))
        if layer.kind is LayerKind.RESIDUAL_BLOCK:
            _summarize(layer.inner, shape, f"{index}.", rows)
        shape = out
    return shape


def layer_summary(model: Model) -> List[LayerReport]:
    """Per-layer rows; residual inner layers follow their block as 'i.j'"""
    rows: List[LayerReport] = []
    _summarize(model.layers, model.input_shape, "", rows)
    return rows
