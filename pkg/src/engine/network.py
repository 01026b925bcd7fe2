"""
Model container and deterministic forward pass

Weights are stored as float32 and every computation runs in float64.
A Model is immutable once built; forward() only allocates per-call arrays,
so one Model can serve many threads.
"""

import logging
from dataclasses import dataclass, field
from typing import Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.engine.layers import Layer, LayerKind, Shape, chain_shapes
from src.models.models import ClassScores
from src.utils.errors import ShapeError
from src.vision.transform import DEFAULT_MEAN, DEFAULT_STD, IMAGE_CHANNELS, IMAGE_SIDE, ImageTensor

logger = logging.getLogger(__name__)

DEFAULT_INPUT_SHAPE: Shape = (IMAGE_CHANNELS, IMAGE_SIDE, IMAGE_SIDE)


@dataclass(frozen=True, eq=False)
class Model:
    name: str
    class_labels: Tuple[str, ...]
    layers: Tuple[Layer, ...]
    mean: Tuple[float, float, float] = DEFAULT_MEAN
    std: Tuple[float, float, float] = DEFAULT_STD
    input_shape: Shape = field(default=DEFAULT_INPUT_SHAPE)

    def __post_init__(self):
        object.__setattr__(self, "class_labels", tuple(self.class_labels))
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "mean", tuple(float(v) for v in self.mean))
        object.__setattr__(self, "std", tuple(float(v) for v in self.std))
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        validate_model(self)

    @property
    def output_dim(self) -> int:
        return len(self.class_labels)


def validate_model(model: Model) -> None:
    """Shape-check the full chain and the classifier head"""
    if len(model.mean) != IMAGE_CHANNELS or len(model.std) != IMAGE_CHANNELS:
        raise ShapeError("normalization needs three mean and three std values")
    if any(v == 0 for v in model.std):
        raise ShapeError("normalization std must be non-zero")
    if len(model.layers) < 2:
        raise ShapeError("model needs at least a dense layer and a softmax")
    if model.layers[-1].kind is not LayerKind.SOFTMAX:
        raise ShapeError("last layer must be softmax")
    head = model.layers[-2]
    if head.kind is not LayerKind.DENSE:
        raise ShapeError("layer before softmax must be dense")
    if head.out_features != len(model.class_labels):
        raise ShapeError(f"dense head has {head.out_features} outputs for {len(model.class_labels)} labels")
    chain_shapes(model.layers, model.input_shape)


def _windows(x: np.ndarray, layer: Layer, pad_value: float = 0.0) -> np.ndarray:
    """(C, Hout, Wout, kh, kw) view of the padded input"""
    kh, kw = layer.kernel
    p = layer.padding
    if p:
        x = np.pad(x, ((0, 0), (p, p), (p, p)), constant_values=pad_value)
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))
    return win[:, ::layer.stride, ::layer.stride]


def _bias(layer: Layer) -> np.ndarray:
    if layer.bias is None:
        return np.zeros(layer.bias_size, dtype=np.float64)
    return layer.bias.astype(np.float64)


def apply_layer(layer: Layer, x: np.ndarray) -> np.ndarray:
    """Apply one layer to a float64 (C, H, W) tensor"""
    kind = layer.kind
    if kind is LayerKind.CONV2D:
        win = _windows(x, layer)
        w = layer.weights.astype(np.float64)
        out = np.tensordot(w, win, axes=([1, 2, 3], [0, 3, 4]))
        return out + _bias(layer)[:, None, None]
    if kind is LayerKind.DEPTHWISE_CONV2D:
        win = _windows(x, layer)
        w = layer.weights.astype(np.float64)
        out = np.einsum("chwyx,cyx->chw", win, w)
        return out + _bias(layer)[:, None, None]
    if kind is LayerKind.MAXPOOL2D:
        return _windows(x, layer, pad_value=-np.inf).max(axis=(3, 4))
    if kind is LayerKind.RELU:
        return np.maximum(x, 0.0)
    if kind is LayerKind.GLOBAL_AVG_POOL:
        return x.mean(axis=(1, 2), keepdims=True)
    if kind is LayerKind.DENSE:
        w = layer.weights.astype(np.float64)
        out = w @ x.reshape(-1) + _bias(layer)
        return out.reshape(-1, 1, 1)
    if kind is LayerKind.SOFTMAX:
        z = x.reshape(-1)
        e = np.exp(z - z.max())
        return (e / e.sum()).reshape(x.shape)
    if kind is LayerKind.RESIDUAL_BLOCK:
        return run_layers(layer.inner, x) + x
    raise ShapeError(f"unknown layer kind {kind}")


def run_layers(layers: Sequence[Layer], x: np.ndarray) -> np.ndarray:
    out = np.asarray(x, dtype=np.float64)
    if out.ndim != 3:
        raise ShapeError(f"expected a (C, H, W) tensor, got shape {out.shape}")
    for layer in layers:
        out = apply_layer(layer, out)
    return out


def forward(model: Model, tensor: Union[ImageTensor, np.ndarray]) -> ClassScores:
    values = tensor.values if isinstance(tensor, ImageTensor) else np.asarray(tensor)
    if tuple(values.shape) != model.input_shape:
        raise ShapeError(f"model {model.name} expects input {model.input_shape}, got {tuple(values.shape)}")
    probs = run_layers(model.layers, values).reshape(-1)
    return ClassScores(model.class_labels, tuple(float(p) for p in probs))


def argmax_class(scores: ClassScores) -> Tuple[str, int]:
    """Label and index of the highest score; ties go to the lowest index"""
    if not scores.scores:
        raise ValueError("empty score vector")
    index = int(np.argmax(np.asarray(scores.scores)))
    return scores.labels[index], index
