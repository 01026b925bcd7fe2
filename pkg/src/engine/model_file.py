"""
.vnn model file reader/writer

    "VNN1" | header length (uint32 LE) | UTF-8 JSON header | weight blob

The blob holds little-endian float32 values in layer order, each layer's
weights followed by its bias; residual blocks contribute their inner layers
in order.
"""

import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Iterator, Tuple, Union

import numpy as np

from src.engine.layers import Layer, LayerKind, PARAMETERLESS
from src.engine.network import DEFAULT_INPUT_SHAPE, Model
from src.utils.errors import BadMagic, SchemaError
from src.vision.transform import DEFAULT_MEAN, DEFAULT_STD

logger = logging.getLogger(__name__)

MAGIC = b"VNN1"
FORMAT_VERSION = 1
_FLOAT = np.dtype("<f4")


def _layer_header(layer: Layer) -> Dict[str, Any]:
    entry: Dict[str, Any] = {"kind": layer.kind.value}
    kind = layer.kind
    if kind in (LayerKind.CONV2D, LayerKind.DEPTHWISE_CONV2D, LayerKind.MAXPOOL2D):
        entry.update(kernel=list(layer.kernel), stride=layer.stride, padding=layer.padding)
    if kind in (LayerKind.CONV2D, LayerKind.DEPTHWISE_CONV2D):
        entry.update(in_channels=layer.in_channels, out_channels=layer.out_channels, bias=layer.bias is not None)
    if kind is LayerKind.DENSE:
        entry.update(in_features=layer.in_features, out_features=layer.out_features, bias=layer.bias is not None)
    if kind is LayerKind.RESIDUAL_BLOCK:
        entry["layers"] = [_layer_header(inner) for inner in layer.inner]
    return entry


def _layer_arrays(layers) -> Iterator[np.ndarray]:
    for layer in layers:
        if layer.kind is LayerKind.RESIDUAL_BLOCK:
            yield from _layer_arrays(layer.inner)
            continue
        if layer.weights is not None:
            yield layer.weights.reshape(-1)
        if layer.bias is not None:
            yield layer.bias.reshape(-1)


def save_model(model: Model, path: Union[str, Path]) -> None:
    header = {
        "format": FORMAT_VERSION,
        "name": model.name,
        "class_labels": list(model.class_labels),
        "normalization": {"mean": list(model.mean), "std": list(model.std)},
        "input_shape": list(model.input_shape),
        "layers": [_layer_header(layer) for layer in model.layers],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    arrays = list(_layer_arrays(model.layers))
    blob = np.concatenate(arrays).astype(_FLOAT).tobytes() if arrays else b""

    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fp:
        fp.write(MAGIC)
        fp.write(struct.pack("<I", len(header_bytes)))
        fp.write(header_bytes)
        fp.write(blob)
    logger.info(f"Saved model {model.name} to {path} ({len(blob) // 4} floats)")


class _BlobCursor:
    def __init__(self, blob: np.ndarray):
        self.blob = blob
        self.offset = 0

    def take(self, count: int, what: str) -> np.ndarray:
        end = self.offset + count
        if end > self.blob.size:
            raise SchemaError(f"weight blob too short: {what} needs {count} floats at offset {self.offset}, "
                              f"blob holds {self.blob.size}")
        values = self.blob[self.offset:end]
        self.offset = end
        return values


def _int(entry: Dict[str, Any], key: str, default: Any = None) -> int:
    value = entry.get(key, default)
    if value is None or isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"layer {entry.get('kind')}: {key!r} must be an integer")
    return value


def _build_layer(entry: Dict[str, Any], cursor: _BlobCursor) -> Layer:
    if not isinstance(entry, dict):
        raise SchemaError("layer entries must be objects")
    try:
        kind = LayerKind(entry.get("kind"))
    except ValueError:
        raise SchemaError(f"unknown layer kind {entry.get('kind')!r}") from None

    if kind is LayerKind.RESIDUAL_BLOCK:
        inner = entry.get("layers")
        if not isinstance(inner, list) or not inner:
            raise SchemaError("residual_block needs a non-empty 'layers' list")
        return Layer(kind, inner=tuple(_build_layer(sub, cursor) for sub in inner))
    if kind in PARAMETERLESS and kind is not LayerKind.MAXPOOL2D:
        return Layer(kind)

    kernel = entry.get("kernel", [1, 1])
    if not (isinstance(kernel, list) and len(kernel) == 2 and all(isinstance(k, int) for k in kernel)):
        raise SchemaError(f"layer {kind.value}: kernel must be [kh, kw]")
    stride = _int(entry, "stride", 1)
    padding = _int(entry, "padding", 0)
    if kind is LayerKind.MAXPOOL2D:
        return Layer(kind, kernel=tuple(kernel), stride=stride, padding=padding)

    kwargs: Dict[str, Any] = {}
    if kind is LayerKind.DENSE:
        kwargs.update(in_features=_int(entry, "in_features"), out_features=_int(entry, "out_features"))
        n_weights = kwargs["in_features"] * kwargs["out_features"]
        n_bias = kwargs["out_features"]
    else:
        kwargs.update(kernel=tuple(kernel), stride=stride, padding=padding,
                      in_channels=_int(entry, "in_channels"), out_channels=_int(entry, "out_channels"))
        kh, kw = kernel
        if kind is LayerKind.CONV2D:
            n_weights = kh * kw * kwargs["in_channels"] * kwargs["out_channels"]
        else:
            n_weights = kh * kw * kwargs["in_channels"]
        n_bias = kwargs["out_channels"]

    weights = cursor.take(n_weights, f"{kind.value} weights")
    bias = cursor.take(n_bias, f"{kind.value} bias") if entry.get("bias", True) else None
    return Layer(kind, weights=weights, bias=bias, **kwargs)


def _triple(value: Any, what: str, kind: type) -> Tuple:
    """Three numbers of the given kind; bools and strings are rejected"""
    if not isinstance(value, list) or len(value) != 3:
        raise SchemaError(f"{what} must be a list of three numbers, got {value!r}")
    allowed = (int,) if kind is int else (int, float)
    if any(isinstance(v, bool) or not isinstance(v, allowed) for v in value):
        raise SchemaError(f"{what} must hold {kind.__name__} values, got {value!r}")
    return tuple(kind(v) for v in value)


def _parse_header(raw: bytes) -> Dict[str, Any]:
    try:
        header = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise SchemaError(f"model header is not valid UTF-8 JSON: {e}") from e
    if not isinstance(header, dict):
        raise SchemaError("model header must be an object")
    for key in ("name", "class_labels", "layers"):
        if key not in header:
            raise SchemaError(f"model header missing {key!r}")
    if not isinstance(header["class_labels"], list) or not all(isinstance(v, str) for v in header["class_labels"]):
        raise SchemaError("class_labels must be a list of strings")
    if not isinstance(header["layers"], list):
        raise SchemaError("layers must be a list")
    return header


def load_model(path: Union[str, Path]) -> Model:
    """Read and fully validate a model; inference never touches files afterwards"""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise BadMagic(f"{path} is not a VNN1 model file")
    if len(data) < 8:
        raise SchemaError("model file truncated before header length")
    (header_len,) = struct.unpack_from("<I", data, 4)
    if len(data) < 8 + header_len:
        raise SchemaError("model file truncated inside header")
    header = _parse_header(data[8:8 + header_len])

    blob_bytes = data[8 + header_len:]
    if len(blob_bytes) % 4:
        raise SchemaError(f"weight blob length {len(blob_bytes)} is not a multiple of 4")
    blob = np.frombuffer(blob_bytes, dtype=_FLOAT)

    cursor = _BlobCursor(blob)
    try:
        layers = [_build_layer(entry, cursor) for entry in header["layers"]]
    except (TypeError, ValueError) as e:
        raise SchemaError(f"malformed layer description: {e}") from e
    if cursor.offset != blob.size:
        raise SchemaError(f"weight blob has {blob.size - cursor.offset} unused floats")

    norm = header.get("normalization", {})
    if not isinstance(norm, dict):
        raise SchemaError("normalization must be an object with 'mean' and 'std'")
    mean = _triple(norm.get("mean", list(DEFAULT_MEAN)), "normalization mean", float)
    std = _triple(norm.get("std", list(DEFAULT_STD)), "normalization std", float)
    input_shape = _triple(header.get("input_shape", list(DEFAULT_INPUT_SHAPE)), "input_shape", int)
    if any(v <= 0 for v in input_shape):
        raise SchemaError(f"input_shape must be positive, got {list(input_shape)}")

    try:
        model = Model(
            name=str(header["name"]),
            class_labels=tuple(header["class_labels"]),
            layers=tuple(layers),
            mean=mean,
            std=std,
            input_shape=input_shape,
        )
    except (TypeError, ValueError) as e:
        raise SchemaError(f"model header does not describe a valid model: {e}") from e
    logger.info(f"Loaded model {model.name} from {path}: {len(model.layers)} layers, {blob.size} weights")
    return model


def blob_float_count(path: Union[str, Path]) -> int:
    """Number of float32 values stored in a model file's weight blob"""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise BadMagic(f"{path} is not a VNN1 model file")
    (header_len,) = struct.unpack_from("<I", data, 4)
    return (len(data) - 8 - header_len) // 4

