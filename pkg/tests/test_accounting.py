import numpy as np
import pytest

from src.engine.accounting import (
    count_params, flops, flops_total, last_layer_complexity, layer_flops, layer_summary, trailing_dense_index,
)
from src.engine.layers import conv2d, dense, depthwise_conv2d, maxpool2d, relu, softmax
from src.engine.model_file import blob_float_count, load_model, save_model
from src.engine.network import Model
from src.models.models import TrafficClass

LABELS = TrafficClass.wire_names()


def conv_3x3(cin, cout, padding=1):
    return conv2d(cin, cout, 3, np.zeros((cout, cin, 3, 3)), np.zeros(cout), padding=padding)


def conv_dense_model():
    """conv 3->8 keeps 224x224, pool 28 gives 8x8x8 = 512 features"""
    layers = [conv_3x3(3, 8), maxpool2d(28), dense(512, 7, np.zeros((7, 512)), np.zeros(7)), softmax()]
    return Model("conv-dense", LABELS, layers)


def test_conv_params():
    assert count_params(conv_3x3(1, 8)) == 80


def test_dense_params():
    assert count_params(dense(512, 7, np.zeros((7, 512)), np.zeros(7))) == 3591


def test_parameterless_layers():
    for layer in (relu(), maxpool2d(2), softmax()):
        assert count_params(layer) == 0
        assert flops(layer, (3, 8, 8)) == 0


def test_bias_free_layer():
    assert count_params(dense(4, 2, np.zeros((2, 4)))) == 8


def test_dense_flops():
    assert flops(dense(512, 7, np.zeros((7, 512))), (512, 1, 1)) == 7168


def test_conv_flops():
    assert flops(conv_3x3(3, 8), (3, 224, 224)) == 2 * 3 * 3 * 3 * 8 * 224 * 224 == 21_676_032


def test_depthwise_flops():
    layer = depthwise_conv2d(8, 3, np.zeros((8, 3, 3)), padding=1)
    assert flops(layer, (8, 10, 10)) == 2 * 9 * 8 * 100


def test_conv_dense_complexity():
    model = conv_dense_model()
    assert flops_total(model) == 21_683_200
    assert trailing_dense_index(model) == 2
    expected = 100 * 7168 / 21_683_200
    assert last_layer_complexity(model) == pytest.approx(expected, rel=1e-9)
    assert last_layer_complexity(model) == pytest.approx(0.033, abs=5e-4)


def test_minimal_dense_model_params(tmp_path):
    n_in = 3 * 224 * 224
    model = Model("dense-only", LABELS, [dense(n_in, 7, np.zeros((7, n_in), dtype=np.float32)), softmax()])
    assert count_params(model) == 1_053_703
    path = tmp_path / "dense.vnn"
    save_model(model, path)
    assert count_params(load_model(path)) == 1_053_703
    assert last_layer_complexity(model) == 100.0


def test_params_equal_blob_floats(model_files):
    for path in model_files.values():
        assert count_params(load_model(path)) == blob_float_count(path)


def test_layer_flops_sum(reference_models):
    for model in reference_models.values():
        assert sum(count for _, _, count in layer_flops(model)) == flops_total(model)
        assert 0.0 < last_layer_complexity(model) < 100.0


def test_tiny_res_summary_has_residual_row(reference_models):
    rows = layer_summary(reference_models["tiny-res"])
    kinds = [row.kind for row in rows]
    assert "residual_block" in kinds
    block = rows[kinds.index("residual_block")]
    inner = [row for row in rows if row.index.startswith(f"{block.index}.")]
    assert [row.kind for row in inner] == ["conv2d", "relu", "conv2d"]
    assert block.params == sum(row.params for row in inner)
    assert block.flops == sum(row.flops for row in inner)
    assert block.input_shape == block.output_shape


def test_summary_totals_match(reference_models):
    for model in reference_models.values():
        top = [row for row in layer_summary(model) if "." not in row.index]
        assert sum(row.params for row in top) == count_params(model)
        assert sum(row.flops for row in top) == flops_total(model)
