import json

import numpy as np
import pytest

import handkp.netgraph as ng
from handkp.errors import ConfigurationError, InputError
from tests.conftest import random_archive
from handkp.weights_io import bind_weights


@pytest.fixture(scope="module")
def net224():
    return ng.build_network(ng.NetworkConfig(input_size=224))


class TestArchitectureTrace:
    def test_default_224(self, net224):
        enc_layers = [l for l in net224.layers if l.name.startswith("enc.")]
        assert enc_layers[-1].out_shape == (14, 14, 320)
        assert net224.output_grid == (28, 28)
        assert net224.layers[-1].out_shape == (28, 28, 22)

    def test_input_112(self):
        net = ng.build_network(ng.NetworkConfig(input_size=112))
        assert net.output_grid == (14, 14)
        assert net.layers[-1].out_shape == (14, 14, 22)

    def test_stride_not_removed(self):
        net = ng.build_network(ng.NetworkConfig(block14_stride_removed=False))
        enc_layers = [l for l in net.layers if l.name.startswith("enc.")]
        assert enc_layers[-1].out_shape == (7, 7, 320)

    def test_encoder_has_17_units(self, net224):
        units = {l.name.split(".")[1] for l in net224.layers
                 if l.name.startswith("enc.b")}
        assert units == {f"b{i:02d}" for i in range(1, 18)}

    def test_four_stride2_stages_when_removed(self, net224):
        strides = [l.stride for l in net224.layers
                   if l.name.startswith("enc.") and l.stride == 2]
        assert len(strides) == 4

    def test_block14_annotation(self, net224):
        b14 = [l for l in net224.layers if l.name.startswith("enc.b14.")]
        dw = [l for l in b14 if l.op == "depthwise"][0]
        assert dw.stride == 1
        assert dw.note == "stride removed"

    def test_residuals_only_on_matching_stride1_blocks(self, net224):
        for block in net224.blocks:
            if block.residual:
                assert all(l.stride == 1 for l in block.layers)
                assert block.layers[0].in_shape == block.layers[-1].out_shape


class TestForward:
    def test_zero_weights_zero_output(self, net224):
        x = np.full((1, 224, 224, 3), 0.5, np.float32)
        out = ng.forward(net224, x)
        assert out.shape == (1, 28, 28, 22)
        assert np.array_equal(out, np.zeros_like(out))

    def test_wrong_shape_raises(self, net224):
        with pytest.raises(InputError):
            ng.forward(net224, np.zeros((1, 112, 112, 3), np.float32))

    def test_bitwise_deterministic(self, rng):
        net = ng.build_network(ng.NetworkConfig(input_size=112))
        bind_weights(net, random_archive(net, rng))
        x = rng.uniform(-1, 1, (1, 112, 112, 3)).astype(np.float32)
        ref = ng.forward(net, x)
        assert np.abs(ref).max() > 0
        for _ in range(3):
            assert np.array_equal(ng.forward(net, x), ref)

    def test_output_channels_always_22(self, rng):
        net = ng.build_network(ng.NetworkConfig(input_size=112))
        bind_weights(net, random_archive(net, rng))
        out = ng.forward(net, rng.uniform(-1, 1, (1, 112, 112, 3)).astype(np.float32))
        assert out.shape[3] == 22
        assert np.isfinite(out).all()


class TestCounts:
    def test_depthwise_weight_count(self):
        layer = ng.Layer("x", "depthwise", (3, 3, 32), 1, "linear", False,
                         (8, 8, 32), (8, 8, 32))
        # 3*3*32 weights + free bias
        assert layer.param_count() == 288 + 32

    def test_pointwise_param_count(self):
        layer = ng.Layer("x", "conv", (1, 1, 32, 64), 1, "linear", False,
                         (8, 8, 32), (8, 8, 64))
        assert layer.param_count() == 32 * 64 + 64

    def test_total_equals_bound_array_lengths(self, net224, rng):
        net = ng.build_network(ng.NetworkConfig(input_size=224))
        archive = random_archive(net, rng)
        # Brute-force sum over archive arrays, excluding running stats/eps.
        brute = sum(a.size for n, a in archive.entries.items()
                    if not (n.endswith(".bn.mean") or n.endswith(".bn.var")
                            or n.endswith(".bn.eps")))
        assert ng.count_parameters(net)["total"] == brute

    def test_pointwise_flops(self):
        layer = ng.Layer("x", "conv", (1, 1, 320, 256), 1, "relu6", True,
                         (14, 14, 320), (14, 14, 256))
        assert layer.flop_count() == 2 * 14 * 14 * 320 * 256 == 32_112_640

    def test_depthwise_flops(self):
        layer = ng.Layer("x", "depthwise", (3, 3, 32), 1, "relu6", True,
                         (8, 8, 32), (8, 8, 32))
        assert layer.flop_count() == 2 * 8 * 8 * 3 * 3 * 32 == 36_864

    def test_audit_reports_published_figures(self, net224):
        audit = ng.audit_report(net224)
        assert audit["published_params"] == 7_980_000
        assert audit["published_flops"] == 16_300_000
        assert audit["params"] == ng.count_parameters(net224)["total"]
        assert audit["published_flops_reconstructible"] is False
        # A single 224 pass exceeds the published FLOP figure by orders of
        # magnitude under the MAC=2 convention, hence not reconstructible.
        assert audit["flops"] > 10 * audit["published_flops"]


class TestDescribe:
    def test_first_row_is_stem(self, net224):
        row = ng.describe(net224)[0]
        assert row["name"] == "enc.stem"
        assert row["kernel"] == [3, 3, 3, 32]
        assert row["stride"] == 2
        assert row["out"] == [112, 112, 32]

    def test_byte_identical_for_same_config(self):
        a = ng.describe_json(ng.build_network(ng.NetworkConfig()))
        b = ng.describe_json(ng.build_network(ng.NetworkConfig()))
        assert a == b

    def test_json_roundtrips(self, net224):
        doc = json.loads(ng.describe_json(net224))
        assert doc["output_grid"] == [28, 28]
        assert doc["output_channels"] == 22
        assert len(doc["layers"]) == len(net224.layers)


def test_invalid_configs_rejected():
    with pytest.raises(ConfigurationError):
        ng.NetworkConfig(num_keypoints=20)
    with pytest.raises(ConfigurationError):
        ng.NetworkConfig(input_size=100)
    with pytest.raises(ConfigurationError):
        ng.BlockSpec("inverted_residual", 32, stride=3)
