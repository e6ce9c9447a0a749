"""Encoder-decoder network: declaration, execution, and budget auditing.

The encoder is a MobileNetV2 feature extractor (width 1.0) with the
subsampling stride of inverted-residual unit 14 forced to 1, so four
stride-2 stages remain active and the feature grid is input/16. The
decoder is a small depthwise-separable head with a single 2x transposed
upsample, emitting 22 channels (21 keypoints + background) at input/8.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, InputError

NUM_KEYPOINTS = 21
OUTPUT_CHANNELS = NUM_KEYPOINTS + 1

# Published figures for the original network. The decoder used there is not
# fully documented, so the parameter total is reported beside ours rather
# than matched, and the FLOP figure is not reconstructible under any
# per-pixel convolution convention (it is below params * spatial reuse).
PUBLISHED_PARAM_COUNT = 7_980_000
PUBLISHED_FLOP_COUNT = 16_300_000


@dataclass
class BlockSpec:
    """One row of the declarative block table."""

    kind: str  # initial_conv | inverted_residual | pointwise |
    #            depthwise_separable | transposed_upsample | heatmap_head
    out_channels: int
    stride: int = 1
    expansion: int = 1  # inverted_residual only
    repeat: int = 1

    def __post_init__(self):
        if self.expansion < 1:
            raise ConfigurationError("expansion must be >= 1")
        if self.stride not in (1, 2):
            raise ConfigurationError("stride must be 1 or 2")
        if self.repeat < 1:
            raise ConfigurationError("repeat must be >= 1")


def default_encoder() -> list[BlockSpec]:
    """MobileNetV2 width-1.0 feature extractor as a block table."""
    return [
        BlockSpec("initial_conv", 32, stride=2),
        BlockSpec("inverted_residual", 16, stride=1, expansion=1, repeat=1),
        BlockSpec("inverted_residual", 24, stride=2, expansion=6, repeat=2),
        BlockSpec("inverted_residual", 32, stride=2, expansion=6, repeat=3),
        BlockSpec("inverted_residual", 64, stride=2, expansion=6, repeat=4),
        BlockSpec("inverted_residual", 96, stride=1, expansion=6, repeat=3),
        BlockSpec("inverted_residual", 160, stride=2, expansion=6, repeat=3),
        BlockSpec("inverted_residual", 320, stride=1, expansion=6, repeat=1),
    ]


def default_decoder() -> list[BlockSpec]:
    return [
        BlockSpec("pointwise", 256),
        BlockSpec("depthwise_separable", 256),
        BlockSpec("transposed_upsample", 128, stride=2),
        BlockSpec("depthwise_separable", 128),
        BlockSpec("heatmap_head", OUTPUT_CHANNELS),
    ]


@dataclass
class NetworkConfig:
    input_size: int = 224
    num_keypoints: int = NUM_KEYPOINTS
    encoder: list[BlockSpec] = field(default_factory=default_encoder)
    decoder: list[BlockSpec] = field(default_factory=default_decoder)
    block14_stride_removed: bool = True

    def __post_init__(self):
        if self.num_keypoints != NUM_KEYPOINTS:
            raise ConfigurationError(f"num_keypoints must be {NUM_KEYPOINTS}")
        if self.input_size < 16 or self.input_size % 16:
            raise ConfigurationError("input_size must be a positive multiple of 16")


# The unit whose subsampling is disabled, counting inverted-residual units
# from 1 across the encoder groups (the first unit of the 160-channel group).
STRIDE_REMOVED_UNIT = 14


@dataclass
class Layer:
    """One bound convolution (with optional batch norm folded at load)."""

    name: str
    op: str  # conv | depthwise | transposed
    kshape: tuple
    stride: int
    activation: str  # relu6 | linear
    batchnorm: bool
    in_shape: tuple  # (h, w, c)
    out_shape: tuple
    note: str = ""
    kernel: np.ndarray = None
    bias: np.ndarray = None

    def zero_init(self):
        self.kernel = np.zeros(self.kshape, dtype=np.float32)
        cout = self.kshape[2] if self.op == "depthwise" else self.kshape[3]
        self.bias = np.zeros(cout, dtype=np.float32)

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.op == "conv":
            y = T.conv2d(x, T.ConvParams(self.kernel, self.bias, self.stride))
        elif self.op == "depthwise":
            y = T.depthwise_conv2d(x, self.kernel, self.bias, self.stride)
        elif self.op == "transposed":
            y = T.transposed_conv2d(x, T.ConvParams(self.kernel, self.bias, self.stride))
        else:
            raise ConfigurationError(f"unknown layer op {self.op!r}")
        if self.activation == "relu6":
            y = T.relu6(y)
        return y

    def param_count(self) -> int:
        # Pre-folding convention: kernel weights, plus gamma/beta when the
        # layer carries batch norm, plus a free bias when it does not.
        # Running mean/variance are statistics, not parameters.
        cout = self.kshape[2] if self.op == "depthwise" else self.kshape[3]
        n = int(np.prod(self.kshape))
        n += 2 * cout if self.batchnorm else cout
        return n

    def flop_count(self) -> int:
        # One multiply-accumulate = 2 FLOPs; batch norm and activations
        # excluded. Transposed conv scatters from input positions, so its
        # spatial factor is the input grid.
        if self.op == "depthwise":
            kh, kw, c = self.kshape
            h, w, _ = self.out_shape
            return 2 * h * w * kh * kw * c
        kh, kw, cin, cout = self.kshape
        if self.op == "transposed":
            h, w, _ = self.in_shape
        else:
            h, w, _ = self.out_shape
        return 2 * h * w * kh * kw * cin * cout


@dataclass
class Block:
    """Execution unit: a run of layers, optionally with a residual add."""

    layers: list[Layer]
    residual: bool = False


@dataclass
class Network:
    config: NetworkConfig
    blocks: list[Block]
    output_grid: tuple

    @property
    def layers(self) -> list[Layer]:
        return [l for b in self.blocks for l in b.layers]


def _encoder_blocks(config: NetworkConfig) -> tuple[list[Block], int, int]:
    blocks = []
    size = config.input_size
    channels = 3
    unit = 0
    for spec in config.encoder:
        if spec.kind == "initial_conv":
            out = spec.out_channels
            osize = -(-size // spec.stride)
            blocks.append(Block([Layer(
                "enc.stem", "conv", (3, 3, channels, out), spec.stride,
                "relu6", True, (size, size, channels), (osize, osize, out))]))
            size, channels = osize, out
            continue
        if spec.kind != "inverted_residual":
            raise ConfigurationError(f"unsupported encoder block kind {spec.kind!r}")
        for r in range(spec.repeat):
            unit += 1
            stride = spec.stride if r == 0 else 1
            note = ""
            if (unit == STRIDE_REMOVED_UNIT and config.block14_stride_removed
                    and stride == 2):
                stride = 1
                note = "stride removed"
            layers = []
            prefix = f"enc.b{unit:02d}"
            mid = channels * spec.expansion
            out = spec.out_channels
            osize = -(-size // stride)
            if spec.expansion > 1:
                layers.append(Layer(
                    f"{prefix}.expand", "conv", (1, 1, channels, mid), 1,
                    "relu6", True, (size, size, channels), (size, size, mid)))
            layers.append(Layer(
                f"{prefix}.dw", "depthwise", (3, 3, mid), stride,
                "relu6", True, (size, size, mid), (osize, osize, mid), note))
            layers.append(Layer(
                f"{prefix}.project", "conv", (1, 1, mid, out), 1,
                "linear", True, (osize, osize, mid), (osize, osize, out)))
            blocks.append(Block(layers, residual=(stride == 1 and channels == out)))
            size, channels = osize, out
    return blocks, size, channels


def _decoder_blocks(config: NetworkConfig, size: int, channels: int):
    blocks = []
    idx = 0
    for spec in config.decoder:
        idx += 1
        prefix = f"dec.l{idx}"
        out = spec.out_channels
        if spec.kind == "pointwise":
            blocks.append(Block([Layer(
                f"{prefix}.pw", "conv", (1, 1, channels, out), 1,
                "relu6", True, (size, size, channels), (size, size, out))]))
        elif spec.kind == "depthwise_separable":
            blocks.append(Block([
                Layer(f"{prefix}.dw", "depthwise", (3, 3, channels), 1,
                      "linear", True, (size, size, channels), (size, size, channels)),
                Layer(f"{prefix}.pw", "conv", (1, 1, channels, out), 1,
                      "relu6", True, (size, size, channels), (size, size, out)),
            ]))
        elif spec.kind == "transposed_upsample":
            osize = size * spec.stride
            blocks.append(Block([Layer(
                f"{prefix}.up", "transposed",
                (2 * spec.stride, 2 * spec.stride, channels, out), spec.stride,
                "relu6", True, (size, size, channels), (osize, osize, out))]))
            size = osize
        elif spec.kind == "heatmap_head":
            if out != OUTPUT_CHANNELS:
                raise ConfigurationError(
                    f"heatmap head must emit {OUTPUT_CHANNELS} channels, got {out}")
            blocks.append(Block([Layer(
                "dec.head", "conv", (1, 1, channels, out), 1,
                "linear", False, (size, size, channels), (size, size, out))]))
        else:
            raise ConfigurationError(f"unsupported decoder block kind {spec.kind!r}")
        channels = out
    return blocks, size, channels


def build_network(config: NetworkConfig | None = None) -> Network:
    """Realize the block table as zero-initialized, shape-checked layers."""
    config = config or NetworkConfig()
    enc, size, channels = _encoder_blocks(config)
    dec, size, channels = _decoder_blocks(config, size, channels)
    if channels != OUTPUT_CHANNELS:
        raise ConfigurationError("decoder does not end in the heatmap head")
    net = Network(config, enc + dec, (size, size))
    for layer in net.layers:
        layer.zero_init()
    return net


def forward(net: Network, image: np.ndarray) -> np.ndarray:
    """Run the network on one normalized image; returns raw heatmaps.

    Input must be (1, S, S, 3) with S = config.input_size and values in
    [-1, 1]. Output is (1, gh, gw, 22), pre-softmax.
    """
    image = np.asarray(image, dtype=np.float32)
    s = net.config.input_size
    if image.shape != (1, s, s, 3):
        raise InputError(f"expected input shape (1, {s}, {s}, 3), got {image.shape}")
    x = image
    for block in net.blocks:
        y = x
        for layer in block.layers:
            y = layer.apply(y)
        x = x + y if block.residual else y
    return x


def count_parameters(net: Network) -> dict:
    """Exact per-layer and total parameter counts (pre-folding convention)."""
    per_layer = [(l.name, l.param_count()) for l in net.layers]
    return {"per_layer": per_layer, "total": sum(n for _, n in per_layer)}


def count_flops(net: Network, input_size: int | None = None) -> dict:
    """Per-layer and total FLOPs for one forward pass (MAC = 2 FLOPs)."""
    if input_size is not None and input_size != net.config.input_size:
        cfg = NetworkConfig(
            input_size=input_size,
            encoder=net.config.encoder,
            decoder=net.config.decoder,
            block14_stride_removed=net.config.block14_stride_removed,
        )
        net = build_network(cfg)
    per_layer = [(l.name, l.flop_count()) for l in net.layers]
    return {"per_layer": per_layer, "total": sum(n for _, n in per_layer)}


def describe(net: Network) -> list[dict]:
    """Stable, ordered architecture table (one row per layer)."""
    rows = []
    for layer in net.layers:
        rows.append({
            "name": layer.name,
            "op": layer.op,
            "kernel": list(layer.kshape),
            "stride": layer.stride,
            "activation": layer.activation,
            "batchnorm": layer.batchnorm,
            "in": list(layer.in_shape),
            "out": list(layer.out_shape),
            "params": layer.param_count(),
            "flops": layer.flop_count(),
            "note": layer.note,
        })
    return rows


def describe_json(net: Network) -> str:
    return json.dumps({
        "input_size": net.config.input_size,
        "output_grid": list(net.output_grid),
        "output_channels": OUTPUT_CHANNELS,
        "layers": describe(net),
        "total_params": count_parameters(net)["total"],
        "total_flops": count_flops(net)["total"],
    }, indent=2)


def audit_report(net: Network) -> dict:
    """Parameter/FLOP totals beside the published figures, with deltas."""
    params = count_parameters(net)["total"]
    flops = count_flops(net)["total"]
    return {
        "params": params,
        "published_params": PUBLISHED_PARAM_COUNT,
        "params_delta": params - PUBLISHED_PARAM_COUNT,
        "flops": flops,
        "published_flops": PUBLISHED_FLOP_COUNT,
        "published_flops_reconstructible": False,
        "note": ("published totals correspond to a decoder configuration that "
                 "is not fully documented; the FLOP figure is below any "
                 "per-pixel convolution count for the stated parameter budget"),
    }
