"""Torch mirror of the inference engine's encoder-decoder architecture.

Layer names, shapes, and padding semantics follow the engine's conventions
exactly (TF-style asymmetric 'same' padding, ReLU6, residual adds on
stride-1 shape-preserving units, stride removed at inverted-residual unit
14), so exported archives bind with zero missing entries and forward
outputs agree to float32 accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

NUM_KEYPOINTS = 21
OUTPUT_CHANNELS = 22

# (expansion t, channels c, repeats n, first stride s) groups, width 1.0
ENCODER_GROUPS = [
    (1, 16, 1, 1), (6, 24, 2, 2), (6, 32, 3, 2), (6, 64, 4, 2),
    (6, 96, 3, 1), (6, 160, 3, 2), (6, 320, 1, 1),
]
STRIDE_REMOVED_UNIT = 14

DECODER = [
    ("pointwise", 256), ("depthwise_separable", 256),
    ("transposed_upsample", 128), ("depthwise_separable", 128),
    ("heatmap_head", OUTPUT_CHANNELS),
]


@dataclass
class ConvSpec:
    name: str
    op: str        # conv | depthwise | transposed
    cin: int
    cout: int
    k: int
    stride: int
    act: str       # relu6 | linear
    bn: bool


def build_specs() -> list[tuple[list[ConvSpec], bool]]:
    """Blocks of conv specs plus a residual flag, mirroring the engine."""
    blocks = []
    channels = 32
    blocks.append(([ConvSpec("enc.stem", "conv", 3, 32, 3, 2, "relu6", True)], False))
    unit = 0
    for t, c, n, s in ENCODER_GROUPS:
        for r in range(n):
            unit += 1
            stride = s if r == 0 else 1
            if unit == STRIDE_REMOVED_UNIT:
                stride = 1
            prefix = f"enc.b{unit:02d}"
            mid = channels * t
            layers = []
            if t > 1:
                layers.append(ConvSpec(f"{prefix}.expand", "conv", channels, mid,
                                       1, 1, "relu6", True))
            layers.append(ConvSpec(f"{prefix}.dw", "depthwise", mid, mid, 3,
                                   stride, "relu6", True))
            layers.append(ConvSpec(f"{prefix}.project", "conv", mid, c, 1, 1,
                                   "linear", True))
            blocks.append((layers, stride == 1 and channels == c))
            channels = c
    for i, (kind, cout) in enumerate(DECODER, start=1):
        prefix = f"dec.l{i}"
        if kind == "pointwise":
            blocks.append(([ConvSpec(f"{prefix}.pw", "conv", channels, cout, 1, 1,
                                     "relu6", True)], False))
        elif kind == "depthwise_separable":
            blocks.append(([
                ConvSpec(f"{prefix}.dw", "depthwise", channels, channels, 3, 1,
                         "linear", True),
                ConvSpec(f"{prefix}.pw", "conv", channels, cout, 1, 1,
                         "relu6", True),
            ], False))
        elif kind == "transposed_upsample":
            blocks.append(([ConvSpec(f"{prefix}.up", "transposed", channels, cout,
                                     4, 2, "relu6", True)], False))
        else:
            blocks.append(([ConvSpec("dec.head", "conv", channels, cout, 1, 1,
                                     "linear", False)], False))
        channels = cout
    return blocks


def _same_pad(x: torch.Tensor, k: int, s: int) -> torch.Tensor:
    """TF-convention 'same' padding: odd totals go to the right/bottom."""
    h, w = x.shape[-2:]
    ph = max((-(-h // s) - 1) * s + k - h, 0)
    pw = max((-(-w // s) - 1) * s + k - w, 0)
    return F.pad(x, (pw // 2, pw - pw // 2, ph // 2, ph - ph // 2))


class MirrorModel(nn.Module):
    def __init__(self, input_size: int = 112):
        super().__init__()
        self.input_size = input_size
        self.output_grid = input_size // 8
        self.blocks = build_specs()
        self.convs = nn.ModuleDict()
        self.bns = nn.ModuleDict()
        for layers, _ in self.blocks:
            for spec in layers:
                key = spec.name.replace(".", "/")
                if spec.op == "transposed":
                    mod = nn.ConvTranspose2d(spec.cin, spec.cout, spec.k,
                                             stride=spec.stride, padding=1,
                                             bias=not spec.bn)
                elif spec.op == "depthwise":
                    mod = nn.Conv2d(spec.cin, spec.cout, spec.k, stride=spec.stride,
                                    padding=0, groups=spec.cin, bias=not spec.bn)
                else:
                    mod = nn.Conv2d(spec.cin, spec.cout, spec.k, stride=spec.stride,
                                    padding=0, bias=not spec.bn)
                self.convs[key] = mod
                if spec.bn:
                    self.bns[key] = nn.BatchNorm2d(spec.cout)

    def _apply_spec(self, spec: ConvSpec, x: torch.Tensor) -> torch.Tensor:
        key = spec.name.replace(".", "/")
        if spec.op != "transposed":
            x = _same_pad(x, spec.k, spec.stride)
        x = self.convs[key](x)
        if spec.bn:
            x = self.bns[key](x)
        if spec.act == "relu6":
            x = F.relu6(x)
        return x

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(n, 3, S, S) in [-1, 1] -> raw heatmaps (n, 22, S/8, S/8)."""
        for layers, residual in self.blocks:
            y = x
            for spec in layers:
                y = self._apply_spec(spec, y)
            x = x + y if residual else y
        return x

    # --- export ---

    def export_entries(self) -> list[tuple[str, np.ndarray]]:
        """(name, array) pairs in the engine's naming and axis order."""
        entries = []
        for layers, _ in self.blocks:
            for spec in layers:
                key = spec.name.replace(".", "/")
                w = self.convs[key].weight.detach().cpu().numpy()
                if spec.op == "depthwise":
                    w = np.transpose(w[:, 0], (1, 2, 0))          # (kh, kw, c)
                elif spec.op == "transposed":
                    w = np.transpose(w, (2, 3, 0, 1))             # (kh, kw, ci, co)
                else:
                    w = np.transpose(w, (2, 3, 1, 0))             # (kh, kw, ci, co)
                entries.append((f"{spec.name}.w", w.astype(np.float32)))
                if spec.bn:
                    bn = self.bns[key]
                    entries.append((f"{spec.name}.bn.gamma",
                                    bn.weight.detach().cpu().numpy()))
                    entries.append((f"{spec.name}.bn.beta",
                                    bn.bias.detach().cpu().numpy()))
                    entries.append((f"{spec.name}.bn.mean",
                                    bn.running_mean.detach().cpu().numpy()))
                    entries.append((f"{spec.name}.bn.var",
                                    bn.running_var.detach().cpu().numpy()))
                    entries.append((f"{spec.name}.bn.eps",
                                    np.array([bn.eps], np.float32)))
                else:
                    entries.append((f"{spec.name}.b",
                                    self.convs[key].bias.detach().cpu().numpy()))
        return entries

    def parameter_count(self) -> int:
        """Same convention as the engine: weights + gamma/beta + free biases."""
        total = 0
        for name, arr in self.export_entries():
            if not (name.endswith(".bn.mean") or name.endswith(".bn.var")
                    or name.endswith(".bn.eps")):
                total += arr.size
        return total
