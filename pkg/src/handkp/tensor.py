"""Dense NHWC tensor kernels: the layer primitives of the inference engine.

All data is float32 numpy laid out (batch, height, width, channels) with
channels innermost, so depthwise kernels stream contiguous memory. Every
operation is a pure function; accumulation stays in float32 (no extended
precision) for parity with mobile targets. The kernels are expressed as a
fixed sequence of numpy calls, so repeated runs are bitwise identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InputError

SAME = "same"
VALID = "valid"


def as_nhwc(x) -> np.ndarray:
    """Validate and coerce an array to a rank-4 float32 NHWC tensor."""
    arr = np.asarray(x, dtype=np.float32)
    if arr.ndim != 4:
        raise InputError(f"expected rank-4 NHWC tensor, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise InputError(f"all dimensions must be >= 1, got shape {arr.shape}")
    return arr


@dataclass
class ConvParams:
    """Parameters of a (pointwise/regular/transposed) convolution.

    kernel is (kh, kw, c_in, c_out); bias has length c_out.
    """

    kernel: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: str = SAME

    def __post_init__(self):
        self.kernel = np.asarray(self.kernel, dtype=np.float32)
        self.bias = np.asarray(self.bias, dtype=np.float32)
        if self.kernel.ndim != 4 or min(self.kernel.shape) < 1:
            raise ConfigurationError(f"bad kernel shape {self.kernel.shape}")
        if self.bias.shape != (self.kernel.shape[3],):
            raise ConfigurationError(
                f"bias length {self.bias.shape} does not match c_out {self.kernel.shape[3]}")
        if self.stride < 1:
            raise ConfigurationError("stride must be >= 1")
        if self.padding not in (SAME, VALID):
            raise ConfigurationError(f"unknown padding {self.padding!r}")


@dataclass
class BatchNormParams:
    """Inference-time batch normalization statistics, per channel."""

    gamma: np.ndarray
    beta: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    epsilon: float = 1e-3

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=np.float32)
        self.beta = np.asarray(self.beta, dtype=np.float32)
        self.mean = np.asarray(self.mean, dtype=np.float32)
        self.variance = np.asarray(self.variance, dtype=np.float32)
        n = self.gamma.shape
        if not (self.beta.shape == self.mean.shape == self.variance.shape == n):
            raise ConfigurationError("batch-norm vectors must share one length")
        if np.any(self.variance < 0):
            raise ConfigurationError("variance must be >= 0")
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be > 0")


def _same_pad(size: int, k: int, s: int) -> tuple[int, int, int]:
    """Output size and (low, high) zero padding for 'same' convolution.

    Output is ceil(size / s); odd total padding goes to the right/bottom.
    """
    out = -(-size // s)
    total = max((out - 1) * s + k - size, 0)
    lo = total // 2
    return out, lo, total - lo


def _out_size(size: int, k: int, s: int, padding: str) -> int:
    if padding == SAME:
        return -(-size // s)
    return (size - k) // s + 1


def conv2d(x: np.ndarray, params: ConvParams) -> np.ndarray:
    """Standard 2D convolution, NHWC, zero-padded per the padding rule."""
    x = as_nhwc(x)
    kh, kw, cin, cout = params.kernel.shape
    n, h, w, c = x.shape
    if c != cin:
        raise ConfigurationError(f"input has {c} channels, kernel expects {cin}")
    s = params.stride
    if params.padding == SAME:
        oh, pt, pb = _same_pad(h, kh, s)
        ow, pl, pr = _same_pad(w, kw, s)
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    else:
        oh = (h - kh) // s + 1
        ow = (w - kw) // s + 1
        if oh < 1 or ow < 1:
            raise ConfigurationError("kernel larger than input under valid padding")
        xp = x
    out = np.empty((n, oh, ow, cout), dtype=np.float32)
    out[:] = params.bias
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, i:i + s * oh:s, j:j + s * ow:s, :]
            out += patch @ params.kernel[i, j]
    return out


def depthwise_conv2d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray,
                     stride: int = 1, padding: str = SAME) -> np.ndarray:
    """Per-channel 2D convolution; kernel is (kh, kw, c)."""
    x = as_nhwc(x)
    kernel = np.asarray(kernel, dtype=np.float32)
    bias = np.asarray(bias, dtype=np.float32)
    kh, kw, kc = kernel.shape
    n, h, w, c = x.shape
    if c != kc:
        raise ConfigurationError(f"input has {c} channels, depthwise kernel has {kc}")
    s = stride
    if padding == SAME:
        oh, pt, pb = _same_pad(h, kh, s)
        ow, pl, pr = _same_pad(w, kw, s)
        xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    else:
        oh = (h - kh) // s + 1
        ow = (w - kw) // s + 1
        xp = x
    out = np.empty((n, oh, ow, c), dtype=np.float32)
    out[:] = bias
    for i in range(kh):
        for j in range(kw):
            out += xp[:, i:i + s * oh:s, j:j + s * ow:s, :] * kernel[i, j]
    return out


def transposed_conv2d(x: np.ndarray, params: ConvParams,
                      output_size: tuple[int, int] | None = None) -> np.ndarray:
    """Transposed convolution: the scatter-accumulate adjoint of conv2d.

    With 'same' padding and no explicit output_size, the output spatial size
    is input * stride (network layers use kernel 2*stride for this). The
    values are exactly the adjoint of conv2d with the channel-transposed
    kernel, so <conv2d(x), y> == <x, transposed_conv2d(y)> holds.
    """
    x = as_nhwc(x)
    kh, kw, cin, cout = params.kernel.shape
    n, h, w, c = x.shape
    if c != cin:
        raise ConfigurationError(f"input has {c} channels, kernel expects {cin}")
    s = params.stride
    fh, fw = (h - 1) * s + kh, (w - 1) * s + kw
    if params.padding == SAME:
        oh, ow = output_size if output_size is not None else (h * s, w * s)
        th, pt, _ = _same_pad(oh, kh, s)
        tw, pl, _ = _same_pad(ow, kw, s)
        if th != h or tw != w:
            raise ConfigurationError(
                f"output size {(oh, ow)} is not consistent with input {(h, w)}, "
                f"kernel {(kh, kw)}, stride {s}")
    else:
        oh, ow = fh, fw
        pt = pl = 0
    full = np.zeros((n, fh, fw, cout), dtype=np.float32)
    for i in range(kh):
        for j in range(kw):
            full[:, i:i + s * h:s, j:j + s * w:s, :] += x @ params.kernel[i, j]
    out = full[:, pt:pt + oh, pl:pl + ow, :]
    if out.shape[1] != oh or out.shape[2] != ow:  # crop window extends past scatter grid
        grown = np.zeros((n, oh, ow, cout), dtype=np.float32)
        grown[:, :out.shape[1], :out.shape[2], :] = out
        out = grown
    return out + params.bias


def relu6(x: np.ndarray) -> np.ndarray:
    """Elementwise min(max(x, 0), 6)."""
    return np.clip(x, 0.0, 6.0).astype(np.float32, copy=False)


def fold_batchnorm(conv: ConvParams, bn: BatchNormParams) -> ConvParams:
    """Fold inference-mode batch norm into the preceding convolution.

    Returns params with w' = w * g / sqrt(var + eps) and
    b' = beta + (b - mean) * g / sqrt(var + eps), so that
    conv'(x) == bn(conv(x)) for every x.
    """
    cout = conv.kernel.shape[3]
    if bn.gamma.shape[0] != cout:
        raise ConfigurationError(
            f"batch norm has {bn.gamma.shape[0]} channels, conv produces {cout}")
    scale = (bn.gamma / np.sqrt(bn.variance + np.float32(bn.epsilon))).astype(np.float32)
    return ConvParams(
        kernel=conv.kernel * scale,
        bias=bn.beta + (conv.bias - bn.mean) * scale,
        stride=conv.stride,
        padding=conv.padding,
    )


def fold_batchnorm_depthwise(kernel: np.ndarray, bias: np.ndarray,
                             bn: BatchNormParams) -> tuple[np.ndarray, np.ndarray]:
    """fold_batchnorm for a depthwise (kh, kw, c) kernel."""
    kernel = np.asarray(kernel, dtype=np.float32)
    bias = np.asarray(bias, dtype=np.float32)
    if bn.gamma.shape[0] != kernel.shape[2]:
        raise ConfigurationError(
            f"batch norm has {bn.gamma.shape[0]} channels, depthwise has {kernel.shape[2]}")
    scale = (bn.gamma / np.sqrt(bn.variance + np.float32(bn.epsilon))).astype(np.float32)
    return kernel * scale, bn.beta + (bias - bn.mean) * scale


def batchnorm(x: np.ndarray, bn: BatchNormParams) -> np.ndarray:
    """Apply inference-mode batch norm directly (reference path for folding)."""
    scale = (bn.gamma / np.sqrt(bn.variance + np.float32(bn.epsilon))).astype(np.float32)
    return (x - bn.mean) * scale + bn.beta


def spatial_softmax(scores: np.ndarray) -> np.ndarray:
    """Softmax over an entire 2D grid, max-subtracted for overflow safety."""
    scores = np.asarray(scores, dtype=np.float32)
    if scores.ndim != 2 or scores.size == 0:
        raise InputError(f"expected a non-empty 2D grid, got shape {scores.shape}")
    e = np.exp(scores - scores.max())
    return e / e.sum()
