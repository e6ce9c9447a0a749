import numpy as np
import pytest

from handkp.errors import ConfigurationError
from handkp.tensor import (BatchNormParams, ConvParams, batchnorm, conv2d,
                           depthwise_conv2d, fold_batchnorm,
                           fold_batchnorm_depthwise, relu6, spatial_softmax,
                           transposed_conv2d)


def conv(kernel, bias=None, stride=1, padding="same"):
    kernel = np.asarray(kernel, dtype=np.float32)
    if bias is None:
        bias = np.zeros(kernel.shape[3], np.float32)
    return ConvParams(kernel, bias, stride, padding)


class TestConv2d:
    def test_single_multiply_add(self):
        x = np.full((1, 1, 1, 1), 2.0, np.float32)
        p = conv(np.full((1, 1, 1, 1), 3.0), bias=np.array([0.5]))
        assert conv2d(x, p)[0, 0, 0, 0] == pytest.approx(6.5)

    def test_zero_kernel_outputs_bias(self, rng):
        x = rng.normal(size=(2, 5, 5, 3)).astype(np.float32)
        p = conv(np.zeros((3, 3, 3, 4)), bias=np.array([1.0, -2.0, 0.0, 7.0]))
        out = conv2d(x, p)
        assert np.array_equal(out, np.broadcast_to(p.bias, out.shape))

    def test_ones_kernel_counts_overlap(self):
        x = np.ones((1, 3, 3, 1), np.float32)
        out = conv2d(x, conv(np.ones((3, 3, 1, 1))))
        assert out[0, 1, 1, 0] == 9.0
        for i, j in [(0, 0), (0, 2), (2, 0), (2, 2)]:
            assert out[0, i, j, 0] == 4.0

    def test_identity_pointwise_kernel(self, rng):
        x = rng.normal(size=(1, 6, 7, 3)).astype(np.float32)
        k = np.eye(3, dtype=np.float32).reshape(1, 1, 3, 3)
        assert np.array_equal(conv2d(x, conv(k)), x)

    def test_channel_mismatch_raises(self, rng):
        x = rng.normal(size=(1, 4, 4, 3)).astype(np.float32)
        with pytest.raises(ConfigurationError):
            conv2d(x, conv(np.ones((3, 3, 2, 4))))

    def test_matches_naive_loops(self, rng):
        x = rng.normal(size=(1, 5, 5, 2)).astype(np.float32)
        k = rng.normal(size=(3, 3, 2, 3)).astype(np.float32)
        b = rng.normal(size=3).astype(np.float32)
        for stride, padding in [(1, "same"), (2, "same"), (1, "valid"), (2, "valid")]:
            got = conv2d(x, ConvParams(k, b, stride, padding))
            assert np.allclose(got, naive_conv2d(x, k, b, stride, padding), atol=1e-5)

    def test_stride_output_sizes(self, rng):
        x = rng.normal(size=(1, 7, 7, 1)).astype(np.float32)
        assert conv2d(x, conv(np.ones((3, 3, 1, 1)), stride=2)).shape == (1, 4, 4, 1)
        assert conv2d(x, conv(np.ones((3, 3, 1, 1)), stride=2, padding="valid")).shape \
            == (1, 3, 3, 1)


def naive_conv2d(x, k, b, stride, padding):
    n, h, w, cin = x.shape
    kh, kw, _, cout = k.shape
    if padding == "same":
        oh, ow = -(-h // stride), -(-w // stride)
        pt = max((oh - 1) * stride + kh - h, 0) // 2
        pl = max((ow - 1) * stride + kw - w, 0) // 2
    else:
        oh, ow = (h - kh) // stride + 1, (w - kw) // stride + 1
        pt = pl = 0
    out = np.zeros((n, oh, ow, cout))
    for bi in range(n):
        for oy in range(oh):
            for ox in range(ow):
                for co in range(cout):
                    acc = b[co]
                    for i in range(kh):
                        for j in range(kw):
                            y, xx = oy * stride + i - pt, ox * stride + j - pl
                            if 0 <= y < h and 0 <= xx < w:
                                acc += (x[bi, y, xx] * k[i, j, :, co]).sum()
                    out[bi, oy, ox, co] = acc
    return out


class TestDepthwise:
    def test_per_channel_scaling(self):
        x = np.array([1.0, 2.0], np.float32).reshape(1, 1, 1, 2)
        k = np.array([3.0, 5.0], np.float32).reshape(1, 1, 2)
        out = depthwise_conv2d(x, k, np.zeros(2, np.float32))
        assert np.array_equal(out.ravel(), [3.0, 10.0])

    def test_identity_kernel(self, rng):
        x = rng.normal(size=(1, 5, 6, 4)).astype(np.float32)
        k = np.zeros((3, 3, 4), np.float32)
        k[1, 1] = 1.0
        assert np.array_equal(depthwise_conv2d(x, k, np.zeros(4, np.float32)), x)

    def test_stride_two_subsamples(self):
        x = np.arange(16, dtype=np.float32).reshape(1, 4, 4, 1)
        k = np.ones((1, 1, 1), np.float32)
        out = depthwise_conv2d(x, k, np.zeros(1, np.float32), stride=2)
        assert np.array_equal(out[0, :, :, 0], x[0, ::2, ::2, 0])

    def test_channel_independence(self, rng):
        x = rng.normal(size=(1, 6, 6, 3)).astype(np.float32)
        k = rng.normal(size=(3, 3, 3)).astype(np.float32)
        b = np.zeros(3, np.float32)
        base = depthwise_conv2d(x, k, b)
        perturbed = x.copy()
        perturbed[:, :, :, 1] += 100.0
        out = depthwise_conv2d(perturbed, k, b)
        assert np.array_equal(out[..., 0], base[..., 0])
        assert np.array_equal(out[..., 2], base[..., 2])

    def test_channel_mismatch_raises(self):
        with pytest.raises(ConfigurationError):
            depthwise_conv2d(np.zeros((1, 4, 4, 3), np.float32),
                             np.ones((3, 3, 2), np.float32), np.zeros(2, np.float32))


class TestTransposedConv2d:
    def test_single_site_scatter(self, rng):
        v = 1.7
        k = rng.normal(size=(2, 2, 1, 1)).astype(np.float32)
        x = np.full((1, 1, 1, 1), v, np.float32)
        out = transposed_conv2d(x, conv(k, stride=2))
        assert out.shape == (1, 2, 2, 1)
        assert np.allclose(out[0, :, :, 0], v * k[:, :, 0, 0])

    def test_zero_input_gives_bias(self):
        x = np.zeros((1, 3, 3, 2), np.float32)
        p = ConvParams(np.ones((4, 4, 2, 3), np.float32),
                       np.array([1.0, 2.0, 3.0], np.float32), stride=2)
        out = transposed_conv2d(x, p)
        assert out.shape == (1, 6, 6, 3)
        assert np.array_equal(out, np.broadcast_to(p.bias, out.shape))

    @pytest.mark.parametrize("stride,kh", [(1, 2), (2, 4), (1, 3), (2, 2)])
    def test_adjoint_identity(self, rng, stride, kh):
        # <conv2d(x), y> == <x, transposed_conv2d(y)> with the
        # channel-transposed kernel, brute-force inner products.
        k = rng.normal(size=(kh, kh, 2, 3)).astype(np.float32)
        x = rng.normal(size=(1, 4, 4, 2)).astype(np.float32)
        y_shape = conv2d(x, conv(k, stride=stride)).shape
        y = rng.normal(size=y_shape).astype(np.float32)
        lhs = float((conv2d(x, conv(k, stride=stride)) * y).sum())
        kt = np.transpose(k, (0, 1, 3, 2))
        xt = transposed_conv2d(y, conv(kt, stride=stride), output_size=(4, 4))
        rhs = float((x * xt).sum())
        assert lhs == pytest.approx(rhs, abs=1e-4)


class TestRelu6:
    @pytest.mark.parametrize("x,expected", [(-1.0, 0.0), (3.5, 3.5), (7.2, 6.0)])
    def test_values(self, x, expected):
        out = relu6(np.full((1, 1, 1, 1), x, np.float32))
        assert out[0, 0, 0, 0] == pytest.approx(expected)


class TestFoldBatchnorm:
    def test_identity_normalization(self, rng):
        k = rng.normal(size=(3, 3, 2, 4)).astype(np.float32)
        b = rng.normal(size=4).astype(np.float32)
        p = ConvParams(k, b)
        bn = BatchNormParams(np.ones(4), np.zeros(4), np.zeros(4), np.ones(4),
                             epsilon=1e-20)
        folded = fold_batchnorm(p, bn)
        assert np.allclose(folded.kernel, k, atol=1e-6)
        assert np.allclose(folded.bias, b, atol=1e-6)

    def test_direct_substitution(self):
        p = conv(np.ones((1, 1, 1, 1)), bias=np.zeros(1))
        bn = BatchNormParams(np.array([2.0]), np.array([1.0]), np.array([2.0]),
                             np.array([4.0]), epsilon=1e-12)
        folded = fold_batchnorm(p, bn)
        assert folded.kernel[0, 0, 0, 0] == pytest.approx(1.0)
        assert folded.bias[0] == pytest.approx(-1.0)

    def test_folded_matches_unfolded_pipeline(self, rng):
        k = rng.normal(size=(3, 3, 3, 5)).astype(np.float32)
        b = rng.normal(size=5).astype(np.float32)
        p = ConvParams(k, b)
        bn = BatchNormParams(rng.uniform(0.5, 1.5, 5), rng.normal(size=5),
                             rng.normal(size=5), rng.uniform(0.5, 2.0, 5), 1e-3)
        x = rng.normal(size=(2, 3, 3, 3)).astype(np.float32)
        assert np.allclose(conv2d(x, fold_batchnorm(p, bn)),
                           batchnorm(conv2d(x, p), bn), atol=1e-6)

    def test_depthwise_fold_matches(self, rng):
        k = rng.normal(size=(3, 3, 4)).astype(np.float32)
        b = np.zeros(4, np.float32)
        bn = BatchNormParams(rng.uniform(0.5, 1.5, 4), rng.normal(size=4),
                             rng.normal(size=4), rng.uniform(0.5, 2.0, 4), 1e-3)
        x = rng.normal(size=(1, 5, 5, 4)).astype(np.float32)
        fk, fb = fold_batchnorm_depthwise(k, b, bn)
        assert np.allclose(depthwise_conv2d(x, fk, fb),
                           batchnorm(depthwise_conv2d(x, k, b), bn), atol=1e-6)

    def test_channel_mismatch_raises(self):
        p = conv(np.ones((1, 1, 1, 2)))
        bn = BatchNormParams(np.ones(3), np.zeros(3), np.zeros(3), np.ones(3))
        with pytest.raises(ConfigurationError):
            fold_batchnorm(p, bn)


class TestSpatialSoftmax:
    def test_uniform(self):
        out = spatial_softmax(np.zeros((2, 2), np.float32))
        assert np.allclose(out, 0.25)

    def test_closed_form(self):
        out = spatial_softmax(np.array([[0.0, np.log(3.0)]], np.float32))
        assert np.allclose(out, [[0.25, 0.75]], atol=1e-6)

    def test_shift_invariance(self, rng):
        s = rng.normal(size=(6, 7)).astype(np.float32)
        assert np.allclose(spatial_softmax(s), spatial_softmax(s + 100.0), atol=1e-7)

    def test_sums_to_one_and_preserves_argmax(self, rng):
        for _ in range(20):
            s = rng.normal(size=(9, 9)).astype(np.float32) * 10
            p = spatial_softmax(s)
            assert p.sum() == pytest.approx(1.0, abs=1e-6)
            assert np.all(p > 0)
            assert np.argmax(p) == np.argmax(s)


def test_ops_bitwise_deterministic(rng):
    x = rng.normal(size=(1, 8, 8, 4)).astype(np.float32)
    k = rng.normal(size=(3, 3, 4, 6)).astype(np.float32)
    p = conv(k, stride=2)
    ref = conv2d(x, p)
    for _ in range(5):
        assert np.array_equal(conv2d(x, p), ref)
