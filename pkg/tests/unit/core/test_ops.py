import numpy as np
import pytest

from src.cainn_flow.core import ops
from src.cainn_flow.core.tensor import ConvKernel, Precision, Tensor
from src.cainn_flow.utils.errors import ContractError, ShapeError

F64 = Precision.F64


def _tensor(values):
    return Tensor(np.asarray(values, dtype=np.float64))


def _identity_kernel(channels, k=3):
    weight = np.zeros((channels, channels, k, k))
    for c in range(channels):
        weight[c, c, k // 2, k // 2] = 1.0
    return ConvKernel(_tensor(weight), Tensor.zeros((1, channels, 1, 1), F64))


class TestConv2d:
    """Tests for the same-padded convolution."""

    def test_identity_kernel(self):
        """Test that a one-hot centre kernel returns the input."""
        x = _tensor([[[[1.0, 2.0], [3.0, 4.0]]]])
        out = ops.conv2d(x, _identity_kernel(1))
        np.testing.assert_array_equal(out.data, x.data)

    def test_all_ones_kernel_on_two_by_two(self):
        """Test that every padded 3x3 window covers the whole 2x2 input."""
        x = _tensor([[[[1.0, 2.0], [3.0, 4.0]]]])
        kernel = ConvKernel(_tensor(np.ones((1, 1, 3, 3))))
        out = ops.conv2d(x, kernel)
        np.testing.assert_allclose(out.data, np.full((1, 1, 2, 2), 10.0))

    def test_zero_kernel_returns_bias(self, rng):
        """Test that a zero kernel yields the bias at every site."""
        x = Tensor(rng.standard_normal((2, 3, 4, 5)), precision=F64)
        kernel = ConvKernel(Tensor.zeros((2, 3, 3, 3), F64), _tensor([[[[1.5]], [[-2.0]]]]))
        out = ops.conv2d(x, kernel)
        assert out.shape == (2, 2, 4, 5)
        assert np.all(out.data[:, 0] == 1.5)
        assert np.all(out.data[:, 1] == -2.0)

    @pytest.mark.parametrize("k", [1, 3, 7])
    def test_identity_kernel_random_input(self, rng, k):
        """Test the identity property for every kernel size."""
        x = Tensor(rng.standard_normal((2, 3, 5, 4)), precision=F64)
        out = ops.conv2d(x, _identity_kernel(3, k))
        np.testing.assert_array_equal(out.data, x.data)

    def test_linearity(self, rng):
        """Test conv(a*x + b*y) = a*conv(x) + b*conv(y) for a bias-free kernel."""
        kernel = ConvKernel(Tensor(rng.standard_normal((2, 3, 3, 3)), precision=F64))
        x = rng.standard_normal((1, 3, 4, 4))
        y = rng.standard_normal((1, 3, 4, 4))
        combined = ops.conv2d(_tensor(2.0 * x - 0.5 * y), kernel).data
        separate = (
            2.0 * ops.conv2d(_tensor(x), kernel).data - 0.5 * ops.conv2d(_tensor(y), kernel).data
        )
        np.testing.assert_allclose(combined, separate, atol=1e-12)

    def test_channel_mismatch(self):
        """Test that the kernel's input width must match the tensor."""
        with pytest.raises(ShapeError):
            ops.conv2d(Tensor.zeros((1, 2, 3, 3), F64), _identity_kernel(3))

    def test_mixed_precision(self):
        """Test that f32 input with an f64 kernel is rejected."""
        with pytest.raises(ContractError):
            ops.conv2d(Tensor.zeros((1, 1, 3, 3), Precision.F32), _identity_kernel(1))


class TestPooling:
    """Tests for global and channel-wise pooling."""

    def test_global_pool(self):
        """Test average and maximum over the spatial sites."""
        x = _tensor([[[[1.0, 2.0], [3.0, 4.0]]]])
        assert ops.global_pool(x, "avg").data.reshape(-1).tolist() == [2.5]
        assert ops.global_pool(x, "max").data.reshape(-1).tolist() == [4.0]

    def test_global_pool_shape(self, rng):
        """Test that global pooling yields one value per channel."""
        x = Tensor(rng.standard_normal((3, 5, 4, 2)), precision=F64)
        assert ops.global_pool(x, "avg").shape == (3, 5, 1, 1)

    def test_global_pool_constant(self):
        """Test that both pools return the constant of a constant map."""
        x = Tensor.full((1, 2, 3, 3), 0.7, F64)
        np.testing.assert_allclose(ops.global_pool(x, "avg").data, 0.7)
        np.testing.assert_allclose(ops.global_pool(x, "max").data, 0.7)

    def test_max_at_least_average(self, rng):
        """Test that the max pool never falls below the average pool."""
        x = Tensor(rng.standard_normal((4, 3, 5, 5)), precision=F64)
        assert np.all(ops.global_pool(x, "max").data >= ops.global_pool(x, "avg").data)

    def test_global_pool_empty_extent(self):
        """Test that an empty spatial extent is rejected."""
        with pytest.raises(ShapeError):
            ops.global_pool(Tensor.zeros((1, 1, 0, 0), F64), "avg")

    def test_unknown_pool_mode(self):
        """Test that an unknown mode is rejected."""
        with pytest.raises(ContractError):
            ops.global_pool(Tensor.zeros((1, 1, 2, 2), F64), "median")

    def test_channelwise_pool(self):
        """Test per-site average and maximum across channels."""
        x = _tensor([[[[1.0]], [[3.0]]]])
        assert ops.channelwise_pool(x, "avg").data.reshape(-1).tolist() == [2.0]
        assert ops.channelwise_pool(x, "max").data.reshape(-1).tolist() == [3.0]

    def test_channelwise_pool_single_channel(self, rng):
        """Test that pooling one channel returns it unchanged."""
        x = Tensor(rng.standard_normal((2, 1, 3, 3)), precision=F64)
        np.testing.assert_array_equal(ops.channelwise_pool(x, "avg").data, x.data)
        np.testing.assert_array_equal(ops.channelwise_pool(x, "max").data, x.data)


class TestChannelOps:
    """Tests for concatenation, slicing and channel reordering."""

    def test_concat_then_slice(self, rng):
        """Test that slicing a concatenation recovers both parts."""
        a = Tensor(rng.standard_normal((2, 3, 4, 4)), precision=F64)
        b = Tensor(rng.standard_normal((2, 2, 4, 4)), precision=F64)
        joined = ops.concat_channels(a, b)
        assert joined.shape == (2, 5, 4, 4)
        np.testing.assert_array_equal(ops.slice_channels(joined, 0, 3).data, a.data)
        np.testing.assert_array_equal(ops.slice_channels(joined, 3, 5).data, b.data)

    def test_concat_mismatch(self):
        """Test that concatenation needs equal N, H and W."""
        with pytest.raises(ShapeError):
            ops.concat_channels(Tensor.zeros((1, 1, 2, 2), F64), Tensor.zeros((1, 1, 2, 3), F64))

    def test_slice_out_of_range(self):
        """Test that a slice past the channel count is rejected."""
        with pytest.raises(ShapeError):
            ops.slice_channels(Tensor.zeros((1, 2, 1, 1), F64), 1, 3)

    def test_take_channels(self):
        """Test that output channel i is input channel index[i]."""
        x = _tensor([[[[10.0]], [[20.0]], [[30.0]]]])
        out = ops.take_channels(x, [2, 0, 1])
        assert out.data.reshape(-1).tolist() == [30.0, 10.0, 20.0]

    def test_take_channels_rejects_non_permutation(self):
        """Test that repeated indices are rejected."""
        with pytest.raises(ContractError):
            ops.take_channels(Tensor.zeros((1, 3, 1, 1), F64), [0, 0, 1])


class TestElementwise:
    """Tests for the unary and binary elementwise operations."""

    def test_unary_values(self):
        """Test sigmoid, relu, exp and tanh at known points."""
        x = _tensor([[[[0.0, -3.0, 3.0]]]])
        assert ops.map_unary(x, "sigmoid").data[0, 0, 0, 0] == 0.5
        assert ops.map_unary(x, "relu").data.reshape(-1).tolist() == [0.0, 0.0, 3.0]
        assert ops.map_unary(x, "exp").data[0, 0, 0, 0] == 1.0
        assert ops.map_unary(x, "tanh").data[0, 0, 0, 0] == 0.0

    def test_unknown_unary(self):
        """Test that an unknown unary op is rejected."""
        with pytest.raises(ContractError):
            ops.map_unary(Tensor.zeros((1, 1, 1, 1), F64), "softplus")

    def test_multiply_by_ones_and_add_zeros(self, rng):
        """Test the multiplicative and additive identities."""
        a = Tensor(rng.standard_normal((2, 3, 4, 4)), precision=F64)
        np.testing.assert_array_equal(
            ops.elementwise(a, Tensor.full(a.shape, 1.0, F64), "mul").data, a.data
        )
        np.testing.assert_array_equal(
            ops.elementwise(a, Tensor.zeros(a.shape, F64), "add").data, a.data
        )

    def test_channel_map_broadcast(self, rng):
        """Test that a (N, C, 1, 1) map of 0.5 halves every value."""
        a = Tensor(rng.standard_normal((2, 3, 4, 4)), precision=F64)
        out = ops.elementwise(a, Tensor.full((2, 3, 1, 1), 0.5, F64), "mul")
        np.testing.assert_allclose(out.data, 0.5 * a.data)

    def test_spatial_map_broadcast(self, rng):
        """Test that a (N, 1, H, W) map is added to every channel."""
        a = Tensor(rng.standard_normal((1, 3, 2, 2)), precision=F64)
        b = Tensor(rng.standard_normal((1, 1, 2, 2)), precision=F64)
        out = ops.elementwise(a, b, "add")
        np.testing.assert_allclose(out.data, a.data + b.data)

    def test_broadcast_mismatch(self):
        """Test that other shapes do not broadcast."""
        with pytest.raises(ShapeError):
            ops.elementwise(Tensor.zeros((1, 3, 2, 2), F64), Tensor.zeros((1, 2, 2, 2), F64), "add")

    def test_mixed_precision(self):
        """Test that both operands must share a precision."""
        with pytest.raises(ContractError):
            ops.elementwise(
                Tensor.zeros((1, 1, 1, 1), F64), Tensor.zeros((1, 1, 1, 1), Precision.F32), "add"
            )


class TestReductions:
    """Tests for the per-sample and batch reductions."""

    def test_sum_per_sample(self):
        """Test that sum_per_sample adds over C, H and W."""
        x = _tensor(np.arange(8.0).reshape(2, 2, 2, 1))
        assert ops.sum_per_sample(x).data.reshape(-1).tolist() == [6.0, 22.0]

    def test_mean_over_batch(self):
        """Test the batch mean of per-sample values."""
        x = _tensor([[[[1.0]]], [[[3.0]]]])
        out = ops.mean_over_batch(x)
        assert out.shape == (1, 1, 1, 1)
        assert out.data.reshape(-1).tolist() == [2.0]

    def test_mean_over_batch_needs_per_sample_values(self):
        """Test that mean_over_batch rejects non-scalar samples."""
        with pytest.raises(ShapeError):
            ops.mean_over_batch(Tensor.zeros((2, 2, 1, 1), F64))

    def test_scale_and_add_scalar(self):
        """Test multiplication and addition of constants."""
        x = _tensor([[[[2.0]]]])
        assert ops.scale(x, -1.5).data.reshape(-1).tolist() == [-3.0]
        assert ops.add_scalar(x, 0.25).data.reshape(-1).tolist() == [2.25]
