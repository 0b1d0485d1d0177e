import numpy as np
import pytest

from src.cainn_flow.core.tensor import ConvKernel, Precision, Tensor
from src.cainn_flow.utils.errors import ContractError, ShapeError


class TestPrecision:
    """Tests for the Precision enum."""

    def test_dtypes(self):
        """Test that each precision maps to its numpy dtype."""
        assert Precision.F32.dtype == np.float32
        assert Precision.F64.dtype == np.float64

    def test_flags(self):
        """Test the on-disk dtype flags in both directions."""
        assert Precision.F32.flag == 0
        assert Precision.F64.flag == 1
        assert Precision.from_flag(0) is Precision.F32
        assert Precision.from_flag(1) is Precision.F64

    def test_unknown_flag(self):
        """Test that an unknown flag is rejected."""
        with pytest.raises(ContractError):
            Precision.from_flag(2)

    def test_from_dtype_rejects_integers(self):
        """Test that integer element types are not a precision."""
        with pytest.raises(ContractError):
            Precision.from_dtype(np.int32)

    def test_default_is_f32(self, monkeypatch):
        """Test the default precision without environment overrides."""
        monkeypatch.delenv("CAINN_PRECISION", raising=False)
        assert Precision.default() is Precision.F32

    def test_default_from_environment(self, monkeypatch):
        """Test that CAINN_PRECISION selects the default precision."""
        monkeypatch.setenv("CAINN_PRECISION", "f64")
        assert Precision.default() is Precision.F64


class TestTensor:
    """Tests for the Tensor class."""

    def test_requires_four_dimensions(self):
        """Test that non 4-D data is rejected."""
        with pytest.raises(ShapeError):
            Tensor(np.zeros((2, 3)))

    def test_precision_from_float_array(self):
        """Test that float arrays keep their precision."""
        assert Tensor(np.zeros((1, 1, 1, 1), dtype=np.float64)).precision is Precision.F64
        assert Tensor(np.zeros((1, 1, 1, 1), dtype=np.float32)).precision is Precision.F32

    def test_integer_data_takes_default_precision(self, monkeypatch):
        """Test that non-float input is cast to the run-wide precision."""
        monkeypatch.delenv("CAINN_PRECISION", raising=False)
        t = Tensor([[[[1, 2], [3, 4]]]])
        assert t.precision is Precision.F32
        assert t.shape == (1, 1, 2, 2)

    def test_data_is_read_only(self):
        """Test that the backing array cannot be written."""
        t = Tensor(np.ones((1, 1, 2, 2)))
        with pytest.raises(ValueError):
            t.data[0, 0, 0, 0] = 5.0

    def test_construction_copies_input(self):
        """Test that later writes to the source array do not leak into the tensor."""
        source = np.ones((1, 1, 2, 2))
        t = Tensor(source)
        source[0, 0, 0, 0] = 9.0
        assert t.data[0, 0, 0, 0] == 1.0

    def test_numpy_returns_writable_copy(self):
        """Test that numpy() can be modified without touching the tensor."""
        t = Tensor(np.zeros((1, 1, 1, 2)))
        copy = t.numpy()
        copy[0, 0, 0, 0] = 3.0
        assert t.data[0, 0, 0, 0] == 0.0

    def test_uids_are_unique(self):
        """Test that every tensor gets its own uid."""
        a = Tensor(np.zeros((1, 1, 1, 1)))
        b = Tensor(np.zeros((1, 1, 1, 1)))
        assert a.uid != b.uid
        assert a.detach().uid != a.uid

    def test_as_parameter(self):
        """Test that as_parameter marks the tensor as a gradient leaf."""
        t = Tensor(np.zeros((1, 1, 1, 1)))
        assert not t.requires_grad
        assert t.as_parameter().requires_grad

    def test_astype(self):
        """Test precision conversion."""
        t = Tensor(np.full((1, 1, 1, 1), 0.1), precision=Precision.F64)
        converted = t.astype(Precision.F32)
        assert converted.precision is Precision.F32
        assert converted.data[0, 0, 0, 0] == np.float32(0.1)

    def test_is_finite(self):
        """Test detection of NaN and Inf values."""
        assert Tensor(np.zeros((1, 1, 1, 2))).is_finite()
        assert not Tensor(np.array([[[[0.0, np.inf]]]])).is_finite()
        assert not Tensor(np.array([[[[np.nan, 0.0]]]])).is_finite()

    def test_zeros_and_full(self):
        """Test the constructors for constant tensors."""
        assert np.all(Tensor.zeros((2, 3, 4, 5), Precision.F64).data == 0.0)
        full = Tensor.full((1, 2, 1, 1), 2.5, Precision.F32)
        assert full.precision is Precision.F32
        assert np.all(full.data == 2.5)
        assert full.size == 2


class TestConvKernel:
    """Tests for the ConvKernel container."""

    @pytest.mark.parametrize("k", [1, 3, 7])
    def test_valid_sizes(self, k):
        """Test that the supported kernel sizes are accepted."""
        kernel = ConvKernel(Tensor(np.zeros((2, 3, k, k))))
        assert (kernel.c_out, kernel.c_in, kernel.k) == (2, 3, k)

    def test_rejects_other_sizes(self):
        """Test that a 5x5 kernel is rejected."""
        with pytest.raises(ShapeError):
            ConvKernel(Tensor(np.zeros((1, 1, 5, 5))))

    def test_rejects_non_square(self):
        """Test that a non-square kernel is rejected."""
        with pytest.raises(ShapeError):
            ConvKernel(Tensor(np.zeros((1, 1, 3, 1))))

    def test_bias_shape(self):
        """Test that the bias must have one entry per output channel."""
        with pytest.raises(ShapeError):
            ConvKernel(Tensor(np.zeros((2, 1, 3, 3))), Tensor(np.zeros((1, 3, 1, 1))))

    def test_mixed_precision(self):
        """Test that weight and bias must share a precision."""
        with pytest.raises(ContractError):
            ConvKernel(
                Tensor(np.zeros((1, 1, 3, 3)), precision=Precision.F64),
                Tensor(np.zeros((1, 1, 1, 1)), precision=Precision.F32),
            )
