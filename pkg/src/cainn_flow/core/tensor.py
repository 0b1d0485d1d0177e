import itertools
from dataclasses import dataclass
from enum import Enum
from typing import ClassVar, FrozenSet, Optional, Tuple

import numpy as np

from ..models.settings_model import RuntimeSettings
from ..utils.errors import ContractError, ShapeError

Shape4 = Tuple[int, int, int, int]

_uid_counter = itertools.count()


class Precision(str, Enum):
    """Element precision of a tensor. One precision per tensor, never mixed."""

    F32 = "f32"
    F64 = "f64"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.float32) if self is Precision.F32 else np.dtype(np.float64)

    @property
    def flag(self) -> int:
        """On-disk dtype flag: 0 for f32, 1 for f64."""
        return 0 if self is Precision.F32 else 1

    @classmethod
    def from_flag(cls, flag: int) -> "Precision":
        if flag == 0:
            return cls.F32
        if flag == 1:
            return cls.F64
        raise ContractError(f"Unknown dtype flag: {flag}")

    @classmethod
    def from_dtype(cls, dtype) -> "Precision":
        dtype = np.dtype(dtype)
        if dtype == np.float32:
            return cls.F32
        if dtype == np.float64:
            return cls.F64
        raise ContractError(f"Unsupported element type: {dtype}")

    @classmethod
    def default(cls) -> "Precision":
        """Run-wide precision from ``CAINN_PRECISION`` (f32 unless set)."""
        return cls(RuntimeSettings().precision)


class Tensor:
    """Immutable dense (N, C, H, W) array with an optional gradient slot.

    The backing array is read-only. ``requires_grad`` marks leaves whose
    gradient an OpGraph should report; ``uid`` identifies the tensor as a
    node in gradient maps.
    """

    __slots__ = ("_data", "requires_grad", "uid")

    def __init__(
        self,
        data,
        precision: Optional[Precision] = None,
        requires_grad: bool = False,
    ) -> None:
        array = np.asarray(data)
        if precision is None:
            if array.dtype in (np.float32, np.float64):
                precision = Precision.from_dtype(array.dtype)
            else:
                precision = Precision.default()
        array = np.array(array, dtype=precision.dtype, copy=True)
        if array.ndim != 4:
            raise ShapeError(f"Tensor must be 4-D (N, C, H, W), got shape {array.shape}")
        self._init(array, requires_grad)

    def _init(self, array: np.ndarray, requires_grad: bool) -> None:
        array = np.ascontiguousarray(array)
        array.setflags(write=False)
        self._data = array
        self.requires_grad = requires_grad
        self.uid = next(_uid_counter)

    @classmethod
    def wrap(cls, array: np.ndarray, requires_grad: bool = False) -> "Tensor":
        """Adopt an operation result without copying. The caller must not keep writing to it."""
        if array.ndim != 4:
            raise ShapeError(f"Tensor must be 4-D (N, C, H, W), got shape {array.shape}")
        Precision.from_dtype(array.dtype)
        tensor = cls.__new__(cls)
        tensor._init(array, requires_grad)
        return tensor

    @classmethod
    def zeros(cls, shape: Shape4, precision: Optional[Precision] = None) -> "Tensor":
        precision = precision or Precision.default()
        return cls.wrap(np.zeros(shape, dtype=precision.dtype))

    @classmethod
    def full(cls, shape: Shape4, value: float, precision: Optional[Precision] = None) -> "Tensor":
        precision = precision or Precision.default()
        return cls.wrap(np.full(shape, value, dtype=precision.dtype))

    @property
    def data(self) -> np.ndarray:
        """Read-only view of the values in N→C→H→W order."""
        return self._data

    @property
    def shape(self) -> Shape4:
        return tuple(self._data.shape)  # type: ignore[return-value]

    @property
    def precision(self) -> Precision:
        return Precision.from_dtype(self._data.dtype)

    @property
    def size(self) -> int:
        return int(self._data.size)

    def numpy(self) -> np.ndarray:
        """Writable copy of the values."""
        return np.array(self._data, copy=True)

    def detach(self) -> "Tensor":
        return Tensor.wrap(self._data)

    def as_parameter(self) -> "Tensor":
        """Same values as a gradient-tracked leaf."""
        return Tensor.wrap(self._data, requires_grad=True)

    def astype(self, precision: Precision) -> "Tensor":
        return Tensor(self._data, precision=precision, requires_grad=self.requires_grad)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self._data)))

    def __repr__(self) -> str:
        return (
            f"Tensor(shape={self.shape}, precision={self.precision.value}, "
            f"requires_grad={self.requires_grad})"
        )


@dataclass(frozen=True)
class ConvKernel:
    """Convolution weights (C_out, C_in, k, k) with optional bias (1, C_out, 1, 1)."""

    VALID_SIZES: ClassVar[FrozenSet[int]] = frozenset({1, 3, 7})

    weight: Tensor
    bias: Optional[Tensor] = None

    def __post_init__(self) -> None:
        c_out, _, k_h, k_w = self.weight.shape
        if k_h != k_w or k_h not in self.VALID_SIZES:
            raise ShapeError(
                f"Kernel must be square with k in {sorted(self.VALID_SIZES)}, "
                f"got {k_h}x{k_w}"
            )
        if self.bias is not None:
            if self.bias.shape != (1, c_out, 1, 1):
                raise ShapeError(
                    f"Bias shape {self.bias.shape} does not match C_out={c_out}"
                )
            if self.bias.precision is not self.weight.precision:
                raise ContractError("Kernel weight and bias precision differ")

    @property
    def c_out(self) -> int:
        return self.weight.shape[0]

    @property
    def c_in(self) -> int:
        return self.weight.shape[1]

    @property
    def k(self) -> int:
        return self.weight.shape[2]
