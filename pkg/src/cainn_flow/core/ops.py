"""Neural primitives on (N, C, H, W) tensors, each with its vector-Jacobian product.

Convolutions are stride-1 cross-correlations with "same" zero padding.
Broadcasting is limited to attention shapes: (N, C, 1, 1) and (N, 1, H, W).
"""

from typing import Literal, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from ..utils.errors import ContractError, ShapeError
from .autodiff import record
from .tensor import ConvKernel, Tensor

PoolMode = Literal["avg", "max"]
UnaryOp = Literal["exp", "tanh", "relu", "sigmoid"]
BinaryOp = Literal["add", "mul"]


def _same_precision(*tensors: Tensor) -> None:
    precisions = {t.precision for t in tensors}
    if len(precisions) > 1:
        raise ContractError(
            f"Mixed precisions in one operation: {sorted(p.value for p in precisions)}"
        )


def _correlate_same(x: np.ndarray, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Padded cross-correlation. Returns the output (N, O, H, W) and the window view."""
    pad = (w.shape[2] - 1) // 2
    padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(padded, w.shape[2:], axis=(2, 3))  # (N, C, H, W, k, k)
    out = np.tensordot(windows, w, axes=([1, 4, 5], [1, 2, 3]))  # (N, H, W, O)
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2)), windows


def conv2d(x: Tensor, kernel: ConvKernel) -> Tensor:
    """Same-padded stride-1 cross-correlation plus bias."""
    if x.shape[1] != kernel.c_in:
        raise ShapeError(
            f"conv2d channel mismatch: input has C={x.shape[1]}, kernel expects C_in={kernel.c_in}"
        )
    inputs = [x, kernel.weight] + ([kernel.bias] if kernel.bias is not None else [])
    _same_precision(*inputs)

    w = kernel.weight.data
    out, windows = _correlate_same(x.data, w)
    if kernel.bias is not None:
        out += kernel.bias.data

    def vjp(grad: np.ndarray):
        flipped = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        grad_x, _ = _correlate_same(grad, flipped)
        grad_w = np.tensordot(grad, windows, axes=([0, 2, 3], [0, 2, 3]))  # (O, C, k, k)
        grads = [grad_x, grad_w]
        if kernel.bias is not None:
            grads.append(grad.sum(axis=(0, 2, 3)).reshape(1, -1, 1, 1))
        return grads

    return record("conv2d", inputs, out, vjp)


def global_pool(x: Tensor, mode: PoolMode) -> Tensor:
    """Per-channel mean or maximum over all spatial sites, shape (N, C, 1, 1)."""
    n, c, h, w = x.shape
    if h * w < 1:
        raise ShapeError(f"global_pool needs a non-empty spatial extent, got H={h}, W={w}")
    flat = x.data.reshape(n, c, h * w)

    if mode == "avg":
        out = flat.mean(axis=2).reshape(n, c, 1, 1)

        def vjp(grad: np.ndarray):
            return [np.broadcast_to(grad / (h * w), x.shape).copy()]

    elif mode == "max":
        # argmax picks the first maximal site in scan order on ties
        index = flat.argmax(axis=2)[..., None]
        out = np.take_along_axis(flat, index, axis=2).reshape(n, c, 1, 1)

        def vjp(grad: np.ndarray):
            grad_flat = np.zeros_like(flat)
            np.put_along_axis(grad_flat, index, grad.reshape(n, c, 1), axis=2)
            return [grad_flat.reshape(x.shape)]

    else:
        raise ContractError(f"Unknown pool mode: {mode}")
    return record(f"global_pool_{mode}", [x], np.ascontiguousarray(out), vjp)


def channelwise_pool(x: Tensor, mode: PoolMode) -> Tensor:
    """Per-site mean or maximum across channels, shape (N, 1, H, W)."""
    n, c, h, w = x.shape
    if c < 1:
        raise ShapeError("channelwise_pool needs at least one channel")
    data = x.data

    if mode == "avg":
        out = data.mean(axis=1, keepdims=True)

        def vjp(grad: np.ndarray):
            return [np.broadcast_to(grad / c, x.shape).copy()]

    elif mode == "max":
        index = data.argmax(axis=1)[:, None]
        out = np.take_along_axis(data, index, axis=1)

        def vjp(grad: np.ndarray):
            grad_x = np.zeros_like(data)
            np.put_along_axis(grad_x, index, grad, axis=1)
            return [grad_x]

    else:
        raise ContractError(f"Unknown pool mode: {mode}")
    return record(f"channelwise_pool_{mode}", [x], np.ascontiguousarray(out), vjp)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Stack b's channels after a's."""
    if (a.shape[0], a.shape[2], a.shape[3]) != (b.shape[0], b.shape[2], b.shape[3]):
        raise ShapeError(f"concat_channels needs equal N, H, W; got {a.shape} and {b.shape}")
    _same_precision(a, b)
    split = a.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)

    def vjp(grad: np.ndarray):
        return [grad[:, :split].copy(), grad[:, split:].copy()]

    return record("concat_channels", [a, b], out, vjp)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    """Channels [start, stop) of x."""
    c = x.shape[1]
    if not 0 <= start < stop <= c:
        raise ShapeError(f"Channel slice [{start}, {stop}) out of range for C={c}")
    out = x.data[:, start:stop].copy()

    def vjp(grad: np.ndarray):
        grad_x = np.zeros(x.shape, dtype=grad.dtype)
        grad_x[:, start:stop] = grad
        return [grad_x]

    return record("slice_channels", [x], out, vjp)


def take_channels(x: Tensor, index: Sequence[int]) -> Tensor:
    """Output channel i is input channel index[i]. index must be a permutation."""
    index = np.asarray(index, dtype=np.int64)
    c = x.shape[1]
    if index.shape != (c,) or not np.array_equal(np.sort(index), np.arange(c)):
        raise ContractError(f"Channel index {index.tolist()} is not a permutation of {c} channels")
    inverse = np.argsort(index)
    out = x.data[:, index].copy()

    def vjp(grad: np.ndarray):
        return [grad[:, inverse].copy()]

    return record("take_channels", [x], out, vjp)


def map_unary(x: Tensor, op: UnaryOp) -> Tensor:
    """Elementwise exp, tanh, relu or sigmoid."""
    data = x.data
    if op == "exp":
        out = np.exp(data)

        def vjp(grad: np.ndarray):
            return [grad * out]

    elif op == "tanh":
        out = np.tanh(data)

        def vjp(grad: np.ndarray):
            return [grad * (1.0 - out * out)]

    elif op == "relu":
        out = np.maximum(data, 0)
        active = data > 0  # subgradient 0 at exactly 0

        def vjp(grad: np.ndarray):
            return [grad * active]

    elif op == "sigmoid":
        out = expit(data)

        def vjp(grad: np.ndarray):
            return [grad * out * (1.0 - out)]

    else:
        raise ContractError(f"Unknown unary op: {op}")
    return record(op, [x], out.astype(data.dtype, copy=False), vjp)


def _broadcast_axes(a_shape, b_shape) -> Optional[Tuple[int, ...]]:
    if a_shape == b_shape:
        return ()
    n, c, h, w = a_shape
    if b_shape == (n, c, 1, 1):
        return (2, 3)
    if b_shape == (n, 1, h, w):
        return (1,)
    return None


def elementwise(a: Tensor, b: Tensor, op: BinaryOp) -> Tensor:
    """a + b or a * b. b may be a channel map (N, C, 1, 1) or a spatial map (N, 1, H, W)."""
    axes = _broadcast_axes(a.shape, b.shape)
    if axes is None:
        raise ShapeError(f"Cannot broadcast {b.shape} onto {a.shape}")
    _same_precision(a, b)
    a_data, b_data = a.data, b.data

    if op == "add":
        out = a_data + b_data

        def vjp(grad: np.ndarray):
            grad_b = grad.sum(axis=axes, keepdims=True) if axes else grad
            return [grad, grad_b]

    elif op == "mul":
        out = a_data * b_data

        def vjp(grad: np.ndarray):
            grad_b = grad * a_data
            if axes:
                grad_b = grad_b.sum(axis=axes, keepdims=True)
            return [grad * b_data, grad_b]

    else:
        raise ContractError(f"Unknown binary op: {op}")
    return record(op, [a, b], out, vjp)


def scale(x: Tensor, factor: float) -> Tensor:
    """x multiplied by a constant."""
    out = x.data * x.data.dtype.type(factor)

    def vjp(grad: np.ndarray):
        return [grad * factor]

    return record("scale", [x], out, vjp)


def add_scalar(x: Tensor, value: float) -> Tensor:
    out = x.data + x.data.dtype.type(value)

    def vjp(grad: np.ndarray):
        return [grad]

    return record("add_scalar", [x], out, vjp)


def sum_per_sample(x: Tensor) -> Tensor:
    """Sum over C, H, W, shape (N, 1, 1, 1)."""
    out = x.data.sum(axis=(1, 2, 3), keepdims=True)

    def vjp(grad: np.ndarray):
        return [np.broadcast_to(grad, x.shape).copy()]

    return record("sum_per_sample", [x], out, vjp)


def mean_over_batch(x: Tensor) -> Tensor:
    """Mean of per-sample values (N, 1, 1, 1) as a scalar (1, 1, 1, 1)."""
    if x.shape[1:] != (1, 1, 1):
        raise ShapeError(f"mean_over_batch expects (N, 1, 1, 1), got {x.shape}")
    n = x.shape[0]
    out = x.data.mean(axis=0, keepdims=True)

    def vjp(grad: np.ndarray):
        return [np.broadcast_to(grad / n, x.shape).copy()]

    return record("mean_over_batch", [x], out, vjp)
