"""Frozen random convolutional feature extractor for the synthetic benchmark."""

import math

import numpy as np

from ..core import ops
from ..core.tensor import ConvKernel, Tensor
from ..utils.errors import ContractError

OUT_CHANNELS = 16
_HIDDEN_CHANNELS = 8


def _seeded_kernel(rng: np.random.Generator, c_out: int, c_in: int, precision) -> ConvKernel:
    bound = 1.0 / math.sqrt(c_in * 9)
    weight = Tensor(rng.uniform(-bound, bound, size=(c_out, c_in, 3, 3)), precision=precision)
    bias = Tensor(rng.uniform(-bound, bound, size=(1, c_out, 1, 1)), precision=precision)
    return ConvKernel(weight, bias)


def _stride2(x: Tensor, offset: int) -> Tensor:
    """Every second site from ``offset``. A same-padded conv sampled this way is a stride-2 conv."""
    return Tensor.wrap(np.ascontiguousarray(x.data[:, :, offset::2, offset::2]))


def toy_extractor(image: Tensor, seed: int = 0) -> Tensor:
    """
    Frozen conv3x3 -> relu -> stride 2 -> conv3x3 -> stride 2, ending in 16 channels.

    The output stays linear, so no channel collapses onto zero. Feature (i, j) sees the
    7x7 pixel patch centred on (4i + 2, 4j + 2), close to where align-corners upsampling
    of the 8x8 map places it on a 32x32 image.

    Args:
        image: Images (N, C_img, H, W), usually one or three channels
        seed: Fixes every kernel; the extractor is never trained

    Returns:
        Features (N, 16, H/4, W/4) at the image's precision

    Raises:
        ContractError: If H or W is not divisible by 4
    """
    _, channels, height, width = image.shape
    if height % 4 or width % 4:
        raise ContractError(f"Extractor needs H and W divisible by 4, got {height}x{width}")
    rng = np.random.default_rng(seed)
    first = _seeded_kernel(rng, _HIDDEN_CHANNELS, channels, image.precision)
    second = _seeded_kernel(rng, OUT_CHANNELS, _HIDDEN_CHANNELS, image.precision)

    h = _stride2(ops.map_unary(ops.conv2d(image, first), "relu"), 0)
    return _stride2(ops.conv2d(h, second), 1)
