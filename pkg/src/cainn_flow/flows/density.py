"""Standard-normal base density and the per-dimension negative log-likelihood."""

import math
from typing import TYPE_CHECKING

from ..core import ops
from ..core.tensor import Tensor

if TYPE_CHECKING:
    from .flow_model import FlowOutput

LOG_2PI = math.log(2.0 * math.pi)


def gaussian_logdensity(z: Tensor) -> Tensor:
    """Per-sample sum over C*H*W of -0.5 * (z^2 + ln 2pi), shape (N, 1, 1, 1)."""
    dims = z.shape[1] * z.shape[2] * z.shape[3]
    squared = ops.sum_per_sample(ops.elementwise(z, z, "mul"))
    return ops.add_scalar(ops.scale(squared, -0.5), -0.5 * dims * LOG_2PI)


def nll_loss(out: "FlowOutput") -> Tensor:
    """Batch mean of -(log p(z) + logdet) / (C*H*W) as a (1, 1, 1, 1) tensor."""
    z = out.z
    dims = z.shape[1] * z.shape[2] * z.shape[3]
    log_likelihood = ops.elementwise(gaussian_logdensity(z), out.logdet, "add")
    return ops.mean_over_batch(ops.scale(log_likelihood, -1.0 / dims))
