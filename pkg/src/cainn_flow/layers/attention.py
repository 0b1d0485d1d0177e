"""Convolutional block attention: a channel gate followed by a spatial gate."""

from dataclasses import dataclass

from ..core import ops
from ..core.tensor import ConvKernel, Tensor
from ..utils.errors import ShapeError


@dataclass(frozen=True)
class ChannelAttentionParams:
    """Shared two-layer MLP of the channel gate.

    ``w0`` (C/r, C) and ``w1`` (C, C/r) are stored as bias-free 1x1 kernels,
    shapes (C/r, C, 1, 1) and (C, C/r, 1, 1); one copy serves both the
    average and the max path.
    """

    w0: Tensor
    w1: Tensor
    reduction_ratio: int

    def __post_init__(self) -> None:
        hidden, channels = self.w0.shape[:2]
        if self.w1.shape[:2] != (channels, hidden) or self.w0.shape[2:] != (1, 1):
            raise ShapeError(
                f"Channel attention weights disagree: w0 {self.w0.shape}, w1 {self.w1.shape}"
            )

    @property
    def channels(self) -> int:
        return self.w0.shape[1]

    @staticmethod
    def hidden_width(channels: int, reduction_ratio: int) -> int:
        """C/r with r clamped to C and the result never below one."""
        return max(1, channels // min(reduction_ratio, channels))


@dataclass(frozen=True)
class SpatialAttentionParams:
    """7x7 convolution from the stacked [avg; max] channel maps to one gate map."""

    kernel: ConvKernel

    def __post_init__(self) -> None:
        if (self.kernel.c_out, self.kernel.c_in, self.kernel.k) != (1, 2, 7):
            raise ShapeError(
                f"Spatial attention needs a 2->1 7x7 kernel, got {self.kernel.weight.shape}"
            )


@dataclass(frozen=True)
class CBAMParams:
    channel: ChannelAttentionParams
    spatial: SpatialAttentionParams


def _shared_mlp(pooled: Tensor, p: ChannelAttentionParams) -> Tensor:
    hidden = ops.map_unary(ops.conv2d(pooled, ConvKernel(p.w0)), "relu")
    return ops.conv2d(hidden, ConvKernel(p.w1))


def channel_attention(f: Tensor, p: ChannelAttentionParams) -> Tensor:
    """Channel gate sigma(MLP(avgpool f) + MLP(maxpool f)), shape (N, C, 1, 1)."""
    if f.shape[1] != p.channels:
        raise ShapeError(
            f"channel_attention: input has C={f.shape[1]}, weights expect C={p.channels}"
        )
    avg = _shared_mlp(ops.global_pool(f, "avg"), p)
    mx = _shared_mlp(ops.global_pool(f, "max"), p)
    return ops.map_unary(ops.elementwise(avg, mx, "add"), "sigmoid")


def spatial_attention(f: Tensor, p: SpatialAttentionParams) -> Tensor:
    """Spatial gate sigma(conv7x7([avg_c f; max_c f])), shape (N, 1, H, W)."""
    stacked = ops.concat_channels(ops.channelwise_pool(f, "avg"), ops.channelwise_pool(f, "max"))
    return ops.map_unary(ops.conv2d(stacked, p.kernel), "sigmoid")


def cbam_apply(f: Tensor, cp: ChannelAttentionParams, sp: SpatialAttentionParams) -> Tensor:
    """F' = Mc(F) * F, then F'' = Ms(F') * F'."""
    refined = ops.elementwise(f, channel_attention(f, cp), "mul")
    return ops.elementwise(refined, spatial_attention(refined, sp), "mul")
