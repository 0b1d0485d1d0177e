"""Coupling subnets: the CA, AC, CAC and CC layer sequences that produce s and t."""

import math
from dataclasses import dataclass, replace
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from ..core import ops
from ..core.tensor import ConvKernel, Precision, Tensor
from ..models.subnet_config import SubnetConfig, SubnetVariant
from ..utils.errors import ContractError, ShapeError
from .attention import (
    CBAMParams,
    ChannelAttentionParams,
    SpatialAttentionParams,
    cbam_apply,
)


@dataclass(frozen=True)
class SubnetParams:
    """Learnable tensors of one subnet.

    ``conv_out`` is always the final convolution. ``conv_hidden`` exists for
    CAC and CC, ``attention`` for CA, AC and CAC.
    """

    conv_out: ConvKernel
    conv_hidden: Optional[ConvKernel] = None
    attention: Optional[CBAMParams] = None

    def named_parameters(self) -> Dict[str, Tensor]:
        """Parameter tensors keyed by dotted name, in a fixed order."""
        named: Dict[str, Tensor] = {}
        if self.conv_hidden is not None:
            named.update(_kernel_parameters("conv_hidden", self.conv_hidden))
        if self.attention is not None:
            named["attention.channel.w0"] = self.attention.channel.w0
            named["attention.channel.w1"] = self.attention.channel.w1
            named.update(_kernel_parameters("attention.spatial", self.attention.spatial.kernel))
        named.update(_kernel_parameters("conv_out", self.conv_out))
        return named

    def replace_parameters(self, mapping: Mapping[str, Tensor]) -> "SubnetParams":
        """Copy of these parameters with the named tensors swapped in."""
        unknown = set(mapping) - set(self.named_parameters())
        if unknown:
            raise ContractError(f"Unknown subnet parameters: {sorted(unknown)}")

        def pick(name: str, current: Optional[Tensor]) -> Optional[Tensor]:
            new = mapping.get(name, current)
            if current is not None and new is not None and new.shape != current.shape:
                raise ShapeError(f"Parameter {name}: shape {new.shape} != {current.shape}")
            return new

        conv_hidden = self.conv_hidden
        if conv_hidden is not None:
            conv_hidden = ConvKernel(
                pick("conv_hidden.weight", conv_hidden.weight),
                pick("conv_hidden.bias", conv_hidden.bias),
            )
        attention = self.attention
        if attention is not None:
            channel = replace(
                attention.channel,
                w0=pick("attention.channel.w0", attention.channel.w0),
                w1=pick("attention.channel.w1", attention.channel.w1),
            )
            spatial_kernel = ConvKernel(
                pick("attention.spatial.weight", attention.spatial.kernel.weight),
                pick("attention.spatial.bias", attention.spatial.kernel.bias),
            )
            attention = CBAMParams(channel, SpatialAttentionParams(spatial_kernel))
        conv_out = ConvKernel(
            pick("conv_out.weight", self.conv_out.weight),
            pick("conv_out.bias", self.conv_out.bias),
        )
        return SubnetParams(conv_out=conv_out, conv_hidden=conv_hidden, attention=attention)


def _kernel_parameters(prefix: str, kernel: ConvKernel) -> Dict[str, Tensor]:
    named = {f"{prefix}.weight": kernel.weight}
    if kernel.bias is not None:
        named[f"{prefix}.bias"] = kernel.bias
    return named


def subnet_forward(f: Tensor, cfg: SubnetConfig, p: SubnetParams) -> Tuple[Tensor, Tensor]:
    """
    Run the variant's layer sequence and split the result into s and t.

    Args:
        f: Input half, shape (N, in_channels, H, W)
        cfg: Subnet configuration
        p: Subnet parameters matching cfg

    Returns:
        Tuple (s, t), each (N, out_channels / 2, H, W)

    Raises:
        ShapeError: If f does not have cfg.in_channels channels
    """
    if f.shape[1] != cfg.in_channels:
        raise ShapeError(
            f"subnet_forward: input has C={f.shape[1]}, config expects {cfg.in_channels}"
        )

    variant = cfg.variant
    if variant is SubnetVariant.CA:
        h = ops.conv2d(f, p.conv_out)
        h = cbam_apply(h, p.attention.channel, p.attention.spatial)
    elif variant is SubnetVariant.AC:
        h = cbam_apply(f, p.attention.channel, p.attention.spatial)
        h = ops.conv2d(h, p.conv_out)
    elif variant is SubnetVariant.CAC:
        h = ops.conv2d(f, p.conv_hidden)
        h = cbam_apply(h, p.attention.channel, p.attention.spatial)
        h = ops.conv2d(h, p.conv_out)
    elif variant is SubnetVariant.CC:
        # relu between the two convolutions
        h = ops.map_unary(ops.conv2d(f, p.conv_hidden), "relu")
        h = ops.conv2d(h, p.conv_out)
    else:
        raise ContractError(f"Unknown subnet variant: {variant}")

    half = cfg.half_width
    return ops.slice_channels(h, 0, half), ops.slice_channels(h, half, cfg.out_channels)


def subnet_init(
    cfg: SubnetConfig,
    precision: Optional[Precision] = None,
    identity_start: bool = True,
) -> SubnetParams:
    """
    Draw subnet parameters from a seeded uniform distribution.

    Interior kernels and the attention MLP are drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in));
    biases start at zero. The final convolution is all zero unless identity_start is off.

    Args:
        cfg: Subnet configuration; cfg.seed fixes every draw
        precision: Element precision, the run-wide default if omitted
        identity_start: Zero the final convolution so the subnet outputs s = t = 0

    Returns:
        SubnetParams shaped for cfg.variant
    """
    precision = precision or Precision.default()
    rng = np.random.default_rng(cfg.seed)

    def uniform(shape) -> Tensor:
        fan_in = int(np.prod(shape[1:]))
        bound = 1.0 / math.sqrt(fan_in)
        return Tensor(rng.uniform(-bound, bound, size=shape), precision=precision)

    def zeros(shape) -> Tensor:
        return Tensor.zeros(shape, precision)

    def kernel(c_out: int, c_in: int, k: int) -> ConvKernel:
        return ConvKernel(uniform((c_out, c_in, k, k)), zeros((1, c_out, 1, 1)))

    def attention(channels: int) -> CBAMParams:
        hidden = ChannelAttentionParams.hidden_width(channels, cfg.reduction_ratio)
        channel = ChannelAttentionParams(
            w0=uniform((hidden, channels, 1, 1)),
            w1=uniform((channels, hidden, 1, 1)),
            reduction_ratio=cfg.reduction_ratio,
        )
        return CBAMParams(channel, SpatialAttentionParams(kernel(1, 2, 7)))

    variant = cfg.variant
    c_in, hidden, c_out = cfg.in_channels, cfg.hidden_channels, cfg.out_channels
    conv_hidden = None
    cbam = None
    if variant is SubnetVariant.CA:
        final_in = c_in
        cbam_width = c_out
    elif variant is SubnetVariant.AC:
        final_in = c_in
        cbam_width = c_in
    elif variant is SubnetVariant.CAC:
        conv_hidden = kernel(hidden, c_in, 3)
        final_in = hidden
        cbam_width = hidden
    elif variant is SubnetVariant.CC:
        conv_hidden = kernel(hidden, c_in, 3)
        final_in = hidden
        cbam_width = None
    else:
        raise ContractError(f"Unknown subnet variant: {variant}")

    if cbam_width is not None:
        cbam = attention(cbam_width)

    if identity_start:
        conv_out = ConvKernel(zeros((c_out, final_in, 3, 3)), zeros((1, c_out, 1, 1)))
    else:
        conv_out = kernel(c_out, final_in, 3)
    return SubnetParams(conv_out=conv_out, conv_hidden=conv_hidden, attention=cbam)
