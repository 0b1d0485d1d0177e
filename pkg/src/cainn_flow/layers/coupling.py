"""Two-sided affine coupling with an analytic log-determinant.

Forward:
    v1 = u1 * exp(s2(u2)) + t2(u2)
    v2 = u2 * exp(s1(v1)) + t1(v1)

Inverse:
    u2 = (v2 - t1(v1)) * exp(-s1(v1))
    u1 = (v1 - t2(u2)) * exp(-s2(u2))
"""

from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..core import ops
from ..core.tensor import Tensor
from ..models.subnet_config import SubnetConfig
from ..utils.errors import ContractError, NumericError, ShapeError
from .subnet import SubnetParams, subnet_forward


@dataclass(frozen=True)
class CouplingBlock:
    """One permutation plus one two-sided coupling.

    ``subnet_a`` reads u2 and yields (s2, t2) for u1; ``subnet_b`` reads v1 and
    yields (s1, t1) for u2. ``clamp_alpha`` of None disables soft clamping.
    """

    subnet_a: SubnetParams
    subnet_b: SubnetParams
    config_a: SubnetConfig
    config_b: SubnetConfig
    perm: Tuple[int, ...]
    clamp_alpha: Optional[float] = 1.9
    index: int = 0

    def __post_init__(self) -> None:
        _check_permutation(self.perm, len(self.perm))
        if self.clamp_alpha is not None and self.clamp_alpha <= 0:
            raise ContractError(f"clamp_alpha must be positive, got {self.clamp_alpha}")

    @property
    def channels(self) -> int:
        return len(self.perm)

    def named_parameters(self) -> Dict[str, Tensor]:
        named = {f"subnet_a.{k}": v for k, v in self.subnet_a.named_parameters().items()}
        named.update({f"subnet_b.{k}": v for k, v in self.subnet_b.named_parameters().items()})
        return named

    def replace_parameters(self, mapping: Mapping[str, Tensor]) -> "CouplingBlock":
        part_a = {k[len("subnet_a."):]: v for k, v in mapping.items() if k.startswith("subnet_a.")}
        part_b = {k[len("subnet_b."):]: v for k, v in mapping.items() if k.startswith("subnet_b.")}
        if len(part_a) + len(part_b) != len(mapping):
            raise ContractError(f"Unknown block parameters in {sorted(mapping)}")
        return CouplingBlock(
            subnet_a=self.subnet_a.replace_parameters(part_a),
            subnet_b=self.subnet_b.replace_parameters(part_b),
            config_a=self.config_a,
            config_b=self.config_b,
            perm=self.perm,
            clamp_alpha=self.clamp_alpha,
            index=self.index,
        )


def half_widths(channels: int) -> Tuple[int, int]:
    """u1 takes the ceiling half."""
    first = (channels + 1) // 2
    return first, channels - first


def split_channels(x: Tensor) -> Tuple[Tensor, Tensor]:
    c = x.shape[1]
    if c < 2:
        raise ContractError(f"Coupling needs at least 2 channels, got C={c}")
    first, _ = half_widths(c)
    return ops.slice_channels(x, 0, first), ops.slice_channels(x, first, c)


def merge_channels(u1: Tensor, u2: Tensor) -> Tensor:
    return ops.concat_channels(u1, u2)


def _check_permutation(perm: Sequence[int], channels: int) -> None:
    if sorted(perm) != list(range(channels)):
        raise ContractError(f"{list(perm)} is not a permutation of {channels} channels")


def permute_channels(x: Tensor, perm: Sequence[int]) -> Tensor:
    """Output channel i is input channel perm[i]."""
    _check_permutation(perm, x.shape[1])
    return ops.take_channels(x, perm)


def unpermute_channels(x: Tensor, perm: Sequence[int]) -> Tensor:
    _check_permutation(perm, x.shape[1])
    return ops.take_channels(x, np.argsort(np.asarray(perm)).tolist())


def _clamp(s: Tensor, alpha: Optional[float]) -> Tensor:
    """s -> alpha * tanh(s / alpha)."""
    if alpha is None:
        return s
    return ops.scale(ops.map_unary(ops.scale(s, 1.0 / alpha), "tanh"), alpha)


def _scale_and_shift(
    conditioner: Tensor, cfg: SubnetConfig, params: SubnetParams, block: CouplingBlock
) -> Tuple[Tensor, Tensor]:
    s, t = subnet_forward(conditioner, cfg, params)
    # checked before the clamp, which saturates inf to +-alpha
    if not (s.is_finite() and t.is_finite()):
        raise NumericError(f"Non-finite subnet output in coupling block {block.index}")
    return _clamp(s, block.clamp_alpha), t


def _check_dims(x: Tensor, block: CouplingBlock) -> None:
    if x.shape[1] != block.channels:
        raise ShapeError(
            f"Coupling block {block.index} expects C={block.channels}, got C={x.shape[1]}"
        )


def coupling_forward(u: Tensor, block: CouplingBlock) -> Tuple[Tensor, Tensor]:
    """
    Apply the two-sided affine coupling.

    Args:
        u: Input (N, C, H, W) in the block's permuted channel order
        block: The coupling block

    Returns:
        Tuple (v, logdet) with logdet shaped (N, 1, 1, 1)

    Raises:
        NumericError: If a subnet produces non-finite s or t
    """
    _check_dims(u, block)
    u1, u2 = split_channels(u)

    s2, t2 = _scale_and_shift(u2, block.config_a, block.subnet_a, block)
    v1 = ops.elementwise(ops.elementwise(u1, ops.map_unary(s2, "exp"), "mul"), t2, "add")

    s1, t1 = _scale_and_shift(v1, block.config_b, block.subnet_b, block)
    v2 = ops.elementwise(ops.elementwise(u2, ops.map_unary(s1, "exp"), "mul"), t1, "add")

    logdet = ops.elementwise(ops.sum_per_sample(s2), ops.sum_per_sample(s1), "add")
    return merge_channels(v1, v2), logdet


def coupling_inverse(v: Tensor, block: CouplingBlock) -> Tensor:
    """Exact inverse of :func:`coupling_forward`."""
    _check_dims(v, block)
    v1, v2 = split_channels(v)

    s1, t1 = _scale_and_shift(v1, block.config_b, block.subnet_b, block)
    u2 = ops.elementwise(
        ops.elementwise(v2, ops.scale(t1, -1.0), "add"),
        ops.map_unary(ops.scale(s1, -1.0), "exp"),
        "mul",
    )

    s2, t2 = _scale_and_shift(u2, block.config_a, block.subnet_a, block)
    u1 = ops.elementwise(
        ops.elementwise(v1, ops.scale(t2, -1.0), "add"),
        ops.map_unary(ops.scale(s2, -1.0), "exp"),
        "mul",
    )
    return merge_channels(u1, u2)
