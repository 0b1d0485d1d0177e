"""Stacked coupling flow with exact log-determinant and its inverse.

Each block permutes channels, couples, and restores the channel order, so the
permutation only decides which channels land in which coupling half. Feature
standardisation runs before the first block; its constant log-determinant is
left out of the reported logdet.
"""

from dataclasses import dataclass, field
from typing import ClassVar, Dict, Mapping, Tuple

import numpy as np

from ..core import ops
from ..core.tensor import Precision, Tensor
from ..layers.coupling import (
    CouplingBlock,
    coupling_forward,
    coupling_inverse,
    permute_channels,
    unpermute_channels,
)
from ..utils.errors import ContractError, OracleError, ShapeError

Dims = Tuple[int, int, int]


@dataclass(frozen=True, eq=False)
class FeatureNorm:
    """Per-channel mean and standard deviation of the training features."""

    MIN_STD: ClassVar[float] = 1e-6

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        std = np.asarray(self.std, dtype=np.float64).reshape(-1)
        if mean.shape != std.shape:
            raise ShapeError(f"Norm mean {mean.shape} and std {std.shape} differ")
        if np.any(std <= 0):
            raise ContractError("Feature std must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @classmethod
    def identity(cls, channels: int) -> "FeatureNorm":
        return cls(np.zeros(channels), np.ones(channels))

    @classmethod
    def from_features(cls, features: Tensor) -> "FeatureNorm":
        """Statistics over N, H and W for every channel. Constant channels get std 1e-6."""
        data = features.data.astype(np.float64)
        mean = data.mean(axis=(0, 2, 3))
        std = np.maximum(data.std(axis=(0, 2, 3)), cls.MIN_STD)
        return cls(mean, std)

    @property
    def channels(self) -> int:
        return int(self.mean.shape[0])

    def normalize(self, x: Tensor, precision: Precision) -> Tensor:
        data = (x.data.astype(np.float64) - self.mean[None, :, None, None]) / self.std[
            None, :, None, None
        ]
        return Tensor.wrap(data.astype(precision.dtype))

    def denormalize(self, z: Tensor) -> Tensor:
        data = z.data.astype(np.float64) * self.std[None, :, None, None] + self.mean[
            None, :, None, None
        ]
        return Tensor.wrap(data.astype(z.data.dtype))


@dataclass(frozen=True, eq=False)
class FlowModel:
    """K coupling blocks over (C, H, W) feature maps."""

    blocks: Tuple[CouplingBlock, ...]
    input_dims: Dims
    feature_norm: FeatureNorm = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if not self.blocks:
            raise ContractError("A flow needs at least one coupling block")
        channels = self.input_dims[0]
        for block in self.blocks:
            if block.channels != channels:
                raise ShapeError(
                    f"Block {block.index} has C={block.channels}, flow expects C={channels}"
                )
        if self.feature_norm is None:
            object.__setattr__(self, "feature_norm", FeatureNorm.identity(channels))
        elif self.feature_norm.channels != channels:
            raise ShapeError(
                f"Feature norm has {self.feature_norm.channels} channels, flow expects {channels}"
            )

    @property
    def steps(self) -> int:
        return len(self.blocks)

    @property
    def precision(self) -> Precision:
        return next(iter(self.blocks[0].named_parameters().values())).precision

    def named_parameters(self) -> Dict[str, Tensor]:
        named: Dict[str, Tensor] = {}
        for k, block in enumerate(self.blocks):
            named.update({f"blocks.{k}.{name}": t for name, t in block.named_parameters().items()})
        return named

    def with_parameters(self, mapping: Mapping[str, Tensor]) -> "FlowModel":
        """Copy of the model with the named parameter tensors replaced."""
        per_block: Dict[int, Dict[str, Tensor]] = {}
        for name, tensor in mapping.items():
            head, _, rest = name.partition(".")
            index, _, param = rest.partition(".")
            if head != "blocks" or not index.isdigit() or int(index) >= len(self.blocks):
                raise ContractError(f"Unknown flow parameter: {name}")
            per_block.setdefault(int(index), {})[param] = tensor
        blocks = tuple(
            block.replace_parameters(per_block[k]) if k in per_block else block
            for k, block in enumerate(self.blocks)
        )
        return FlowModel(blocks=blocks, input_dims=self.input_dims, feature_norm=self.feature_norm)

    def with_feature_norm(self, feature_norm: FeatureNorm) -> "FlowModel":
        return FlowModel(blocks=self.blocks, input_dims=self.input_dims, feature_norm=feature_norm)


@dataclass(frozen=True)
class FlowOutput:
    """Latent z (N, C, H, W) and per-sample logdet (N, 1, 1, 1)."""

    z: Tensor
    logdet: Tensor

    @property
    def logdet_values(self) -> np.ndarray:
        return self.logdet.data.reshape(-1).copy()


def _check_dims(x: Tensor, model: FlowModel) -> None:
    if tuple(x.shape[1:]) != tuple(model.input_dims):
        raise ShapeError(
            f"Flow expects (C, H, W) = {tuple(model.input_dims)}, got {tuple(x.shape[1:])}"
        )


def flow_core_forward(h: Tensor, model: FlowModel) -> FlowOutput:
    """Run the coupling stack on already-normalised features."""
    logdet = Tensor.zeros((h.shape[0], 1, 1, 1), h.precision)
    for block in model.blocks:
        v, block_logdet = coupling_forward(permute_channels(h, block.perm), block)
        h = unpermute_channels(v, block.perm)
        logdet = ops.elementwise(logdet, block_logdet, "add")
    return FlowOutput(z=h, logdet=logdet)


def flow_forward(x: Tensor, model: FlowModel) -> FlowOutput:
    """
    Map features to the latent space.

    Args:
        x: Feature maps (N, C, H, W) matching model.input_dims
        model: The flow

    Returns:
        FlowOutput with z and the summed block log-determinants

    Raises:
        ShapeError: If x does not match the model's dims
    """
    _check_dims(x, model)
    return flow_core_forward(model.feature_norm.normalize(x, model.precision), model)


def flow_inverse(z: Tensor, model: FlowModel) -> Tensor:
    """Invert the blocks in reverse order, then undo the feature standardisation."""
    _check_dims(z, model)
    h = z if z.precision is model.precision else z.astype(model.precision)
    for block in reversed(model.blocks):
        u = coupling_inverse(permute_channels(h, block.perm), block)
        h = unpermute_channels(u, block.perm)
    return model.feature_norm.denormalize(h)


def numerical_logdet_oracle(x: Tensor, model: FlowModel, eps: float = 1e-5) -> float:
    """
    ln|det J| of the coupling stack from central differences.

    The Jacobian is taken in normalised coordinates, the map whose
    log-determinant flow_forward reports.

    Args:
        x: A single sample (1, C, H, W)
        model: The flow
        eps: Central-difference step

    Returns:
        ln|det J| from an LU factorisation with partial pivoting

    Raises:
        ContractError: If x holds more than one sample or C*H*W exceeds 64
        OracleError: If the Jacobian is singular to machine precision
    """
    _check_dims(x, model)
    if x.shape[0] != 1:
        raise ContractError(f"Oracle takes a single sample, got N={x.shape[0]}")
    dims = x.size
    if dims > 64:
        raise ContractError(f"Dense Jacobian limited to 64 dimensions, got {dims}")

    base = model.feature_norm.normalize(x, model.precision).numpy()
    flat = base.reshape(-1)
    jacobian = np.empty((dims, dims), dtype=np.float64)
    for j in range(dims):
        original = flat[j]
        flat[j] = original + eps
        plus = flow_core_forward(Tensor(base), model).z.data.reshape(-1).astype(np.float64)
        flat[j] = original - eps
        minus = flow_core_forward(Tensor(base), model).z.data.reshape(-1).astype(np.float64)
        flat[j] = original
        jacobian[:, j] = (plus - minus) / (2.0 * eps)

    sign, logabsdet = np.linalg.slogdet(jacobian)
    if sign == 0 or not np.isfinite(logabsdet):
        raise OracleError("Finite-difference Jacobian is singular")
    return float(logabsdet)
