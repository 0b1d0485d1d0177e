from typing import Optional, Tuple

import numpy as np

from ..core.tensor import Precision, Tensor
from ..flows.flow_model import FeatureNorm, FlowModel
from ..layers.coupling import CouplingBlock, half_widths
from ..layers.subnet import SubnetParams, subnet_init
from ..models.subnet_config import SubnetConfig, SubnetVariant
from ..models.train_config import TrainConfig
from ..utils.errors import ContractError
from ..utils.logger import LoggerProtocol, resolve_component_logger

# Seed-stream tags so permutation and subnet draws never share a stream
_PERM_STREAM = 0
_SUBNET_A_STREAM = 1
_SUBNET_B_STREAM = 2


class FlowFactory:
    """Factory class for creating seeded, identity-start flows."""

    @staticmethod
    def derive_seed(seed: int, block_index: int, stream: int) -> int:
        """
        Derive a 64-bit seed for one block component.

        Args:
            seed: The run seed
            block_index: Position of the block in the flow
            stream: Which component of the block the seed feeds

        Returns:
            A 64-bit integer seed
        """
        state = np.random.SeedSequence([seed, block_index, stream]).generate_state(1, np.uint64)
        return int(state[0])

    @staticmethod
    def create_subnet_params(
        cfg: SubnetConfig, precision: Optional[Precision] = None, identity_start: bool = True
    ) -> SubnetParams:
        return subnet_init(cfg, precision=precision, identity_start=identity_start)

    @staticmethod
    def create_block(
        channels: int,
        index: int,
        variant: SubnetVariant = SubnetVariant.CAC,
        seed: int = 0,
        clamp_alpha: Optional[float] = 1.9,
        hidden_channels: Optional[int] = None,
        reduction_ratio: int = 16,
        precision: Optional[Precision] = None,
        identity_start: bool = True,
    ) -> CouplingBlock:
        """
        Create one coupling block with a seeded channel permutation.

        Args:
            channels: Channel count C of the flow
            index: Position of the block in the flow
            variant: Subnet layer sequence
            seed: Run seed the block's seeds derive from
            clamp_alpha: Soft clamp bound, None to disable
            hidden_channels: Interior width of CAC/CC subnets, the input width if omitted
            reduction_ratio: Channel attention reduction ratio
            precision: Element precision of the parameters
            identity_start: Zero the final subnet convolutions

        Returns:
            CouplingBlock: The configured block
        """
        if channels < 2:
            raise ContractError(f"Coupling needs at least 2 channels, got C={channels}")
        first, second = half_widths(channels)
        config_a = SubnetConfig(
            variant=variant,
            in_channels=second,
            hidden_channels=hidden_channels,
            out_channels=2 * first,
            reduction_ratio=reduction_ratio,
            seed=FlowFactory.derive_seed(seed, index, _SUBNET_A_STREAM),
        )
        config_b = SubnetConfig(
            variant=variant,
            in_channels=first,
            hidden_channels=hidden_channels,
            out_channels=2 * second,
            reduction_ratio=reduction_ratio,
            seed=FlowFactory.derive_seed(seed, index, _SUBNET_B_STREAM),
        )
        perm_rng = np.random.default_rng(FlowFactory.derive_seed(seed, index, _PERM_STREAM))
        return CouplingBlock(
            subnet_a=subnet_init(config_a, precision=precision, identity_start=identity_start),
            subnet_b=subnet_init(config_b, precision=precision, identity_start=identity_start),
            config_a=config_a,
            config_b=config_b,
            perm=tuple(int(i) for i in perm_rng.permutation(channels)),
            clamp_alpha=clamp_alpha,
            index=index,
        )

    @staticmethod
    def create_flow(
        input_dims: Tuple[int, int, int],
        steps: int = 2,
        variant: SubnetVariant = SubnetVariant.CAC,
        seed: int = 0,
        clamp_alpha: Optional[float] = 1.9,
        hidden_channels: Optional[int] = None,
        reduction_ratio: int = 16,
        precision: Optional[Precision] = None,
        feature_norm: Optional[FeatureNorm] = None,
        identity_start: bool = True,
        logger: Optional[LoggerProtocol] = None,
    ) -> FlowModel:
        """
        Create a K-step flow over (C, H, W) feature maps.

        Returns:
            FlowModel: Identity-start flow unless identity_start is off
        """
        if steps < 1:
            raise ContractError(f"A flow needs at least one step, got {steps}")
        blocks = tuple(
            FlowFactory.create_block(
                input_dims[0],
                k,
                variant=variant,
                seed=seed,
                clamp_alpha=clamp_alpha,
                hidden_channels=hidden_channels,
                reduction_ratio=reduction_ratio,
                precision=precision,
                identity_start=identity_start,
            )
            for k in range(steps)
        )
        model = FlowModel(blocks=blocks, input_dims=tuple(input_dims), feature_norm=feature_norm)
        resolve_component_logger(logger, "FlowFactory").debug(
            "Created flow",
            dims=tuple(input_dims),
            steps=steps,
            variant=SubnetVariant(variant).value,
            parameters=sum(t.size for t in model.named_parameters().values()),
        )
        return model

    @staticmethod
    def create_flow_from_config(
        config: TrainConfig,
        input_dims: Tuple[int, int, int],
        feature_norm: Optional[FeatureNorm] = None,
        logger: Optional[LoggerProtocol] = None,
    ) -> FlowModel:
        """Create the identity-start flow a training run begins from."""
        return FlowFactory.create_flow(
            input_dims,
            steps=config.steps,
            variant=config.variant,
            seed=config.seed,
            clamp_alpha=config.clamp_alpha,
            hidden_channels=config.hidden_channels,
            reduction_ratio=config.reduction_ratio,
            precision=config.precision,
            feature_norm=feature_norm,
            logger=logger,
        )

    @staticmethod
    def perturb_parameters(model: FlowModel, scale: float, seed: int = 0) -> FlowModel:
        """
        Add seeded U(-scale, scale) noise to every parameter.

        Moves a flow away from the identity start so that round-trip, log-determinant
        and gradient checks exercise every subnet weight.
        """
        rng = np.random.default_rng(seed)
        noisy = {}
        for name, tensor in model.named_parameters().items():
            noise = rng.uniform(-scale, scale, size=tensor.shape)
            noisy[name] = Tensor(tensor.data + noise, precision=tensor.precision)
        return model.with_parameters(noisy)
