from typing import List, Optional, Tuple

import numpy as np

from ..core.autodiff import OpGraph, backward
from ..core.optimizer import OptimizerState, optimizer_step
from ..core.tensor import Tensor
from ..factories.flow_factory import FlowFactory
from ..flows.density import nll_loss
from ..flows.flow_model import FeatureNorm, FlowModel, flow_forward
from ..models.train_config import TrainConfig
from ..utils.errors import ContractError, NumericError, TrainingDivergedError
from ..utils.logger import LoggerProtocol, resolve_component_logger


class TrainingManager:
    """
    Maximum-likelihood trainer for the coupling flow.

    The trainer computes feature statistics in one pre-pass, builds the
    identity-start flow and runs shuffled minibatch NLL descent with Adam.

    Key features:
    - Seeded shuffling so a fixed (seed, config, dataset, precision) reproduces the loss history
    - One mean-loss history entry per epoch, logged at info level
    - Aborts on a non-finite loss or gradient, keeping the last good model on the error
    """

    config: TrainConfig
    logger: LoggerProtocol

    def __init__(self, config: TrainConfig, logger: Optional[LoggerProtocol] = None) -> None:
        """
        Initialize the trainer.

        Args:
            config: Training hyperparameters
            logger: Optional logger instance. If not provided, a default Logger will be created
        """
        self.config = config
        self.logger = resolve_component_logger(logger, "Trainer")

    def initial_model(self, train_set: Tensor) -> FlowModel:
        """Identity-start flow carrying the training set's feature statistics."""
        self._check_train_set(train_set)
        features = train_set.astype(self.config.precision)
        return FlowFactory.create_flow_from_config(
            self.config,
            tuple(features.shape[1:]),
            feature_norm=FeatureNorm.from_features(features),
            logger=self.logger,
        )

    def train(self, train_set: Tensor) -> Tuple[FlowModel, List[float]]:
        """
        Fit a flow to normal-only training features.

        Args:
            train_set: Features (N, C, H, W) of normal samples

        Returns:
            Tuple of (trained model, per-epoch mean loss)

        Raises:
            ContractError: If the training set is empty
            TrainingDivergedError: If a loss or gradient becomes non-finite
        """
        cfg = self.config
        model = self.initial_model(train_set)
        features = train_set.astype(cfg.precision)
        n = features.shape[0]
        self.logger.info(
            "Starting training",
            samples=n,
            dims=model.input_dims,
            variant=cfg.variant.value,
            steps=cfg.steps,
            epochs=cfg.epochs,
            precision=cfg.precision.value,
        )

        history: List[float] = []
        if cfg.epochs == 0:
            return model, history

        rng = np.random.default_rng(cfg.seed)
        state = OptimizerState.initial(model.named_parameters())
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(n)
            weighted_loss = 0.0
            for start in range(0, n, cfg.batch_size):
                index = order[start : start + cfg.batch_size]
                batch = Tensor.wrap(features.data[index])
                try:
                    model, state, loss = self._step(model, state, batch)
                except NumericError as e:
                    self.logger.error("Training diverged", epoch=epoch, error=str(e))
                    raise TrainingDivergedError(
                        f"Training diverged in epoch {epoch}: {e}",
                        last_good_model=model,
                        history=list(history),
                    ) from e
                weighted_loss += loss * len(index)
            history.append(weighted_loss / n)
            self.logger.info("Epoch complete", epoch=epoch, loss=f"{history[-1]:.6f}")
        return model, history

    def _step(
        self, model: FlowModel, state: OptimizerState, batch: Tensor
    ) -> Tuple[FlowModel, OptimizerState, float]:
        params = {name: t.as_parameter() for name, t in model.named_parameters().items()}
        with OpGraph() as graph:
            loss = nll_loss(flow_forward(batch, model.with_parameters(params)))
        value = float(loss.data.reshape(-1)[0])
        if not np.isfinite(value):
            raise NumericError(f"Non-finite loss {value}")
        grads = backward(graph, loss)
        updated, state = optimizer_step(
            params, {name: grads[t] for name, t in params.items()}, state, self.config.learning_rate
        )
        return model.with_parameters(updated), state, value

    def mean_loss(self, model: FlowModel, features: Tensor) -> float:
        """Sample-weighted mean NLL of a dataset under a fixed model."""
        self._check_train_set(features)
        features = features.astype(model.precision)
        total = 0.0
        for start in range(0, features.shape[0], self.config.batch_size):
            batch = Tensor.wrap(features.data[start : start + self.config.batch_size])
            loss = nll_loss(flow_forward(batch, model))
            total += float(loss.data.reshape(-1)[0]) * batch.shape[0]
        return total / features.shape[0]

    @staticmethod
    def _check_train_set(train_set: Tensor) -> None:
        if train_set.shape[0] == 0:
            raise ContractError("Training set is empty")


def train(train_set: Tensor, cfg: TrainConfig, logger: Optional[LoggerProtocol] = None):
    """Train a flow on normal features. Returns (model, loss_history)."""
    return TrainingManager(cfg, logger=logger).train(train_set)
