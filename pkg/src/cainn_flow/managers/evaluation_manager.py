from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..core.tensor import Tensor
from ..data.manifest import FeatureSet
from ..evaluation.auroc import auroc
from ..evaluation.scoring import anomaly_maps, image_score, upsample_bilinear
from ..flows.flow_model import FlowModel, flow_forward
from ..models.results import AblationEntry, AnomalyMap, EvalResult, ImageScore
from ..models.subnet_config import SubnetVariant
from ..models.train_config import TrainConfig
from ..utils.errors import ContractError
from ..utils.logger import LoggerProtocol, resolve_component_logger
from .training_manager import TrainingManager


class EvaluationManager:
    """
    Scores feature maps with a trained flow and measures localisation quality.

    Key features:
    - Per-site anomaly maps from the latent, upsampled to image resolution
    - Image-level AUROC over max-pixel image scores
    - Pixel-level AUROC pooled over every pixel of the test set
    - Variant and step-count ablation sweeps
    """

    DEFAULT_BATCH_SIZE = 64

    def __init__(
        self, logger: Optional[LoggerProtocol] = None, batch_size: int = DEFAULT_BATCH_SIZE
    ) -> None:
        """
        Initialize the evaluator.

        Args:
            logger: Optional logger instance. If not provided, a default Logger will be created
            batch_size: Samples per forward pass while scoring
        """
        self._base_logger = logger
        self.logger = resolve_component_logger(logger, "Evaluator")
        self.batch_size = batch_size

    def latents(self, model: FlowModel, features: Tensor) -> Tensor:
        """flow_forward z for every sample, computed in batches."""
        features = features.astype(model.precision)
        chunks = [
            flow_forward(Tensor.wrap(features.data[start : start + self.batch_size]), model).z.data
            for start in range(0, features.shape[0], self.batch_size)
        ]
        return Tensor.wrap(np.concatenate(chunks, axis=0))

    def score(
        self,
        model: FlowModel,
        features: Tensor,
        image_dims: Optional[Sequence[Tuple[int, int]]] = None,
    ) -> List[AnomalyMap]:
        """
        Anomaly map per sample, upsampled to ``image_dims[i]`` when given.

        Args:
            model: Trained flow
            features: Feature maps (N, C, H, W)
            image_dims: Optional per-sample (H_img, W_img)

        Returns:
            One AnomalyMap per sample
        """
        maps = anomaly_maps(self.latents(model, features))
        if image_dims is not None:
            if len(image_dims) != len(maps):
                raise ContractError(f"Got {len(image_dims)} image sizes for {len(maps)} samples")
            maps = [upsample_bilinear(m, h, w) for m, (h, w) in zip(maps, image_dims)]
        return maps

    def evaluate_maps(
        self,
        maps: Sequence[AnomalyMap],
        labels: Sequence[int],
        masks: Sequence[np.ndarray],
        paths: Optional[Sequence[str]] = None,
    ) -> EvalResult:
        """
        Image and pixel AUROC of precomputed image-resolution maps.

        Raises:
            ContractError: If either class is missing, or a map and its mask differ in shape
        """
        labels = np.asarray(labels, dtype=np.int64)
        self.check_classes(labels)
        paths = list(paths) if paths is not None else [str(i) for i in range(len(maps))]

        scores = np.array([image_score(m) for m in maps])
        pixel_scores = []
        pixel_truth = []
        for amap, mask, path in zip(maps, masks, paths):
            if amap.pixels.shape != mask.shape:
                raise ContractError(
                    f"{path}: map {amap.pixels.shape} does not match mask {mask.shape}"
                )
            pixel_scores.append(amap.pixels.reshape(-1))
            pixel_truth.append(np.asarray(mask).reshape(-1).astype(bool))
        pixel_scores = np.concatenate(pixel_scores)
        pixel_truth = np.concatenate(pixel_truth)
        if not pixel_truth.any():
            raise ContractError("Masks of the anomalous images mark no pixels")

        result = EvalResult(
            image_auroc=auroc(scores[labels == 1], scores[labels == 0]),
            pixel_auroc=auroc(pixel_scores[pixel_truth], pixel_scores[~pixel_truth]),
            per_image=[
                ImageScore(path=path, label=int(label), score=float(value))
                for path, label, value in zip(paths, labels, scores)
            ],
            n_positive_images=int(np.sum(labels == 1)),
            n_negative_images=int(np.sum(labels == 0)),
            n_positive_pixels=int(pixel_truth.sum()),
            n_negative_pixels=int((~pixel_truth).sum()),
        )
        self.logger.info(
            "Evaluation complete",
            image_auroc=f"{result.image_auroc:.4f}",
            pixel_auroc=f"{result.pixel_auroc:.4f}",
            images=result.n_images,
            pixels=result.n_pixels,
        )
        return result

    def evaluate(self, model: FlowModel, test_set: FeatureSet) -> EvalResult:
        """Score a labelled test set and report both AUROCs."""
        self.check_classes(test_set.labels)
        maps = self.score(model, test_set.features, test_set.image_dims)
        return self.evaluate_maps(maps, test_set.labels, test_set.masks, test_set.paths)

    def run_ablation(
        self,
        train_set: Tensor,
        test_set: FeatureSet,
        base_config: TrainConfig,
        variants: Sequence[SubnetVariant] = tuple(SubnetVariant),
        steps: Sequence[int] = (1, 2, 3, 4, 5),
    ) -> List[AblationEntry]:
        """
        Train and evaluate one model per (variant, step count).

        Args:
            train_set: Normal training features
            test_set: Labelled test set
            base_config: Hyperparameters shared by every run
            variants: Subnet variants to compare
            steps: Step counts to compare

        Returns:
            One AblationEntry per pair, variants outermost
        """
        self.check_classes(test_set.labels)
        entries = []
        for variant in variants:
            for k in steps:
                config = base_config.model_copy(
                    update={"variant": SubnetVariant(variant), "steps": k}
                )
                model, history = TrainingManager(config, logger=self._base_logger).train(train_set)
                result = self.evaluate(model, test_set)
                entries.append(
                    AblationEntry(
                        variant=config.variant.value,
                        steps=k,
                        image_auroc=result.image_auroc,
                        pixel_auroc=result.pixel_auroc,
                        final_loss=history[-1] if history else None,
                    )
                )
                self.logger.info(
                    "Ablation run complete",
                    variant=config.variant.value,
                    steps=k,
                    pixel_auroc=f"{result.pixel_auroc:.4f}",
                )
        return entries

    @staticmethod
    def check_classes(labels: np.ndarray) -> None:
        """AUROC needs at least one image of each class. Raises ContractError otherwise."""
        labels = np.asarray(labels)
        if not np.any(labels == 1):
            raise ContractError("Test set has no anomalous images")
        if not np.any(labels == 0):
            raise ContractError("Test set has no normal images")


def evaluate(
    model: FlowModel, test_set: FeatureSet, logger: Optional[LoggerProtocol] = None
) -> EvalResult:
    return EvaluationManager(logger=logger).evaluate(model, test_set)


def run_ablation(
    train_set: Tensor,
    test_set: FeatureSet,
    base_config: TrainConfig,
    variants: Sequence[SubnetVariant] = tuple(SubnetVariant),
    steps: Sequence[int] = (1, 2, 3, 4, 5),
    logger: Optional[LoggerProtocol] = None,
) -> List[AblationEntry]:
    return EvaluationManager(logger=logger).run_ablation(
        train_set, test_set, base_config, variants, steps
    )
