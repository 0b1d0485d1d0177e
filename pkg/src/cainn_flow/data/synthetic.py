"""Seeded smoothed-noise texture benchmark with injected texture and intensity anomalies."""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.ndimage import gaussian_filter

from ..core.tensor import Precision, Tensor
from ..models.dataset_model import DatasetManifest, ManifestRecord, SampleLabel, SynthConfig
from ..utils.errors import ContractError, DataIOError
from ..utils.logger import LoggerProtocol, resolve_component_logger
from .binary_io import PathLike
from .extractor import toy_extractor
from .feature_file import write_features
from .manifest import write_manifest

TRAIN_MANIFEST = "train.tsv"
TEST_MANIFEST = "test.tsv"


@dataclass(frozen=True)
class SynthDataset:
    train: DatasetManifest
    test: DatasetManifest
    train_manifest: Path
    test_manifest: Path


def smooth_texture(rng: np.random.Generator, size: int, sigma: float) -> np.ndarray:
    """White noise through a periodic Gaussian, standardised to mean 0 and std 1.

    ``sigma = 0`` leaves the noise white.
    """
    texture = rng.standard_normal((size, size))
    if sigma > 0:
        texture = gaussian_filter(texture, sigma=sigma, mode="wrap")
    return (texture - texture.mean()) / texture.std()


def inject_anomaly(
    rng: np.random.Generator, image: np.ndarray, mask: np.ndarray, cfg: SynthConfig
) -> np.ndarray:
    """
    Replace the masked pixels with a foreign texture raised by ``cfg.intensity_shift``.

    The foreign texture is smoothed with ``cfg.anomaly_texture_sigma`` and standardised
    over the masked pixels, so inside the mask the mean is exactly the shift and the
    std is 1. Pixels outside the mask are untouched.
    """
    inside = mask.astype(bool)
    values = smooth_texture(rng, image.shape[0], cfg.anomaly_texture_sigma)[inside]
    values = values - values.mean()
    spread = values.std()
    if spread > 0:
        values = values / spread
    out = image.copy()
    out[inside] = values + cfg.intensity_shift
    return out


def anomaly_mask(rng: np.random.Generator, cfg: SynthConfig) -> np.ndarray:
    """Rectangle or inscribed-ellipse blob placed fully inside the image."""
    size = cfg.image_size
    height = int(rng.integers(cfg.anomaly_min_size, cfg.anomaly_max_size + 1))
    width = int(rng.integers(cfg.anomaly_min_size, cfg.anomaly_max_size + 1))
    top = int(rng.integers(0, size - height + 1))
    left = int(rng.integers(0, size - width + 1))
    mask = np.zeros((size, size), dtype=np.uint8)
    if rng.integers(2) == 0:
        mask[top : top + height, left : left + width] = 1
    else:
        yy, xx = np.mgrid[0:height, 0:width]
        cy, cx = (height - 1) / 2.0, (width - 1) / 2.0
        inside = ((yy - cy) / (height / 2.0)) ** 2 + ((xx - cx) / (width / 2.0)) ** 2 <= 1.0
        mask[top : top + height, left : left + width] = inside
    return mask


def synth_generate(
    cfg: SynthConfig,
    out_dir: PathLike,
    precision: Optional[Precision] = None,
    logger: Optional[LoggerProtocol] = None,
) -> SynthDataset:
    """
    Write a synthetic benchmark: images, toy-extractor features, masks and two manifests.

    Layout under ``out_dir``: ``images/``, ``features/``, ``masks/``, ``train.tsv``
    and ``test.tsv``. Paths in the manifests are relative to ``out_dir``.

    Args:
        cfg: Benchmark configuration
        out_dir: Destination directory, created if missing
        precision: Precision of the stored images and features
        logger: Optional logger instance. If not provided, a default Logger will be created

    Returns:
        SynthDataset with both manifests and their paths

    Raises:
        ContractError: If the anomaly size range does not fit inside the image
        DataIOError: If the directory cannot be written
    """
    log = resolve_component_logger(logger, "SynthGenerator")
    if cfg.anomaly_max_size > cfg.image_size:
        raise ContractError(
            f"Anomaly size up to {cfg.anomaly_max_size} does not fit a {cfg.image_size}px image"
        )
    precision = precision or Precision.default()
    root = Path(out_dir)
    try:
        for sub in ("images", "features", "masks"):
            (root / sub).mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataIOError(f"Cannot create dataset directory {root}: {e}") from e

    rng = np.random.default_rng(cfg.seed)
    size = cfg.image_size

    def emit(name: str, label: SampleLabel) -> ManifestRecord:
        image = smooth_texture(rng, size, cfg.smoothing_sigma)
        mask_path = None
        if label is SampleLabel.ANOMALOUS:
            mask = anomaly_mask(rng, cfg)
            image = inject_anomaly(rng, image, mask, cfg)
            mask_path = f"masks/{name}.cafm"
            write_features(Tensor(mask[None, None], precision=precision), root / mask_path)
        image_tensor = Tensor(image[None, None], precision=precision)
        write_features(image_tensor, root / f"images/{name}.cafm")
        feature_path = f"features/{name}.cafm"
        write_features(toy_extractor(image_tensor, cfg.extractor_seed), root / feature_path)
        return ManifestRecord(
            feature_path=feature_path,
            label=label,
            mask_path=mask_path,
            image_height=size,
            image_width=size,
        )

    train = DatasetManifest(
        records=[emit(f"train_{i:04d}", SampleLabel.NORMAL) for i in range(cfg.n_train)],
        base_dir=str(root),
    )
    test_records = [
        emit(f"test_normal_{i:04d}", SampleLabel.NORMAL) for i in range(cfg.n_test_normal)
    ]
    test_records += [
        emit(f"test_anomalous_{i:04d}", SampleLabel.ANOMALOUS)
        for i in range(cfg.n_test_anomalous)
    ]
    test = DatasetManifest(records=test_records, base_dir=str(root))

    train_manifest, test_manifest = root / TRAIN_MANIFEST, root / TEST_MANIFEST
    write_manifest(train, train_manifest)
    write_manifest(test, test_manifest)
    log.info(
        "Generated synthetic dataset",
        out_dir=str(root),
        train=cfg.n_train,
        test_normal=cfg.n_test_normal,
        test_anomalous=cfg.n_test_anomalous,
        image_size=size,
    )
    return SynthDataset(
        train=train, test=test, train_manifest=train_manifest, test_manifest=test_manifest
    )
