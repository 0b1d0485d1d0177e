"""Line-oriented dataset manifests and loading them into tensors.

Each non-empty line that does not start with ``#`` reads
``path<TAB>label<TAB>maskpath|-<TAB>Himg<TAB>Wimg``.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from ..core.tensor import Precision, Tensor
from ..models.dataset_model import DatasetManifest, ManifestRecord
from ..utils.errors import ContractError, DataIOError, ShapeError
from .binary_io import PathLike
from .feature_file import read_features

_FIELDS = 5


def read_manifest(path: PathLike) -> DatasetManifest:
    """
    Parse a manifest file. Relative paths resolve against the manifest's directory.

    Raises:
        DataIOError: If the file is missing or unreadable
        ContractError: If a line is malformed or an anomalous record lacks a mask
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as e:
        raise DataIOError(f"Manifest not found: {path}") from e
    except OSError as e:
        raise DataIOError(f"Cannot read manifest {path}: {e}") from e

    records = []
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != _FIELDS:
            raise ContractError(
                f"{path}:{number}: expected {_FIELDS} tab-separated fields, got {len(fields)}"
            )
        feature_path, label, mask_path, height, width = fields
        try:
            records.append(
                ManifestRecord(
                    feature_path=feature_path,
                    label=label,
                    mask_path=mask_path,
                    image_height=int(height),
                    image_width=int(width),
                )
            )
        except (ValidationError, ValueError) as e:
            raise ContractError(f"{path}:{number}: invalid record: {e}") from e
    return DatasetManifest(records=records, base_dir=str(path.parent))


def write_manifest(manifest: DatasetManifest, path: PathLike) -> None:
    lines = [
        "\t".join(
            [
                record.feature_path,
                record.label.value,
                record.mask_path or "-",
                str(record.image_height),
                str(record.image_width),
            ]
        )
        for record in manifest.records
    ]
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise DataIOError(f"Cannot write manifest {path}: {e}") from e


@dataclass(frozen=True, eq=False)
class FeatureSet:
    """Stacked features with per-record labels (1 = anomalous) and image-size masks."""

    features: Tensor
    labels: np.ndarray
    masks: List[np.ndarray]
    paths: List[str]

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def image_dims(self):
        return [mask.shape for mask in self.masks]

    @property
    def all_normal(self) -> bool:
        return not np.any(self.labels)


def load_feature_set(
    manifest: DatasetManifest, precision: Optional[Precision] = None
) -> FeatureSet:
    """
    Read every record's features and mask.

    Each feature file holds one sample. Normal records get all-zero masks of
    the record's image size.

    Args:
        manifest: Records to load
        precision: Target precision, the first file's precision if omitted

    Raises:
        ContractError: If the manifest is empty or a mask is not binary
        ShapeError: If feature dims disagree or a mask does not match its record
        DataIOError: If a file is missing or corrupt
    """
    if not manifest.records:
        raise ContractError("Manifest has no records")

    samples = []
    masks = []
    paths = []
    for record in manifest.records:
        features = read_features(manifest.resolve(record.feature_path))
        if features.shape[0] != 1:
            raise ShapeError(
                f"{record.feature_path}: expected one sample per feature file, "
                f"got N={features.shape[0]}"
            )
        precision = precision or features.precision
        if samples and features.shape[1:] != samples[0].shape[1:]:
            raise ShapeError(
                f"{record.feature_path}: dims {features.shape[1:]} differ from "
                f"{samples[0].shape[1:]}"
            )
        samples.append(features.data.astype(precision.dtype))
        masks.append(_load_mask(manifest, record))
        paths.append(record.feature_path)

    return FeatureSet(
        features=Tensor.wrap(np.concatenate(samples, axis=0)),
        labels=np.asarray(manifest.labels, dtype=np.int64),
        masks=masks,
        paths=paths,
    )


def _load_mask(manifest: DatasetManifest, record: ManifestRecord) -> np.ndarray:
    dims = (record.image_height, record.image_width)
    if record.mask_path is None:
        return np.zeros(dims, dtype=np.uint8)
    mask = read_features(manifest.resolve(record.mask_path))
    if mask.shape != (1, 1) + dims:
        raise ShapeError(f"{record.mask_path}: mask shape {mask.shape} does not match {dims}")
    values = mask.data[0, 0]
    if not np.all((values == 0) | (values == 1)):
        raise ContractError(f"{record.mask_path}: mask values must be 0 or 1")
    return values.astype(np.uint8)
