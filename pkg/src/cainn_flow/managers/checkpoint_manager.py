"""CAFW checkpoint container.

Layout, little-endian throughout::

    "CAFW" | u32 version
    u32 len | UTF-8 JSON config block {"train_config": {...} | null}
    u32 C | u32 H | u32 W | u8 dtype flag (0 = f32, 1 = f64)
    C x f64 feature mean | C x f64 feature std
    u32 K | K x (u32 len | UTF-8 JSON block architecture)
    u32 count | count x (u32 name len | name | u8 ndim | ndim x u32 extent | data)
    u32 epochs | epochs x f64 loss
    u32 CRC32 of everything above
"""

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from ..core.tensor import Precision, Tensor
from ..data.binary_io import BinaryReader, BinaryWriter, PathLike
from ..flows.flow_model import FeatureNorm, FlowModel
from ..layers.coupling import CouplingBlock
from ..layers.subnet import subnet_init
from ..models.subnet_config import SubnetConfig
from ..models.train_config import TrainConfig
from ..utils.errors import DataIOError
from ..utils.logger import LoggerProtocol, resolve_component_logger

CHECKPOINT_MAGIC = b"CAFW"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True, eq=False)
class Checkpoint:
    """Everything a CAFW file holds."""

    model: FlowModel
    train_config: Optional[TrainConfig] = None
    loss_history: List[float] = field(default_factory=list)
    version: int = CHECKPOINT_VERSION


class CheckpointManager:
    """Saves and restores flows bit-exactly."""

    def __init__(self, logger: Optional[LoggerProtocol] = None) -> None:
        """
        Initialize the checkpoint manager.

        Args:
            logger: Optional logger instance. If not provided, a default Logger will be created
        """
        self.logger = resolve_component_logger(logger, "CheckpointManager")

    def save(
        self,
        model: FlowModel,
        path: PathLike,
        train_config: Optional[TrainConfig] = None,
        loss_history: Sequence[float] = (),
    ) -> None:
        """
        Write a model, its training config and loss history.

        Args:
            model: The flow to persist
            path: Destination file
            train_config: Config the model was trained with, if any
            loss_history: Per-epoch mean losses

        Raises:
            DataIOError: If the file cannot be written
        """
        precision = model.precision
        writer = BinaryWriter(CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
        config_block = {
            "train_config": train_config.model_dump(mode="json") if train_config else None
        }
        writer.text(json.dumps(config_block, sort_keys=True))
        for extent in model.input_dims:
            writer.u32(extent)
        writer.u8(precision.flag)
        writer.f64(model.feature_norm.mean).f64(model.feature_norm.std)

        writer.u32(model.steps)
        for block in model.blocks:
            writer.text(json.dumps(_block_architecture(block), sort_keys=True))

        params = model.named_parameters()
        writer.u32(len(params))
        for name, tensor in params.items():
            writer.text(name)
            writer.u8(len(tensor.shape))
            for extent in tensor.shape:
                writer.u32(extent)
            writer.array(tensor.data, precision.dtype)

        writer.u32(len(loss_history))
        writer.f64(list(loss_history))
        writer.write_to(path)
        self.logger.info("Saved checkpoint", path=str(path), parameters=len(params))

    def read(self, path: PathLike) -> Checkpoint:
        """
        Read a CAFW file.

        Raises:
            TruncatedFileError: If the file ends before its records and CRC32
            ChecksumMismatchError: If the CRC32 does not match a complete file
            MagicMismatchError: If an intact file is not a CAFW container
            VersionMismatchError: If the format version is unsupported
        """
        reader = BinaryReader.open(path)
        config_text, dims, precision, norm_mean, norm_std, block_texts, tensors, history = (
            reader.decode(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, _read_records)
        )

        config_block = _parse_json(config_text, reader.path)
        architectures = [_parse_json(text, reader.path) for text in block_texts]
        try:
            blocks = tuple(_block_skeleton(arch, precision) for arch in architectures)
            model = FlowModel(
                blocks=blocks,
                input_dims=dims,
                feature_norm=FeatureNorm(norm_mean, norm_std),
            ).with_parameters(tensors)
            train_config = config_block.get("train_config")
            train_config = TrainConfig(**train_config) if train_config else None
        except (KeyError, TypeError, ValueError) as e:
            raise DataIOError(f"{reader.path}: inconsistent checkpoint contents: {e}") from e

        expected = set(model.named_parameters())
        if expected != set(tensors):
            raise DataIOError(
                f"{reader.path}: parameter records do not match the architecture: "
                f"missing {sorted(expected - set(tensors))}, "
                f"extra {sorted(set(tensors) - expected)}"
            )
        self.logger.info("Loaded checkpoint", path=reader.path, steps=model.steps, dims=dims)
        return Checkpoint(model=model, train_config=train_config, loss_history=history)


def _block_architecture(block: CouplingBlock) -> dict:
    return {
        "index": block.index,
        "perm": list(block.perm),
        "clamp_alpha": block.clamp_alpha,
        "config_a": block.config_a.model_dump(mode="json"),
        "config_b": block.config_b.model_dump(mode="json"),
    }


def _block_skeleton(arch: dict, precision: Precision) -> CouplingBlock:
    """Block with the stored architecture; its tensors are replaced from the payload."""
    config_a = SubnetConfig(**arch["config_a"])
    config_b = SubnetConfig(**arch["config_b"])
    return CouplingBlock(
        subnet_a=subnet_init(config_a, precision=precision),
        subnet_b=subnet_init(config_b, precision=precision),
        config_a=config_a,
        config_b=config_b,
        perm=tuple(arch["perm"]),
        clamp_alpha=arch["clamp_alpha"],
        index=arch["index"],
    )


def _parse_json(text: str, path: str) -> dict:
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise DataIOError(f"{path}: malformed JSON block: {e}") from e


def _read_records(reader: BinaryReader) -> tuple:
    config_text = reader.text()
    dims = (reader.u32(), reader.u32(), reader.u32())
    precision = _read_precision(reader)
    norm_mean = reader.f64(dims[0])
    norm_std = reader.f64(dims[0])
    block_texts = [reader.text() for _ in range(reader.u32())]

    tensors: Dict[str, Tensor] = {}
    for _ in range(reader.u32()):
        name = reader.text()
        shape = tuple(reader.u32() for _ in range(reader.u8()))
        tensors[name] = Tensor.wrap(reader.array(shape, precision.dtype))

    history = reader.f64(reader.u32()).tolist()
    return config_text, dims, precision, norm_mean, norm_std, block_texts, tensors, history


def _read_precision(reader: BinaryReader) -> Precision:
    flag = reader.u8()
    if flag not in (0, 1):
        raise DataIOError(f"{reader.path}: unknown dtype flag {flag}")
    return Precision.from_flag(flag)


def save_checkpoint(
    model: FlowModel,
    path: PathLike,
    train_config: Optional[TrainConfig] = None,
    loss_history: Sequence[float] = (),
    logger: Optional[LoggerProtocol] = None,
) -> None:
    CheckpointManager(logger=logger).save(model, path, train_config, loss_history)


def load_checkpoint(path: PathLike, logger: Optional[LoggerProtocol] = None) -> FlowModel:
    return CheckpointManager(logger=logger).read(path).model


def read_checkpoint(path: PathLike, logger: Optional[LoggerProtocol] = None) -> Checkpoint:
    return CheckpointManager(logger=logger).read(path)
