"""Binary PGM (P5) heatmap export."""

import numpy as np

from ..models.results import AnomalyMap
from ..utils.errors import ContractError, DataIOError
from .binary_io import PathLike


def to_gray_levels(values: np.ndarray) -> np.ndarray:
    """floor(255 * (s - min) / (max - min)) as uint8; a constant map becomes all zeros."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.size == 0:
        raise ContractError(f"Heatmap must be a non-empty 2-D map, got shape {values.shape}")
    low, high = float(values.min()), float(values.max())
    if high <= low:
        return np.zeros(values.shape, dtype=np.uint8)
    levels = np.floor(255.0 * (values - low) / (high - low))
    return np.clip(levels, 0, 255).astype(np.uint8)


def write_pgm(values: np.ndarray, path: PathLike) -> None:
    levels = to_gray_levels(values)
    height, width = levels.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    try:
        with open(path, "wb") as handle:
            handle.write(header + levels.tobytes())
    except OSError as e:
        raise DataIOError(f"Cannot write heatmap {path}: {e}") from e


def export_pgm(amap: AnomalyMap, path: PathLike) -> None:
    """Write the map at image resolution when upsampled, feature resolution otherwise."""
    write_pgm(amap.pixels, path)
