"""Anomaly maps from latents, bilinear upsampling, and latent-space generation."""

from typing import Iterable, Tuple

import numpy as np
from scipy.ndimage import map_coordinates

from ..core.tensor import Tensor
from ..flows.flow_model import FlowModel, flow_inverse
from ..models.results import AnomalyMap
from ..utils.errors import ContractError

Site = Tuple[int, int, int]


def anomaly_map(z: Tensor) -> AnomalyMap:
    """
    Per-site negative log-density without its constant: 0.5 * sum_c z(c, h, w)^2.

    Raises:
        ContractError: If z holds more than one sample
    """
    if z.shape[0] != 1:
        raise ContractError(f"anomaly_map takes a single sample, got N={z.shape[0]}")
    data = z.data[0].astype(np.float64)
    return AnomalyMap(scores=0.5 * np.sum(data * data, axis=0))


def anomaly_maps(z: Tensor) -> list:
    return [anomaly_map(Tensor.wrap(z.data[i : i + 1])) for i in range(z.shape[0])]


def upsample_bilinear(amap: AnomalyMap, height: int, width: int) -> AnomalyMap:
    """
    Align-corners bilinear interpolation of the feature-resolution scores.

    Source grid points map exactly onto output corners, so interpolated values stay
    within the source range.

    Raises:
        ContractError: If the target is smaller than the map in either direction
    """
    src_h, src_w = amap.shape
    if height < src_h or width < src_w:
        raise ContractError(
            f"upsample_bilinear cannot downscale {src_h}x{src_w} to {height}x{width}"
        )
    rows = np.linspace(0.0, src_h - 1, height)
    cols = np.linspace(0.0, src_w - 1, width)
    grid = np.meshgrid(rows, cols, indexing="ij")
    upsampled = map_coordinates(amap.scores, grid, order=1, mode="nearest")
    return AnomalyMap(scores=amap.scores, upsampled=upsampled)


def image_score(amap: AnomalyMap) -> float:
    """Maximum pixel score. Raises ContractError on an empty map."""
    if amap.scores.size == 0:
        raise ContractError("image_score needs a non-empty map")
    return float(amap.pixels.max())


def perturb_latent(z: Tensor, sites: Iterable[Site], magnitude: float) -> Tensor:
    """
    Add ``magnitude`` at each listed (c, h, w) site of every sample.

    Raises:
        ContractError: If a site lies outside z
    """
    _, channels, height, width = z.shape
    data = z.numpy()
    for site in sites:
        c, h, w = (int(v) for v in site)
        if not (0 <= c < channels and 0 <= h < height and 0 <= w < width):
            raise ContractError(
                f"Site {(c, h, w)} outside latent extents (C={channels}, H={height}, W={width})"
            )
        data[:, c, h, w] += magnitude
    return Tensor.wrap(data)


def generate_from_latent(z: Tensor, model: FlowModel) -> Tensor:
    """Feature map whose latent is z: the flow run in reverse."""
    return flow_inverse(z, model)
