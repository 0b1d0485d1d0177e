from unittest.mock import Mock

import numpy as np
import pytest

from src.cainn_flow.core.tensor import Precision
from src.cainn_flow.data.feature_file import read_features
from src.cainn_flow.data.manifest import load_feature_set, read_manifest
from src.cainn_flow.data.synthetic import (
    anomaly_mask,
    inject_anomaly,
    smooth_texture,
    synth_generate,
)
from src.cainn_flow.models.dataset_model import SynthConfig
from src.cainn_flow.utils.errors import ContractError


def _files(root):
    return {
        str(path.relative_to(root)): path.read_bytes()
        for path in sorted(root.rglob("*"))
        if path.is_file()
    }


class TestSynthGenerate:
    """Tests for the synthetic texture benchmark."""

    def test_layout(self, tmp_path, small_synth_config, mock_logger):
        """Test the record counts and the manifests written to disk."""
        dataset = synth_generate(small_synth_config, tmp_path, logger=mock_logger)
        assert len(dataset.train.records) == 6
        assert dataset.test.labels == [0, 0, 0, 1, 1, 1]
        assert read_manifest(dataset.train_manifest).records == dataset.train.records
        assert read_manifest(dataset.test_manifest).records == dataset.test.records
        assert (tmp_path / "images" / "train_0000.cafm").exists()

    def test_deterministic(self, tmp_path, small_synth_config, mock_logger):
        """Test that one seed writes byte-identical datasets."""
        synth_generate(small_synth_config, tmp_path / "a", logger=mock_logger)
        synth_generate(small_synth_config, tmp_path / "b", logger=mock_logger)
        first, second = _files(tmp_path / "a"), _files(tmp_path / "b")
        assert first.keys() == second.keys()
        assert first == second

    def test_seed_changes_images(self, tmp_path, small_synth_config, mock_logger):
        """Test that another seed draws other textures."""
        other = small_synth_config.model_copy(update={"seed": 4})
        synth_generate(small_synth_config, tmp_path / "a", logger=mock_logger)
        synth_generate(other, tmp_path / "b", logger=mock_logger)
        name = "images/train_0000.cafm"
        assert (tmp_path / "a" / name).read_bytes() != (tmp_path / "b" / name).read_bytes()

    def test_anomalies_shift_masked_pixels(self, tmp_path, small_synth_config, mock_logger):
        """Test that masked pixels carry a standardised texture raised by the shift."""
        # Setup
        cfg = small_synth_config.model_copy(update={"intensity_shift": 3.0})
        dataset = synth_generate(cfg, tmp_path, precision=Precision.F64, logger=mock_logger)

        for record in dataset.test.records[3:]:
            name = record.feature_path.split("/")[-1]
            image = read_features(tmp_path / "images" / name).data[0, 0]
            mask = read_features(tmp_path / record.mask_path).data[0, 0].astype(bool)
            assert 0 < mask.sum() <= 8 * 8

            # Verify
            assert image[mask].mean() == pytest.approx(3.0, abs=1e-9)
            if mask.sum() > 1:
                assert image[mask].std() == pytest.approx(1.0, rel=1e-9)
            assert image[mask].mean() - image[~mask].mean() >= 3.0 - 1.0

    def test_features_load(self, tmp_path, small_synth_config, mock_logger):
        """Test that the written features load at a quarter of the image size."""
        dataset = synth_generate(
            small_synth_config, tmp_path, precision=Precision.F32, logger=mock_logger
        )
        feature_set = load_feature_set(read_manifest(dataset.test_manifest))
        assert feature_set.features.shape == (6, 16, 4, 4)
        assert feature_set.features.precision is Precision.F32
        assert all(mask.shape == (16, 16) for mask in feature_set.masks)
        assert all(mask.sum() > 0 for mask in feature_set.masks[3:])

    def test_anomaly_larger_than_image(self, tmp_path, mock_logger):
        """Test that anomalies must fit inside the image."""
        cfg = SynthConfig(image_size=8, anomaly_min_size=4, anomaly_max_size=12)
        with pytest.raises(ContractError):
            synth_generate(cfg, tmp_path, logger=mock_logger)

    def test_logs_summary(self, tmp_path, small_synth_config, mock_logger):
        """Test that generation logs its counts."""
        synth_generate(small_synth_config, tmp_path, logger=mock_logger)
        message, kwargs = mock_logger.info.call_args[0][0], mock_logger.info.call_args[1]
        assert "Generated synthetic dataset" in message
        assert kwargs["train"] == 6


class TestTextureAndMask:
    """Tests for the texture and anomaly-shape helpers."""

    def test_texture_standardised(self):
        """Test that textures have zero mean and unit deviation."""
        texture = smooth_texture(np.random.default_rng(0), 32, 1.5)
        assert texture.shape == (32, 32)
        assert texture.mean() == pytest.approx(0.0, abs=1e-12)
        assert texture.std() == pytest.approx(1.0, rel=1e-12)

    def test_white_texture(self):
        """Test that sigma 0 leaves the noise unsmoothed."""
        texture = smooth_texture(np.random.default_rng(1), 64, 0.0)
        neighbour_corr = np.corrcoef(texture[:, :-1].ravel(), texture[:, 1:].ravel())[0, 1]
        assert abs(neighbour_corr) < 0.1
        assert texture.std() == pytest.approx(1.0, rel=1e-12)

    def test_smooth_texture_is_correlated(self):
        """Test that smoothing correlates neighbouring pixels."""
        texture = smooth_texture(np.random.default_rng(1), 64, 1.0)
        neighbour_corr = np.corrcoef(texture[:, :-1].ravel(), texture[:, 1:].ravel())[0, 1]
        assert neighbour_corr > 0.5

    def test_inject_anomaly(self):
        """Test that only masked pixels change, to a unit-variance texture around the shift."""
        # Setup
        cfg = SynthConfig(image_size=16, intensity_shift=2.5, anomaly_texture_sigma=0.0)
        rng = np.random.default_rng(7)
        image = smooth_texture(rng, 16, 1.0)
        mask = np.zeros((16, 16), dtype=np.uint8)
        mask[3:9, 5:12] = 1

        # Execute
        out = inject_anomaly(rng, image, mask, cfg)

        # Verify
        inside = mask.astype(bool)
        np.testing.assert_array_equal(out[~inside], image[~inside])
        assert out[inside].mean() == pytest.approx(2.5, abs=1e-12)
        assert out[inside].std() == pytest.approx(1.0, rel=1e-12)
        assert not np.allclose(out[inside], image[inside] + 2.5)

    def test_inject_single_pixel(self):
        """Test that a one-pixel blob takes the shift exactly."""
        cfg = SynthConfig(image_size=8, intensity_shift=1.5)
        mask = np.zeros((8, 8), dtype=np.uint8)
        mask[4, 4] = 1
        out = inject_anomaly(np.random.default_rng(0), np.zeros((8, 8)), mask, cfg)
        assert out[4, 4] == 1.5
        assert np.count_nonzero(out) == 1

    @pytest.mark.parametrize("seed", range(10))
    def test_mask_inside_image(self, seed):
        """Test that every blob fits its size range and the image."""
        cfg = SynthConfig(image_size=16, anomaly_min_size=4, anomaly_max_size=8)
        mask = anomaly_mask(np.random.default_rng(seed), cfg)
        rows, cols = np.nonzero(mask)
        assert mask.shape == (16, 16)
        assert len(rows) > 0
        assert rows.max() - rows.min() + 1 <= 8
        assert cols.max() - cols.min() + 1 <= 8


def test_default_logger(tmp_path, small_synth_config, monkeypatch):
    """Test that generation works without an explicit logger."""
    created = Mock()
    monkeypatch.setattr(
        "src.cainn_flow.data.synthetic.resolve_component_logger", lambda logger, name: created
    )
    synth_generate(small_synth_config, tmp_path)
    assert created.info.called
