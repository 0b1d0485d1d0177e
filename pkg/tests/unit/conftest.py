from unittest.mock import Mock

import numpy as np
import pytest

from src.cainn_flow.core.tensor import Precision, Tensor
from src.cainn_flow.data.synthetic import synth_generate
from src.cainn_flow.factories.flow_factory import FlowFactory
from src.cainn_flow.flows.flow_model import FeatureNorm
from src.cainn_flow.models.dataset_model import SynthConfig
from src.cainn_flow.models.subnet_config import SubnetVariant
from src.cainn_flow.utils.logger import LoggerProtocol


@pytest.fixture
def rng():
    """Seeded generator so every test draws the same values."""
    return np.random.default_rng(1234)


@pytest.fixture
def mock_logger():
    return Mock(spec=LoggerProtocol)


@pytest.fixture
def make_flow():
    """
    Factory for small double-precision flows.

    ``scale`` moves the parameters away from the identity start by seeded
    uniform noise; ``norm`` attaches a random feature standardisation.
    """

    def _make(
        dims=(4, 2, 2),
        steps=2,
        variant=SubnetVariant.CAC,
        precision=Precision.F64,
        scale=0.0,
        seed=0,
        clamp_alpha=1.9,
        norm=False,
    ):
        feature_norm = None
        if norm:
            norm_rng = np.random.default_rng(seed + 7)
            feature_norm = FeatureNorm(
                norm_rng.uniform(-0.5, 0.5, dims[0]), norm_rng.uniform(0.5, 2.0, dims[0])
            )
        model = FlowFactory.create_flow(
            dims,
            steps=steps,
            variant=variant,
            seed=seed,
            clamp_alpha=clamp_alpha,
            precision=precision,
            feature_norm=feature_norm,
        )
        if scale:
            model = FlowFactory.perturb_parameters(model, scale, seed=seed)
        return model

    return _make


@pytest.fixture
def make_input(rng):
    def _make(shape, precision=Precision.F64, low=None, high=None):
        if low is None:
            values = rng.standard_normal(shape)
        else:
            values = rng.uniform(low, high, shape)
        return Tensor(values, precision=precision)

    return _make


@pytest.fixture
def small_synth_config():
    return SynthConfig(
        n_train=6,
        n_test_normal=3,
        n_test_anomalous=3,
        image_size=16,
        seed=3,
        extractor_seed=5,
        anomaly_min_size=4,
        anomaly_max_size=8,
    )


@pytest.fixture(scope="session")
def synth_dataset(tmp_path_factory):
    """A small generated benchmark shared across tests. Treat it as read-only."""
    cfg = SynthConfig(
        n_train=16,
        n_test_normal=4,
        n_test_anomalous=4,
        image_size=16,
        seed=11,
        extractor_seed=2,
        anomaly_min_size=4,
        anomaly_max_size=8,
    )
    return synth_generate(
        cfg, tmp_path_factory.mktemp("synth"), precision=Precision.F32, logger=Mock()
    )
