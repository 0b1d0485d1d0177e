import math

import numpy as np
import pytest

from src.cainn_flow.core.tensor import Precision, Tensor
from src.cainn_flow.flows.density import LOG_2PI, gaussian_logdensity, nll_loss
from src.cainn_flow.flows.flow_model import FlowOutput, flow_forward

F64 = Precision.F64


def _z(values):
    return Tensor(np.asarray(values, dtype=np.float64).reshape(1, -1, 1, 1))


def _output(z, logdet=0.0):
    n = z.shape[0]
    return FlowOutput(z=z, logdet=Tensor(np.full((n, 1, 1, 1), logdet)))


class TestGaussianLogdensity:
    """Tests for the standard-normal log-density."""

    def test_origin_two_dims(self):
        """Test log p(0, 0) = -ln(2 pi)."""
        value = gaussian_logdensity(_z([0.0, 0.0])).data.reshape(-1)[0]
        assert value == pytest.approx(-1.837877, abs=1e-6)

    def test_unit_value(self):
        """Test log p(1) = -0.5 - 0.5 ln(2 pi)."""
        value = gaussian_logdensity(_z([1.0])).data.reshape(-1)[0]
        assert value == pytest.approx(-1.418939, abs=1e-6)

    def test_decreases_with_norm(self, rng):
        """Test that a larger latent has a lower density."""
        z = rng.standard_normal(8)
        near = gaussian_logdensity(_z(z)).data.reshape(-1)[0]
        far = gaussian_logdensity(_z(2.0 * z)).data.reshape(-1)[0]
        assert far < near

    def test_per_sample(self, rng):
        """Test one value per sample."""
        z = Tensor(rng.standard_normal((3, 2, 2, 2)), precision=F64)
        out = gaussian_logdensity(z)
        assert out.shape == (3, 1, 1, 1)
        expected = -0.5 * (z.data**2).sum(axis=(1, 2, 3)) - 0.5 * 8 * LOG_2PI
        np.testing.assert_allclose(out.data.reshape(-1), expected)


class TestNllLoss:
    """Tests for the per-dimension negative log-likelihood."""

    def test_zero_latent(self):
        """Test the loss of z = 0 with zero logdet is 0.5 ln(2 pi)."""
        loss = nll_loss(_output(_z([0.0])))
        assert loss.shape == (1, 1, 1, 1)
        assert loss.data.reshape(-1)[0] == pytest.approx(0.918939, abs=1e-6)

    def test_logdet_lowers_loss(self):
        """Test that a larger logdet lowers the loss by logdet / D."""
        z = _z([0.5, -0.5])
        base = nll_loss(_output(z)).data.reshape(-1)[0]
        shifted = nll_loss(_output(z, logdet=1.0)).data.reshape(-1)[0]
        assert shifted == pytest.approx(base - 0.5)

    def test_batch_mean(self):
        """Test that the loss averages over samples."""
        z = Tensor(np.array([[[[0.0]]], [[[2.0]]]]))
        loss = nll_loss(_output(z)).data.reshape(-1)[0]
        assert loss == pytest.approx(0.5 * LOG_2PI + 0.5 * (0.0 + 2.0))

    def test_identity_flow_loss(self, make_flow, make_input):
        """Test that the identity flow's loss is the mean Gaussian NLL of the normalised input."""
        model = make_flow(norm=True)
        x = make_input((4, 4, 2, 2))
        h = model.feature_norm.normalize(x, F64).data
        expected = 0.5 * LOG_2PI + 0.5 * np.mean(h**2)
        loss = nll_loss(flow_forward(x, model)).data.reshape(-1)[0]
        assert loss == pytest.approx(expected, rel=1e-12)
        assert math.isfinite(loss)
