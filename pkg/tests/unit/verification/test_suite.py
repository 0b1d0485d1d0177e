import pytest

from src.cainn_flow.core import ops
from src.cainn_flow.flows import flow_model
from src.cainn_flow.utils.errors import VerificationFailure
from src.cainn_flow.verification.suite import InvariantViolation, VerifySuite, verify


@pytest.fixture
def broken_inverse(monkeypatch):
    """Replace the coupling inverse used by the flow with a sign-flipped one."""
    original = flow_model.coupling_inverse

    def flipped(v, block):
        return ops.scale(original(v, block), -1.0)

    monkeypatch.setattr(flow_model, "coupling_inverse", flipped)


class TestVerifySuite:
    """Tests for the VerifySuite class."""

    def test_check_names(self, mock_logger):
        """Test that the full level extends the fast level."""
        fast = VerifySuite("fast", logger=mock_logger).check_names
        full = VerifySuite("full", logger=mock_logger).check_names
        assert fast == ("identity_start", "bijectivity", "cbam_bounds", "auroc_oracle")
        assert full[: len(fast)] == fast
        assert set(full) - set(fast) == {"logdet_exactness", "gradients"}

    def test_unknown_level(self, mock_logger):
        """Test that only fast and full exist."""
        with pytest.raises(ValueError):
            VerifySuite("quick", logger=mock_logger)

    def test_fast_level_passes(self, mock_logger):
        """Test that the fast level passes on a correct implementation."""
        report = VerifySuite("fast", logger=mock_logger).run_or_raise()
        assert report["passed"]
        assert report["failed"] == []
        assert [c["name"] for c in report["checks"]] == list(VerifySuite.FAST_CHECKS)
        assert all(c["passed"] for c in report["checks"])

    def test_logs_each_check(self, mock_logger, monkeypatch):
        """Test that every finished check is logged with its name."""
        monkeypatch.setattr(VerifySuite, "FAST_CHECKS", ("identity_start", "auroc_oracle"))
        VerifySuite("fast", logger=mock_logger).run()
        checks = [call[1]["check"] for call in mock_logger.info.call_args_list]
        assert checks == ["identity_start", "auroc_oracle"]

    def test_broken_inverse_is_caught(self, mock_logger, monkeypatch, broken_inverse):
        """Test that a sign error in the inverse fails bijectivity only."""
        monkeypatch.setattr(VerifySuite, "FAST_CHECKS", ("identity_start", "bijectivity"))
        report = VerifySuite("fast", logger=mock_logger).run()

        # Verify the failure is reported, not raised
        assert not report["passed"]
        assert report["failed"] == ["bijectivity"]
        assert "round-trip error" in report["checks"][1]["detail"]
        assert mock_logger.error.called

    def test_run_or_raise(self, mock_logger, monkeypatch, broken_inverse):
        """Test that failures raise VerificationFailure carrying the report."""
        monkeypatch.setattr(VerifySuite, "FAST_CHECKS", ("bijectivity",))
        with pytest.raises(VerificationFailure) as excinfo:
            verify("fast", logger=mock_logger)
        assert excinfo.value.failed == ["bijectivity"]
        assert excinfo.value.exit_code == 3
        assert excinfo.value.report["level"] == "fast"

    def test_bijectivity_detail_states_scale(self, mock_logger):
        """Test that the round-trip detail names the input range and parameter scale."""
        detail = VerifySuite(logger=mock_logger).check_bijectivity()
        assert "f32 max error" in detail
        assert "inputs U(-0.5, 0.5)" in detail
        assert "within 0.05 of identity" in detail

    def test_check_raises_violation(self, mock_logger, broken_inverse):
        """Test that a single check reports through InvariantViolation."""
        with pytest.raises(InvariantViolation):
            VerifySuite(logger=mock_logger).check_bijectivity()

    def test_logdet_exactness(self, mock_logger):
        """Test the finite-difference log-determinant check."""
        detail = VerifySuite(logger=mock_logger).check_logdet_exactness()
        assert detail.startswith("24 models")

    @pytest.mark.slow
    def test_gradients(self, mock_logger):
        """Test every parameter gradient against central differences."""
        assert "gradient error" in VerifySuite(logger=mock_logger).check_gradients()

    @pytest.mark.slow
    def test_full_level_passes(self, mock_logger):
        """Test that the full level passes."""
        assert verify("full", logger=mock_logger)["passed"]
