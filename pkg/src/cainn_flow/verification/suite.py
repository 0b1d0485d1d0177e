"""Invariant checks run by ``cainn-flow verify``.

The fast level covers invertibility, the AUROC oracle, attention bounds and the
identity start. The full level adds finite-difference log-determinant and
gradient checks in double precision over every variant with K in {1, 2}.
"""

import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Literal, Optional, Tuple

import numpy as np

from ..core.autodiff import grad_check
from ..core.tensor import Precision, Tensor
from ..evaluation.auroc import auroc, auroc_bruteforce
from ..factories.flow_factory import FlowFactory
from ..flows.density import nll_loss
from ..flows.flow_model import (
    FeatureNorm,
    FlowModel,
    flow_forward,
    flow_inverse,
    numerical_logdet_oracle,
)
from ..layers.attention import cbam_apply, channel_attention, spatial_attention
from ..layers.subnet import subnet_init
from ..models.subnet_config import SubnetConfig, SubnetVariant
from ..utils.errors import CainnError, VerificationFailure
from ..utils.logger import LoggerProtocol, resolve_component_logger

Level = Literal["fast", "full"]

ROUND_TRIP_TOLERANCE = {Precision.F32: 1e-6, Precision.F64: 1e-10}
LOGDET_TOLERANCE = 1e-3
GRADIENT_TOLERANCE = 1e-4


class InvariantViolation(Exception):
    """A check observed a value outside its invariant."""


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "detail": self.detail,
            "seconds": round(self.seconds, 3),
        }


class VerifySuite:
    """
    Runs the invariant checks of one level and reports each by name.

    Each check returns a short detail string or raises InvariantViolation.
    """

    FAST_CHECKS: Tuple[str, ...] = ("identity_start", "bijectivity", "cbam_bounds", "auroc_oracle")
    FULL_CHECKS: Tuple[str, ...] = FAST_CHECKS + ("logdet_exactness", "gradients")

    BIJECTIVITY_STEPS = (1, 2, 4, 8)
    BIJECTIVITY_INPUT_RANGE = 0.5
    BIJECTIVITY_PARAMETER_SCALE = 0.05
    GRID_STEPS = (1, 2)

    def __init__(
        self, level: Level = "fast", seed: int = 0, logger: Optional[LoggerProtocol] = None
    ) -> None:
        """
        Initialize the suite.

        Args:
            level: "fast" or "full"
            seed: Seed for every random model and input
            logger: Optional logger instance. If not provided, a default Logger will be created
        """
        if level not in ("fast", "full"):
            raise ValueError(f"Unknown verification level: {level}")
        self.level = level
        self.seed = seed
        self.logger = resolve_component_logger(logger, "VerifySuite")
        self._checks: Dict[str, Callable[[], str]] = {
            "identity_start": self.check_identity_start,
            "bijectivity": self.check_bijectivity,
            "cbam_bounds": self.check_cbam_bounds,
            "auroc_oracle": self.check_auroc_oracle,
            "logdet_exactness": self.check_logdet_exactness,
            "gradients": self.check_gradients,
        }

    @property
    def check_names(self) -> Tuple[str, ...]:
        return self.FAST_CHECKS if self.level == "fast" else self.FULL_CHECKS

    def run(self) -> dict:
        """Run every check of the level and return the report document."""
        results: List[CheckResult] = []
        for name in self.check_names:
            start = time.perf_counter()
            try:
                detail = self._checks[name]()
                passed = True
            except (InvariantViolation, CainnError) as e:
                detail = str(e)
                passed = False
            result = CheckResult(name, passed, detail, time.perf_counter() - start)
            results.append(result)
            log = self.logger.info if passed else self.logger.error
            log("Check finished", check=name, passed=passed, detail=detail)

        failed = [r.name for r in results if not r.passed]
        return {
            "level": self.level,
            "passed": not failed,
            "failed": failed,
            "checks": [r.to_dict() for r in results],
        }

    def run_or_raise(self) -> dict:
        """Run the suite; raise VerificationFailure naming the failed checks."""
        report = self.run()
        if report["failed"]:
            raise VerificationFailure(report["failed"], report=report)
        return report

    def _rng(self, *stream: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, *stream])

    def _feature_norm(self, rng: np.random.Generator, channels: int) -> FeatureNorm:
        return FeatureNorm(rng.uniform(-0.2, 0.2, channels), rng.uniform(0.8, 1.25, channels))

    def _random_model(
        self,
        dims: Tuple[int, int, int],
        variant: SubnetVariant,
        steps: int,
        precision: Precision,
        scale: float,
        seed: int,
    ) -> FlowModel:
        rng = self._rng(seed, 1)
        model = FlowFactory.create_flow(
            dims,
            steps=steps,
            variant=variant,
            seed=seed,
            precision=precision,
            feature_norm=self._feature_norm(rng, dims[0]),
        )
        return FlowFactory.perturb_parameters(model, scale, seed=seed)

    def check_identity_start(self) -> str:
        dims = (4, 4, 4)
        for precision in Precision:
            for variant in SubnetVariant:
                rng = self._rng(1, list(SubnetVariant).index(variant))
                norm = self._feature_norm(rng, dims[0])
                model = FlowFactory.create_flow(
                    dims, variant=variant, seed=self.seed, precision=precision, feature_norm=norm
                )
                x = Tensor(rng.standard_normal((8,) + dims), precision=precision)
                out = flow_forward(x, model)
                if not np.array_equal(out.z.data, norm.normalize(x, precision).data):
                    raise InvariantViolation(
                        f"{variant.value}/{precision.value}: z != normalised x"
                    )
                if np.any(out.logdet.data != 0):
                    raise InvariantViolation(f"{variant.value}/{precision.value}: logdet != 0")
        return "z equals normalised input, logdet 0 for every variant"

    def check_bijectivity(self) -> str:
        """
        Round trip x -> z -> x for every variant, step count and precision.

        Inputs are drawn from U(-0.5, 0.5) and parameters sit within 0.05 of the
        identity start. The f32 tolerance is calibrated for this scale;
        unit-variance inputs with larger parameter noise can exceed it.
        """
        dims = (4, 4, 4)
        bound = self.BIJECTIVITY_INPUT_RANGE
        worst = {p: 0.0 for p in Precision}
        for precision in Precision:
            tolerance = ROUND_TRIP_TOLERANCE[precision]
            for v_index, variant in enumerate(SubnetVariant):
                for steps in self.BIJECTIVITY_STEPS:
                    seed = 100 * v_index + steps
                    model = self._random_model(
                        dims, variant, steps, precision, self.BIJECTIVITY_PARAMETER_SCALE, seed
                    )
                    sample = self._rng(2, seed).uniform(-bound, bound, (100,) + dims)
                    x = Tensor(sample, precision=precision)
                    restored = flow_inverse(flow_forward(x, model).z, model)
                    error = float(
                        np.max(np.abs(restored.data.astype(np.float64) - x.data.astype(np.float64)))
                    )
                    worst[precision] = max(worst[precision], error)
                    if not error < tolerance:
                        raise InvariantViolation(
                            f"{variant.value}/K={steps}/{precision.value}: round-trip error "
                            f"{error:.3e} >= {tolerance:.0e}"
                        )
        errors = ", ".join(f"{p.value} max error {e:.2e}" for p, e in worst.items())
        return (
            f"{errors} (inputs U(-{bound}, {bound}), "
            f"parameters within {self.BIJECTIVITY_PARAMETER_SCALE} of identity)"
        )

    def check_cbam_bounds(self) -> str:
        for trial in range(10):
            rng = self._rng(3, trial)
            channels = int(rng.integers(1, 9))
            cfg = SubnetConfig(
                variant=SubnetVariant.AC,
                in_channels=channels,
                out_channels=2,
                reduction_ratio=int(rng.integers(1, 17)),
                seed=trial,
            )
            attention = subnet_init(cfg, precision=Precision.F64).attention
            f = Tensor(rng.standard_normal((2, channels, 5, 6)), precision=Precision.F64)
            for gate_name, gate in (
                ("channel", channel_attention(f, attention.channel)),
                ("spatial", spatial_attention(f, attention.spatial)),
            ):
                if not (np.all(gate.data > 0) and np.all(gate.data < 1)):
                    raise InvariantViolation(f"{gate_name} attention left (0, 1) in trial {trial}")
            out = cbam_apply(f, attention.channel, attention.spatial)
            if out.shape != f.shape:
                raise InvariantViolation(f"cbam_apply changed shape {f.shape} -> {out.shape}")
            if np.any(np.abs(out.data) > np.abs(f.data)):
                raise InvariantViolation(f"cbam_apply amplified its input in trial {trial}")
        return "gates within (0, 1), outputs never exceed inputs"

    def check_auroc_oracle(self) -> str:
        if auroc([0.9, 0.8], [0.1, 0.7]) != 1.0:
            raise InvariantViolation("auroc([0.9, 0.8], [0.1, 0.7]) != 1.0")
        worst = 0.0
        rng = self._rng(4)
        for instance in range(1000):
            m, n = (int(v) for v in rng.integers(1, 40, size=2))
            if instance % 2:
                pos, neg = rng.integers(0, 5, m).astype(float), rng.integers(0, 5, n).astype(float)
            else:
                pos, neg = rng.normal(0.5, 1.0, m), rng.normal(0.0, 1.0, n)
            worst = max(worst, abs(auroc(pos, neg) - auroc_bruteforce(pos, neg)))
            if worst > 1e-12:
                raise InvariantViolation(f"auroc differs from pair counting by {worst:.3e}")
        return f"1000 instances, max deviation {worst:.1e}"

    def check_logdet_exactness(self) -> str:
        dims = (4, 2, 2)
        worst = 0.0
        count = 0
        for v_index, variant in enumerate(SubnetVariant):
            for steps in self.GRID_STEPS:
                for repeat in range(3):
                    seed = 1000 + 10 * v_index + 3 * steps + repeat
                    model = self._random_model(dims, variant, steps, Precision.F64, 0.2, seed)
                    sample = self._rng(5, seed).standard_normal((1,) + dims)
                    x = Tensor(sample, precision=Precision.F64)
                    analytic = float(flow_forward(x, model).logdet_values[0])
                    oracle = numerical_logdet_oracle(x, model)
                    error = abs(analytic - oracle) / max(1.0, abs(oracle))
                    worst = max(worst, error)
                    count += 1
                    if error > LOGDET_TOLERANCE:
                        raise InvariantViolation(
                            f"{variant.value}/K={steps}: analytic logdet {analytic:.6f} vs "
                            f"finite-difference {oracle:.6f}"
                        )
        return f"{count} models, max relative error {worst:.2e}"

    def check_gradients(self) -> str:
        dims = (4, 2, 2)
        worst = 0.0
        for v_index, variant in enumerate(SubnetVariant):
            for steps in self.GRID_STEPS:
                seed = 2000 + 10 * v_index + steps
                model = self._random_model(dims, variant, steps, Precision.F64, 0.2, seed)
                x = Tensor(self._rng(6, seed).standard_normal((3,) + dims), precision=Precision.F64)
                # every coordinate for the default architecture, a sample elsewhere
                full = variant is SubnetVariant.CAC and steps == 2
                for name, param in model.named_parameters().items():
                    error = grad_check(
                        _loss_of(model, name, x),
                        param,
                        max_coordinates=None if full else 6,
                        seed=seed,
                    )
                    worst = max(worst, error)
                    if error > GRADIENT_TOLERANCE:
                        raise InvariantViolation(
                            f"{variant.value}/K={steps}: gradient of {name} off by {error:.3e}"
                        )
        return f"max relative gradient error {worst:.2e}"


def _loss_of(model: FlowModel, name: str, x: Tensor) -> Callable[[Tensor], Tensor]:
    def loss(param: Tensor) -> Tensor:
        return nll_loss(flow_forward(x, model.with_parameters({name: param})))

    return loss


def verify(level: Level = "fast", seed: int = 0, logger: Optional[LoggerProtocol] = None) -> dict:
    return VerifySuite(level=level, seed=seed, logger=logger).run_or_raise()
