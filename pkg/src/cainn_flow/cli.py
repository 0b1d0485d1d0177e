"""Command line entry point: ``cainn-flow <command> [flags]``.

Every command prints exactly one JSON document on stdout; diagnostics go to
stderr. Exit codes: 0 success, 1 contract, shape or numeric errors, 2 I/O
errors, 3 verification failures.
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Dict, NoReturn, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from .core.tensor import Precision, Tensor
from .data.feature_file import read_features, write_features
from .data.manifest import load_feature_set, read_manifest
from .data.pgm import export_pgm, write_pgm
from .data.synthetic import synth_generate
from .evaluation.scoring import generate_from_latent, image_score, perturb_latent
from .flows.flow_model import flow_forward
from .managers.checkpoint_manager import CheckpointManager
from .managers.evaluation_manager import EvaluationManager
from .managers.training_manager import TrainingManager
from .models.dataset_model import SynthConfig
from .models.settings_model import RuntimeSettings
from .models.subnet_config import SubnetVariant
from .models.train_config import TrainConfig
from .utils.errors import CainnError, ContractError, TrainingDivergedError, VerificationFailure
from .utils.logger import Logger
from .verification.suite import VerifySuite

VARIANT_CHOICES = [v.value for v in SubnetVariant]

Perturbation = Tuple[Tuple[int, int, int], float]


def _clamp_alpha(text: str) -> Optional[float]:
    if text.lower() in ("none", "off"):
        return None
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"clamp alpha must be positive, got {text}")
    return value


def _perturbation(text: str) -> Perturbation:
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError(f"expected c,h,w,magnitude, got {text!r}")
    try:
        c, h, w = (int(p) for p in parts[:3])
        return (c, h, w), float(parts[3])
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"malformed perturbation {text!r}: {e}") from e


def _load_model(path: str, logger: Logger):
    return CheckpointManager(logger=logger).read(path).model


def cmd_gen_data(args: argparse.Namespace, logger: Logger) -> Dict[str, Any]:
    cfg = SynthConfig(
        n_train=args.n_train,
        n_test_normal=args.n_test_normal,
        n_test_anomalous=args.n_test_anomalous,
        image_size=args.image_size,
        seed=args.seed,
        extractor_seed=args.extractor_seed,
        intensity_shift=args.intensity_shift,
        anomaly_texture_sigma=args.anomaly_texture_sigma,
        anomaly_min_size=args.anomaly_min_size,
        anomaly_max_size=args.anomaly_max_size,
    )
    dataset = synth_generate(cfg, args.out, logger=logger)
    return {
        "train_manifest": str(dataset.train_manifest),
        "test_manifest": str(dataset.test_manifest),
        "n_train": len(dataset.train.records),
        "n_test": len(dataset.test.records),
        "n_test_anomalous": sum(r.is_anomalous for r in dataset.test.records),
    }


def cmd_train(args: argparse.Namespace, logger: Logger) -> Dict[str, Any]:
    train_set = load_feature_set(read_manifest(args.manifest), precision=Precision.default())
    if not train_set.all_normal:
        raise ContractError(f"{args.manifest}: training manifest contains anomalous records")
    config = TrainConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        batch_size=args.batch,
        steps=args.steps,
        variant=args.variant,
        seed=args.seed,
        clamp_alpha=args.clamp_alpha,
        hidden_channels=args.hidden_channels,
        reduction_ratio=args.reduction_ratio,
    )
    trainer = TrainingManager(config, logger=logger)
    checkpoints = CheckpointManager(logger=logger)

    started = time.perf_counter()
    initial_loss = trainer.mean_loss(trainer.initial_model(train_set.features), train_set.features)
    try:
        model, history = trainer.train(train_set.features)
    except TrainingDivergedError as e:
        if e.last_good_model is not None:
            checkpoints.save(e.last_good_model, args.out, config, e.history)
        raise
    wall_seconds = time.perf_counter() - started
    checkpoints.save(model, args.out, config, history)
    return {
        "final_loss": history[-1] if history else initial_loss,
        "initial_loss": initial_loss,
        "epochs": len(history),
        "wall_seconds": round(wall_seconds, 3),
        "checkpoint": str(args.out),
    }


def _heatmap_path(directory: Path, feature_path: str) -> Path:
    return directory / f"{Path(feature_path).stem}.pgm"


def cmd_eval(args: argparse.Namespace, logger: Logger) -> Dict[str, Any]:
    model = _load_model(args.checkpoint, logger)
    test_set = load_feature_set(read_manifest(args.manifest), precision=model.precision)
    evaluator = EvaluationManager(logger=logger)
    evaluator.check_classes(test_set.labels)
    maps = evaluator.score(model, test_set.features, test_set.image_dims)
    result = evaluator.evaluate_maps(maps, test_set.labels, test_set.masks, test_set.paths)
    document = result.to_summary()
    if args.heatmap_dir:
        directory = Path(args.heatmap_dir)
        directory.mkdir(parents=True, exist_ok=True)
        written = 0
        for amap, label, path in zip(maps, test_set.labels, test_set.paths):
            if label == 1:
                export_pgm(amap, _heatmap_path(directory, path))
                written += 1
        document["heatmaps"] = written
    return document


def cmd_score(args: argparse.Namespace, logger: Logger) -> Dict[str, Any]:
    model = _load_model(args.checkpoint, logger)
    features = read_features(args.features)
    dims = [tuple(args.image_size)] * features.shape[0] if args.image_size else None
    maps = EvaluationManager(logger=logger).score(model, features, dims)
    if args.heatmap_dir:
        directory = Path(args.heatmap_dir)
        directory.mkdir(parents=True, exist_ok=True)
        for index, amap in enumerate(maps):
            export_pgm(amap, directory / f"sample_{index:04d}.pgm")
    return {
        "n_samples": len(maps),
        "image_scores": [image_score(m) for m in maps],
        "map_shape": list(maps[0].pixels.shape) if maps else [],
    }


def cmd_generate(args: argparse.Namespace, logger: Logger) -> Dict[str, Any]:
    model = _load_model(args.checkpoint, logger)
    dims = tuple(model.input_dims)
    if args.features:
        features = read_features(args.features)
        if not 0 <= args.index < features.shape[0]:
            raise ContractError(
                f"Sample index {args.index} out of range for {features.shape[0]} samples"
            )
        sample = Tensor.wrap(features.data[args.index : args.index + 1])
        z = flow_forward(sample.astype(model.precision), model).z
        source = "features"
    else:
        rng = np.random.default_rng(args.seed)
        z = Tensor(rng.standard_normal((1,) + dims), precision=model.precision)
        source = "sampled"

    perturbed = z
    for site, magnitude in args.perturb or []:
        perturbed = perturb_latent(perturbed, [site], magnitude)

    baseline = generate_from_latent(z, model)
    generated = generate_from_latent(perturbed, model)
    write_features(generated, args.out)

    if args.channel_dir:
        directory = Path(args.channel_dir)
        directory.mkdir(parents=True, exist_ok=True)
        for c in range(dims[0]):
            write_pgm(generated.data[0, c], directory / f"feature_c{c:02d}.pgm")
            write_pgm(perturbed.data[0, c], directory / f"latent_c{c:02d}.pgm")

    change = np.abs(generated.data.astype(np.float64) - baseline.data.astype(np.float64))
    return {
        "out": str(args.out),
        "shape": list(generated.shape),
        "source": source,
        "perturbations": len(args.perturb or []),
        "max_abs_change": float(change.max()),
    }


def cmd_verify(args: argparse.Namespace, logger: Logger) -> Dict[str, Any]:
    return VerifySuite(level=args.level, seed=args.seed, logger=logger).run_or_raise()


def cmd_ablate(args: argparse.Namespace, logger: Logger) -> Dict[str, Any]:
    precision = Precision.default()
    train_set = load_feature_set(read_manifest(args.train_manifest), precision=precision)
    test_set = load_feature_set(read_manifest(args.test_manifest), precision=precision)
    if not train_set.all_normal:
        raise ContractError(f"{args.train_manifest}: training manifest contains anomalous records")
    base = TrainConfig(
        epochs=args.epochs,
        learning_rate=args.lr,
        batch_size=args.batch,
        seed=args.seed,
    )
    entries = EvaluationManager(logger=logger).run_ablation(
        train_set.features,
        test_set,
        base,
        variants=[SubnetVariant(v) for v in args.variants],
        steps=args.steps,
    )
    return {"entries": [entry.model_dump() for entry in entries]}


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with the contract-error code."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="cainn-flow",
        description="CBAM-augmented coupling flows for unsupervised anomaly localisation",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen-data", help="write the synthetic texture benchmark")
    gen.add_argument("--out", required=True, help="dataset directory")
    gen.add_argument("--n-train", type=int, default=200)
    gen.add_argument("--n-test-normal", type=int, default=40)
    gen.add_argument("--n-test-anomalous", type=int, default=40)
    gen.add_argument("--image-size", type=int, default=SynthConfig.DEFAULT_IMAGE_SIZE)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--extractor-seed", type=int, default=0)
    synth = SynthConfig.model_fields
    gen.add_argument("--intensity-shift", type=float, default=synth["intensity_shift"].default)
    gen.add_argument(
        "--anomaly-texture-sigma",
        type=float,
        default=synth["anomaly_texture_sigma"].default,
        help="smoothing of the texture inside anomalies, 0 for white noise",
    )
    gen.add_argument("--anomaly-min-size", type=int, default=synth["anomaly_min_size"].default)
    gen.add_argument("--anomaly-max-size", type=int, default=synth["anomaly_max_size"].default)
    gen.set_defaults(handler=cmd_gen_data)

    train = commands.add_parser("train", help="fit a flow to normal features")
    train.add_argument("--manifest", required=True)
    train.add_argument("--variant", type=str.upper, choices=VARIANT_CHOICES, default="CAC")
    train.add_argument("--steps", type=int, default=TrainConfig.DEFAULT_STEPS)
    train.add_argument("--lr", type=float, default=TrainConfig.DEFAULT_LEARNING_RATE)
    train.add_argument("--epochs", type=int, default=TrainConfig.DEFAULT_EPOCHS)
    train.add_argument("--batch", type=int, default=32)
    train.add_argument("--seed", type=int, default=0)
    train.add_argument(
        "--clamp-alpha",
        type=_clamp_alpha,
        default=TrainConfig.DEFAULT_CLAMP_ALPHA,
        help="soft clamp bound for s, or 'none'",
    )
    train.add_argument("--hidden-channels", type=int, default=None)
    train.add_argument("--reduction-ratio", type=int, default=16)
    train.add_argument("--out", required=True, help="checkpoint path")
    train.set_defaults(handler=cmd_train)

    evaluate = commands.add_parser("eval", help="image and pixel AUROC on a labelled manifest")
    evaluate.add_argument("--manifest", required=True)
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--heatmap-dir", default=None)
    evaluate.set_defaults(handler=cmd_eval)

    score = commands.add_parser("score", help="anomaly maps for every sample of a feature file")
    score.add_argument("--checkpoint", required=True)
    score.add_argument("--features", required=True)
    score.add_argument("--image-size", type=int, nargs=2, metavar=("H", "W"), default=None)
    score.add_argument("--heatmap-dir", default=None)
    score.set_defaults(handler=cmd_score)

    generate = commands.add_parser("generate", help="invert a (perturbed) latent")
    generate.add_argument("--checkpoint", required=True)
    generate.add_argument("--features", default=None, help="take the latent of this sample")
    generate.add_argument("--index", type=int, default=0)
    generate.add_argument("--seed", type=int, default=0, help="seed for a sampled latent")
    generate.add_argument("--perturb", type=_perturbation, action="append", metavar="C,H,W,MAG")
    generate.add_argument("--channel-dir", default=None)
    generate.add_argument("--out", required=True)
    generate.set_defaults(handler=cmd_generate)

    verify = commands.add_parser("verify", help="run the invariant suite")
    verify.add_argument("--level", choices=["fast", "full"], default="fast")
    verify.add_argument("--seed", type=int, default=0)
    verify.set_defaults(handler=cmd_verify)

    ablate = commands.add_parser("ablate", help="compare subnet variants and step counts")
    ablate.add_argument("--train-manifest", required=True)
    ablate.add_argument("--test-manifest", required=True)
    ablate.add_argument(
        "--variants", type=str.upper, nargs="+", choices=VARIANT_CHOICES, default=VARIANT_CHOICES
    )
    ablate.add_argument("--steps", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    ablate.add_argument("--epochs", type=int, default=20)
    ablate.add_argument("--lr", type=float, default=TrainConfig.DEFAULT_LEARNING_RATE)
    ablate.add_argument("--batch", type=int, default=32)
    ablate.add_argument("--seed", type=int, default=0)
    ablate.set_defaults(handler=cmd_ablate)
    return parser


def _emit(document: Dict[str, Any]) -> None:
    sys.stdout.write(json.dumps(document) + "\n")
    sys.stdout.flush()


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    base_logger = Logger()
    log = base_logger.get_component_logger("CLI")
    try:
        settings = RuntimeSettings()
        base_logger.logger.setLevel(getattr(logging, settings.log_level))
        document = args.handler(args, base_logger)
    except VerificationFailure as e:
        if e.report is not None:
            _emit(e.report)
        log.error(str(e), command=args.command)
        return e.exit_code
    except CainnError as e:
        log.error(str(e), command=args.command, error=type(e).__name__)
        return e.exit_code
    except ValidationError as e:
        log.error(f"Invalid configuration: {e}", command=args.command)
        return 1
    except OSError as e:
        log.error(f"I/O error: {e}", command=args.command)
        return 2
    _emit(document)
    return 0


if __name__ == "__main__":
    sys.exit(main())
