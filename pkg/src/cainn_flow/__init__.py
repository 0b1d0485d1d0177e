from .core.tensor import ConvKernel, Precision, Tensor
from .factories.flow_factory import FlowFactory
from .flows.flow_model import FeatureNorm, FlowModel, FlowOutput, flow_forward, flow_inverse
from .managers.checkpoint_manager import CheckpointManager, load_checkpoint, save_checkpoint
from .managers.evaluation_manager import EvaluationManager, evaluate, run_ablation
from .managers.training_manager import TrainingManager, train
from .models.results import AnomalyMap, EvalResult
from .models.subnet_config import SubnetConfig, SubnetVariant
from .models.train_config import TrainConfig

__all__ = [
    "AnomalyMap",
    "CheckpointManager",
    "ConvKernel",
    "EvalResult",
    "EvaluationManager",
    "FeatureNorm",
    "FlowFactory",
    "FlowModel",
    "FlowOutput",
    "Precision",
    "SubnetConfig",
    "SubnetVariant",
    "Tensor",
    "TrainConfig",
    "TrainingManager",
    "evaluate",
    "flow_forward",
    "flow_inverse",
    "load_checkpoint",
    "run_ablation",
    "save_checkpoint",
    "train",
]
