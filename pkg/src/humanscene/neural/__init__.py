from .autodiff import Tensor
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .model import LAYOUT_DIM, PROFILES, GraphTransformer, ModelConfig, ModelInput
from .train import (
    OptimizerState,
    TrainConfig,
    TrainingDiverged,
    adamw_update,
    compute_gradients,
    ema_update,
    gradient_check,
    train_step,
)

__all__ = [
    "LAYOUT_DIM",
    "PROFILES",
    "CheckpointError",
    "GraphTransformer",
    "ModelConfig",
    "ModelInput",
    "OptimizerState",
    "Tensor",
    "TrainConfig",
    "TrainingDiverged",
    "adamw_update",
    "compute_gradients",
    "ema_update",
    "gradient_check",
    "load_checkpoint",
    "save_checkpoint",
    "train_step",
]
