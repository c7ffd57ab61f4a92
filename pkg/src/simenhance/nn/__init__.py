"""Small NumPy neural-network kernel: dense, conv1d, max-pool and batch-norm
layers, MSE/BCE losses, Adam, finite-difference checks and checkpoints."""
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, gradient_check
from .layers import (
    Activation,
    BatchNorm,
    Conv1D,
    Flatten,
    FullyConnected,
    Layer,
    MaxPool1D,
    Reshape,
    leaky_relu,
)
from .losses import bce_loss, mse_loss
from .model import AdamConfig, NetworkModel, adam_step, compose_shapes

__all__ = [
    "Activation", "AdamConfig", "BatchNorm", "Conv1D", "Flatten", "FullyConnected",
    "GradCheckReport", "Layer", "MaxPool1D", "NetworkModel", "Reshape", "adam_step",
    "bce_loss", "compose_shapes", "gradient_check", "leaky_relu", "load_checkpoint",
    "mse_loss", "save_checkpoint",
]
