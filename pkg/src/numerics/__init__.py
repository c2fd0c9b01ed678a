"""
Dense tensors, reverse-mode gradients, initialization, optimizers and checkpoints
"""

from src.numerics.checkpoint import read_checkpoint, write_checkpoint
from src.numerics.gradcheck import finite_difference_check
from src.numerics.optim import (
    OptimizerConfig,
    adam_step,
    learning_rate_at,
    optimizer_step,
    sgd_step,
)
from src.numerics.params import ParameterSet, xavier_init
from src.numerics.recurrent import lstm_recurrence, reverse_sequences
from src.numerics.tensor import Tensor, as_tensor, backward, concat

__all__ = [
    "OptimizerConfig",
    "ParameterSet",
    "Tensor",
    "adam_step",
    "as_tensor",
    "backward",
    "concat",
    "finite_difference_check",
    "learning_rate_at",
    "lstm_recurrence",
    "optimizer_step",
    "read_checkpoint",
    "reverse_sequences",
    "sgd_step",
    "write_checkpoint",
    "xavier_init",
]
