"""Desk-scale transformer and trainer for exercising the supervision pipeline.

Everything here runs on CPU in float64 with a few thousand parameters; the
point is to verify the pipeline end to end (gradients, losses, the layout
mask, the grounded-vs-random masking comparison) rather than to train
anything of consequence.
"""

from .model import ToyModel, ToyModelConfig
from .losses import LossReport, i2t_loss, masked_mse, masked_nll
from .synthetic import SyntheticSample, generate_batch, generate_synthetic
from .training import (
    TrainingRun,
    finite_diff_gradient_check,
    grounding_precision,
    masked_reconstruction_error,
    run_training,
    train_step,
)

__all__ = [
    "ToyModel",
    "ToyModelConfig",
    "LossReport",
    "i2t_loss",
    "masked_mse",
    "masked_nll",
    "SyntheticSample",
    "generate_batch",
    "generate_synthetic",
    "TrainingRun",
    "finite_diff_gradient_check",
    "grounding_precision",
    "masked_reconstruction_error",
    "run_training",
    "train_step",
]
