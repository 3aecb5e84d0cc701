"""Trainable feature post-processing: layer stack, losses, augmentation,
optimization, and checkpoints."""

from .augment import (PairBatch, TrainingVariant, apply_dropout, augment_pair,
                      draw_channel_mask)
from .checkpoint import load_checkpoint, save_checkpoint
from .loop import (TrainConfig, TraceRow, draw_step_noise, evaluate_step,
                   finite_diff_check, step_variants, train, write_trace)
from .losses import contrastive_loss, loss_dense, loss_sparse, total_loss
from .optim import AdamW, one_cycle_lr
from .stack import LayerSpec, PostProcessor, bottleneck_specs, postprocess

__all__ = [
    "AdamW", "LayerSpec", "PairBatch", "PostProcessor", "TraceRow",
    "TrainConfig", "TrainingVariant", "apply_dropout", "augment_pair",
    "bottleneck_specs", "contrastive_loss", "draw_channel_mask",
    "draw_step_noise", "evaluate_step", "finite_diff_check",
    "load_checkpoint", "loss_dense", "loss_sparse", "one_cycle_lr",
    "postprocess", "save_checkpoint", "step_variants", "total_loss", "train",
    "write_trace",
]
