"""Optimisation: Adam, the warmup schedule, batching and the fine-tuning protocol."""

from .config import ConfigFileError, TrainConfig, dump_kv, from_kv, load_kv, parse_kv, save_kv
from .optim import AdamState, NonFiniteGradient, adam_step, noam_lr
from .trainer import (
    TrainingError,
    TrainResult,
    TrainState,
    check_compatibility,
    evaluate_loss,
    finetune_context_model,
    make_buckets,
    resume,
    train,
    warm_start,
)
