"""Base Transformer and the context-aware variants built on it."""

from .checkpoint import (
    CheckpointError,
    load_contextlm,
    load_model,
    read_checkpoint,
    save_contextlm,
    save_model,
)
from .config import VARIANTS, ConfigError, ModelConfig, base_config, parse_variant
from .contextlm import ContextLM, ContextLMConfig, VocabMismatch, pretrain_context_lm
from .layers import gate_combine, gate_values
from .model import (
    Batch,
    ContextInjection,
    DocTransformer,
    Memory,
    count_params,
    encode,
    forward_in_par,
    forward_in_seq,
    forward_multi_out,
    forward_seq_emb,
    forward_wordemb,
    random_vec_context,
    single_vec_context,
)
