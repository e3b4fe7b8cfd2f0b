"""Small dense-tensor kernel with tape-based reverse-mode differentiation."""

from .gradcheck import grad_check, relative_error
from .ops import (
    LAYER_NORM_EPS,
    add,
    broadcast_to,
    concat,
    cross_entropy,
    dropout,
    embedding_lookup,
    exp,
    getitem,
    layer_norm,
    log,
    log_softmax,
    masked_fill,
    matmul,
    mean,
    mul,
    relu,
    reshape,
    scale,
    scaled_dot_attention,
    sigmoid,
    softmax_rows,
    sub,
    sum,
    transpose,
)
from .tensor import (
    ContractViolation,
    DimensionError,
    Parameter,
    Tape,
    Tensor,
    active_tape,
    checked,
    default_dtype,
    no_tape,
    precision,
    set_default_dtype,
)

__all__ = [
    "LAYER_NORM_EPS",
    "ContractViolation",
    "DimensionError",
    "Parameter",
    "Tape",
    "Tensor",
    "active_tape",
    "add",
    "broadcast_to",
    "checked",
    "concat",
    "cross_entropy",
    "default_dtype",
    "dropout",
    "embedding_lookup",
    "exp",
    "getitem",
    "grad_check",
    "layer_norm",
    "log",
    "log_softmax",
    "masked_fill",
    "matmul",
    "mean",
    "mul",
    "no_tape",
    "precision",
    "relative_error",
    "relu",
    "reshape",
    "scale",
    "scaled_dot_attention",
    "set_default_dtype",
    "sigmoid",
    "softmax_rows",
    "sub",
    "sum",
    "transpose",
]
