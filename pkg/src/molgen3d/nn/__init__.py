"""Numerical substrate: autodiff tensors, layers, optimizer, checkpoints."""

from .checkpoint import checkpoint_byte_hash, load_checkpoint, save_checkpoint
from .layers import (
    AdaLNModulate,
    Embedding,
    FeedForward,
    Linear,
    Module,
    MultiHeadAttention,
    Parameter,
    adalnw_modulate,
    apply_rope,
    rope_tables,
    sinusoidal_embedding,
)
from .optim import AdamW, WarmupCosineSchedule, clip_global_norm
from .rng import GENERATOR_NAME, RngStream
from .tensor import (
    ShapeError,
    Tensor,
    concat,
    cross_entropy,
    embedding,
    finite_check,
    gelu,
    layer_norm,
    matmul,
    mse,
    no_grad,
    precision,
    softmax,
)

__all__ = [
    "checkpoint_byte_hash",
    "load_checkpoint",
    "save_checkpoint",
    "AdaLNModulate",
    "Embedding",
    "FeedForward",
    "Linear",
    "Module",
    "MultiHeadAttention",
    "Parameter",
    "adalnw_modulate",
    "apply_rope",
    "rope_tables",
    "sinusoidal_embedding",
    "AdamW",
    "WarmupCosineSchedule",
    "clip_global_norm",
    "GENERATOR_NAME",
    "RngStream",
    "ShapeError",
    "Tensor",
    "concat",
    "cross_entropy",
    "embedding",
    "finite_check",
    "gelu",
    "layer_norm",
    "matmul",
    "mse",
    "no_grad",
    "precision",
    "softmax",
]
