"""Condition bridge: learnable queries read frozen LM states into a vector.

A set of trainable query embeddings is concatenated behind the per-token
hidden states of a molecule string; a bidirectional transformer encoder
mixes the two; the query slots are mean-pooled and pushed through a small
FFN to the diffusion model's conditioning width. The result fuses with the
sinusoidal timestep embedding (and, when conditioning on a property, a
property embedding) by element-wise addition.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn.layers import (
    FeedForward,
    Linear,
    Module,
    MultiHeadAttention,
    Parameter,
    sinusoidal_embedding,
)
from .nn.rng import RngStream
from .nn.tensor import ShapeError, Tensor, concat, gelu, layer_norm


@dataclass
class ProjectorConfig:
    n_layers: int = 4
    hidden_dim: int = 256
    n_heads: int = 8
    ffn_dim: int = 512
    n_queries: int = 64
    cond_dim: int = 128


class _EncoderBlock(Module):
    def __init__(self, cfg: ProjectorConfig, rng: RngStream):
        self.attn = MultiHeadAttention(cfg.hidden_dim, cfg.n_heads, rng.substream("attn"))
        self.ffn = FeedForward(cfg.hidden_dim, cfg.ffn_dim, rng.substream("ffn"))

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        x = x + self.attn(layer_norm(x), mask=mask)
        x = x + self.ffn(layer_norm(x))
        return x


class ConditionBridge(Module):
    """project (queries + bidirectional encoder), condense (pool + FFN)."""

    def __init__(self, cfg: ProjectorConfig, lm_hidden_dim: int, rng: RngStream):
        self.cfg = cfg
        self.queries = Parameter(
            rng.substream("queries").normal((cfg.n_queries, cfg.hidden_dim), std=0.02)
        )
        self.adapt = (
            Linear(lm_hidden_dim, cfg.hidden_dim, rng.substream("adapt"))
            if lm_hidden_dim != cfg.hidden_dim
            else None
        )
        self.blocks = [
            _EncoderBlock(cfg, rng.substream(f"block{i}")) for i in range(cfg.n_layers)
        ]
        self.pool_lift = Linear(cfg.hidden_dim, cfg.ffn_dim, rng.substream("pool_lift"))
        self.pool_emit = Linear(cfg.ffn_dim, cfg.cond_dim, rng.substream("pool_emit"))

    # -- project -------------------------------------------------------------

    def project(self, states: np.ndarray | Tensor, lengths: list[int] | None = None) -> Tensor:
        """Query-slot outputs after bidirectional mixing with the states.

        states: (L, D_lm) for one molecule or (B, L, D_lm) padded batch;
        lengths gives the true token count per row (padding rows beyond it
        are masked out of every attention, so output is padding-invariant).
        Returns (B, N_Q, hidden_dim); B = 1 for the single-molecule form.
        """
        h = states if isinstance(states, Tensor) else Tensor(states)
        if h.ndim == 2:
            h = h.reshape(1, *h.shape)
        b, seq_len, _ = h.shape
        if self.adapt is not None:
            h = self.adapt(h)
        elif h.shape[-1] != self.cfg.hidden_dim:
            raise ShapeError(
                f"state width {h.shape[-1]} != projector width {self.cfg.hidden_dim}"
            )
        n_q = self.cfg.n_queries
        q = self.queries.reshape(1, n_q, self.cfg.hidden_dim)
        if b > 1:
            q = concat([q] * b, axis=0)
        x = concat([h, q], axis=1)
        total = seq_len + n_q
        keep_key = np.ones((b, total), dtype=bool)
        if lengths is not None:
            if len(lengths) != b:
                raise ShapeError(f"{len(lengths)} lengths for batch of {b}")
            for r, n in enumerate(lengths):
                keep_key[r, n:seq_len] = False
        mask = keep_key[:, None, None, :]
        for block in self.blocks:
            x = block(x, mask)
        return x[:, seq_len:, :]

    # -- condense ------------------------------------------------------------

    def condense(self, query_out: Tensor) -> Tensor:
        """(B, N_Q, hidden) -> (B, cond_dim): mean over slots, then FFN."""
        pooled = query_out.mean(axis=-2)
        return self.pool_emit(gelu(self.pool_lift(pooled)))

    def __call__(self, states, lengths: list[int] | None = None) -> Tensor:
        return self.condense(self.project(states, lengths))


class TimestepEmbedding(Module):
    """Sinusoidal features of t/T refined by a two-layer MLP to cond_dim."""

    def __init__(self, cond_dim: int, rng: RngStream, sin_dim: int = 128):
        self.sin_dim = sin_dim
        self.lift = Linear(sin_dim, cond_dim, rng.substream("lift"))
        self.emit = Linear(cond_dim, cond_dim, rng.substream("emit"))

    def __call__(self, t: np.ndarray, total_steps: int) -> Tensor:
        frac = np.asarray(t, dtype=np.float64).reshape(-1) / float(total_steps)
        feats = sinusoidal_embedding(frac * 1000.0, self.sin_dim)
        return self.emit(gelu(self.lift(Tensor(feats))))


class PropertyEmbedding(Module):
    """z-scored property scalar -> two-layer MLP -> cond_dim vector."""

    def __init__(self, cond_dim: int, rng: RngStream, d_mid: int = 64):
        self.lift = Linear(1, d_mid, rng.substream("lift"))
        self.emit = Linear(d_mid, cond_dim, rng.substream("emit"))

    def __call__(self, values: np.ndarray, normalizer: tuple[float, float]) -> Tensor:
        mean, std = normalizer
        if std <= 0:
            raise ValueError(f"normalizer std must be positive, got {std}")
        z = (np.asarray(values, dtype=np.float64).reshape(-1, 1) - mean) / std
        return self.emit(gelu(self.lift(Tensor(z))))


def fuse_condition(
    c_chem: Tensor | None,
    t_emb: Tensor,
    prop_emb: Tensor | None = None,
) -> Tensor:
    """Element-wise sum of whichever condition terms are present."""
    out = t_emb
    for term in (c_chem, prop_emb):
        if term is None:
            continue
        if term.shape[-1] != t_emb.shape[-1]:
            raise ShapeError(
                f"condition width {term.shape[-1]} != time width {t_emb.shape[-1]}"
            )
        out = out + term
    return out
