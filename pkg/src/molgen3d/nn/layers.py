"""Parameters, modules, and the layers shared by the LM and diffusion nets."""

from __future__ import annotations

import math

import numpy as np

from .rng import RngStream
from .tensor import ShapeError, Tensor, concat, gelu, layer_norm, matmul, softmax


class Parameter(Tensor):
    __slots__ = ("name",)

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True)
        self.name = name


class Module:
    """Plain attribute-walking module tree; no registration calls needed."""

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        out: list[tuple[str, Parameter]] = []
        for attr, value in vars(self).items():
            path = f"{prefix}{attr}"
            out.extend(_collect(value, path))
        return out

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise KeyError(f"state mismatch; missing={missing}, unexpected={extra}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.data.shape:
                raise ShapeError(
                    f"{name}: checkpoint shape {arr.shape} != model {p.data.shape}"
                )
            p.data = arr.astype(p.data.dtype)


def _collect(value, path: str) -> list[tuple[str, Parameter]]:
    if isinstance(value, Parameter):
        return [(path, value)]
    if isinstance(value, Module):
        return value.named_parameters(prefix=path + ".")
    if isinstance(value, (list, tuple)):
        out = []
        for i, item in enumerate(value):
            out.extend(_collect(item, f"{path}.{i}"))
        return out
    return []


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: RngStream, zero_init: bool = False):
        if zero_init:
            w = np.zeros((d_in, d_out))
        else:
            w = rng.normal((d_in, d_out), std=1.0 / math.sqrt(d_in))
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(d_out))

    def __call__(self, x: Tensor) -> Tensor:
        return matmul(x, self.weight) + self.bias


class FeedForward(Module):
    """Two-layer gelu MLP, the transformer position-wise block."""

    def __init__(self, d_model: int, d_hidden: int, rng: RngStream):
        self.lift = Linear(d_model, d_hidden, rng.substream("lift"))
        self.drop = Linear(d_hidden, d_model, rng.substream("drop"))

    def __call__(self, x: Tensor) -> Tensor:
        return self.drop(gelu(self.lift(x)))


class Embedding(Module):
    def __init__(self, n_rows: int, d_model: int, rng: RngStream, std: float = 0.02):
        self.table = Parameter(rng.normal((n_rows, d_model), std=std))

    def __call__(self, ids: np.ndarray) -> Tensor:
        from .tensor import embedding

        return embedding(self.table, ids)


def rope_tables(t_max: int, d_head: int, base: float = 10000.0):
    """Rotary-embedding cos/sin lookup tables, each (t_max, d_head/2)."""
    if d_head % 2:
        raise ShapeError(f"rotary embedding needs an even head dim, got {d_head}")
    inv = base ** (-np.arange(0, d_head, 2) / d_head)
    ang = np.outer(np.arange(t_max), inv)
    return np.cos(ang), np.sin(ang)


def apply_rope(x: Tensor, cos: np.ndarray, sin: np.ndarray) -> Tensor:
    """Rotate head-dim pairs by position-dependent angles; x is (B,h,T,d)."""
    t = x.shape[-2]
    d = x.shape[-1]
    c = cos[:t][None, None]
    s = sin[:t][None, None]
    x1 = x[..., : d // 2]
    x2 = x[..., d // 2 :]
    return concat([x1 * c - x2 * s, x1 * s + x2 * c], axis=-1)


class MultiHeadAttention(Module):
    """Scaled dot-product attention with optional rotary positions and an
    additive per-head logit bias (used for pair-feature conditioning)."""

    def __init__(self, d_model: int, n_heads: int, rng: RngStream, rope: bool = False,
                 t_max: int = 2048):
        if d_model % n_heads:
            raise ShapeError(f"d_model {d_model} not divisible by heads {n_heads}")
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.wq = Linear(d_model, d_model, rng.substream("wq"))
        self.wk = Linear(d_model, d_model, rng.substream("wk"))
        self.wv = Linear(d_model, d_model, rng.substream("wv"))
        self.wo = Linear(d_model, d_model, rng.substream("wo"))
        self._rope = rope_tables(t_max, self.d_head) if rope else None

    def _heads(self, x: Tensor) -> Tensor:
        b, t, _ = x.shape
        return x.reshape(b, t, self.n_heads, self.d_head).transpose((0, 2, 1, 3))

    def __call__(
        self,
        query_set: Tensor,
        key_value_set: Tensor | None = None,
        mask: np.ndarray | None = None,
        bias: Tensor | None = None,
    ) -> Tensor:
        """mask: constant bool, broadcastable to (B, heads, Tq, Tk), True =
        attend; a fully masked query row yields a zero output row."""
        kv = query_set if key_value_set is None else key_value_set
        q = self._heads(self.wq(query_set))
        k = self._heads(self.wk(kv))
        v = self._heads(self.wv(kv))
        if self._rope is not None:
            cos, sin = self._rope
            q = apply_rope(q, cos, sin)
            k = apply_rope(k, cos, sin)
        logits = matmul(q, k.swapaxes(-1, -2)) * (1.0 / math.sqrt(self.d_head))
        if bias is not None:
            logits = logits + bias
        att = softmax(logits, mask=mask)
        mixed = matmul(att, v)
        b, _, t, _ = mixed.shape
        merged = mixed.transpose((0, 2, 1, 3)).reshape(b, t, self.n_heads * self.d_head)
        return self.wo(merged)


class AdaLNModulate(Module):
    """Condition-gated normalization for diffusion blocks.

    out = gate * ((1 + scale) * layer_norm_no_affine(x) + shift), with
    gate/scale/shift all linear in the condition and zero-initialized, so a
    fresh block contributes exactly nothing to its residual stream. The
    unit offset on scale keeps the gate's gradient alive at init (a raw
    zero-init product would start at a gradient fixed point).
    """

    def __init__(self, d_cond: int, d_model: int, rng: RngStream):
        self.proj = Linear(d_cond, 3 * d_model, rng, zero_init=True)
        self.d_model = d_model

    def __call__(self, x: Tensor, condition: Tensor) -> Tensor:
        if condition.shape[-1] != self.proj.weight.shape[0]:
            raise ShapeError(
                f"condition dim {condition.shape[-1]} != {self.proj.weight.shape[0]}"
            )
        msg = self.proj(condition)
        if x.ndim == 3 and msg.ndim == 2:
            msg = msg.reshape(msg.shape[0], 1, msg.shape[1])
        d = self.d_model
        scale = msg[..., 0:d]
        shift = msg[..., d : 2 * d]
        gate = msg[..., 2 * d : 3 * d]
        return gate * ((1.0 + scale) * layer_norm(x) + shift)


def adalnw_modulate(x: Tensor, condition: Tensor, module: AdaLNModulate) -> Tensor:
    return module(x, condition)


def sinusoidal_embedding(values: np.ndarray, dim: int, max_period: float = 10000.0):
    """Classic fixed sin/cos features of a scalar per row; (N,) -> (N, dim)."""
    if dim % 2:
        raise ShapeError(f"sinusoidal embedding dim must be even, got {dim}")
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    freqs = np.exp(-math.log(max_period) * np.arange(dim // 2) / (dim // 2))
    ang = values[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=-1)
