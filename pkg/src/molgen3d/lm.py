"""Decoder-only autoregressive transformer over molecular token streams.

The desk-scale foundation model: trains with teacher forcing on encoded
molecule strings, samples new strings (ancestral or beam), and serves
frozen per-token hidden states to the condition bridge. Property
conditioning enters as a soft prompt: a z-scored scalar mapped by a small
MLP to k virtual token embeddings prepended to the sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nn.layers import (
    Embedding,
    FeedForward,
    Linear,
    Module,
    MultiHeadAttention,
    Parameter,
)
from .nn.optim import AdamW, WarmupCosineSchedule, clip_global_norm
from .nn.rng import RngStream
from .nn.tensor import Tensor, concat, cross_entropy, layer_norm, no_grad
from .selfies import SelfiesTokenStream, Vocabulary, default_vocabulary


class SequenceTooLongError(ValueError):
    """A stream exceeds the model's maximum sequence length."""


@dataclass
class LmConfig:
    vocab_size: int
    n_layers: int = 4
    hidden_dim: int = 256
    n_heads: int = 8
    max_seq_len: int = 96
    dropout_rate: float = 0.0

    def __post_init__(self):
        if self.hidden_dim % self.n_heads:
            raise ValueError(
                f"hidden_dim {self.hidden_dim} not divisible by n_heads {self.n_heads}"
            )


@dataclass
class SoftPrompt:
    k: int
    embeddings: Tensor  # (k, hidden_dim)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("soft prompt needs k >= 1")
        if self.embeddings.shape[0] != self.k:
            raise ValueError(
                f"prompt length {self.k} != embedding rows {self.embeddings.shape[0]}"
            )


class PropertyPromptNet(Module):
    """z-scored scalar -> two-layer MLP -> k x hidden_dim prompt embeddings."""

    def __init__(self, hidden_dim: int, k: int, rng: RngStream, d_mid: int = 64):
        self.k = k
        self.hidden_dim = hidden_dim
        self.lift = Linear(1, d_mid, rng.substream("lift"))
        self.emit = Linear(d_mid, k * hidden_dim, rng.substream("emit"))

    def __call__(self, z: Tensor) -> Tensor:
        from .nn.tensor import gelu

        return self.emit(gelu(self.lift(z)))


def make_soft_prompt(
    net: PropertyPromptNet, property_value: float, normalizer: tuple[float, float]
) -> SoftPrompt:
    mean, std = normalizer
    if std <= 0:
        raise ValueError(f"normalizer std must be positive, got {std}")
    z = Tensor(np.asarray([[(property_value - mean) / std]]))
    flat = net(z)  # (1, k*hidden)
    return SoftPrompt(net.k, flat.reshape(net.k, net.hidden_dim))


class _Block(Module):
    def __init__(self, cfg: LmConfig, rng: RngStream, t_max: int):
        self.attn = MultiHeadAttention(
            cfg.hidden_dim, cfg.n_heads, rng.substream("attn"), rope=True, t_max=t_max
        )
        self.ffn = FeedForward(cfg.hidden_dim, 4 * cfg.hidden_dim, rng.substream("ffn"))

    def __call__(self, x: Tensor, mask: np.ndarray, drop) -> Tensor:
        x = x + drop(self.attn(layer_norm(x), mask=mask))
        x = x + drop(self.ffn(layer_norm(x)))
        return x


class LanguageModel(Module):
    def __init__(self, cfg: LmConfig, rng: RngStream, vocab: Vocabulary | None = None):
        self.cfg = cfg
        self.vocab = vocab or default_vocabulary()
        if len(self.vocab) != cfg.vocab_size:
            raise ValueError(
                f"config vocab_size {cfg.vocab_size} != vocabulary {len(self.vocab)}"
            )
        # Headroom for the bos token and a soft prompt in front of a
        # max-length stream.
        self._t_max = cfg.max_seq_len + 17
        self.tok = Embedding(cfg.vocab_size, cfg.hidden_dim, rng.substream("tok"))
        self.blocks = [
            _Block(cfg, rng.substream(f"block{i}"), self._t_max)
            for i in range(cfg.n_layers)
        ]
        self.head = Linear(cfg.hidden_dim, cfg.vocab_size, rng.substream("head"))
        self.head.weight.data = (
            rng.substream("head_scale").normal(self.head.weight.shape, std=0.02)
        ).astype(self.head.weight.data.dtype)

    # -- forward ------------------------------------------------------------

    def _masks(self, ids: np.ndarray, k_prompt: int) -> np.ndarray:
        """(B,1,T,T) causal mask that also hides [pad] keys."""
        b, t_ids = ids.shape
        t = t_ids + k_prompt
        causal = np.tril(np.ones((t, t), dtype=bool))
        keep_key = np.ones((b, t), dtype=bool)
        keep_key[:, k_prompt:] = ids != self.vocab.pad_id
        return causal[None, None] & keep_key[:, None, None, :]

    def _trunk(
        self,
        ids: np.ndarray,
        prompt: Tensor | None = None,
        dropout_rng: RngStream | None = None,
    ) -> Tensor:
        """Final-layer, final-norm states over [prompt] + ids; (B,T,D)."""
        ids = np.asarray(ids)
        if ids.ndim != 2:
            raise ValueError(f"ids must be (B, T), got {ids.shape}")
        k_prompt = 0
        x = self.tok(ids)
        if prompt is not None:
            if prompt.ndim == 2:
                prompt = prompt.reshape(1, *prompt.shape)
            if prompt.shape[0] == 1 and ids.shape[0] > 1:
                reps = [prompt] * ids.shape[0]
                prompt = concat(reps, axis=0)
            k_prompt = prompt.shape[1]
            x = concat([prompt, x], axis=1)
        total = x.shape[1]
        if total > self._t_max:
            raise SequenceTooLongError(
                f"sequence of {total} exceeds positional table {self._t_max}"
            )
        mask = self._masks(ids, k_prompt)
        rate = self.cfg.dropout_rate

        if dropout_rng is None or rate <= 0.0:
            def drop(t: Tensor) -> Tensor:
                return t
        else:
            def drop(t: Tensor) -> Tensor:
                keep = dropout_rng.uniform(t.shape) >= rate
                return t * (keep / (1.0 - rate))

        for block in self.blocks:
            x = block(x, mask, drop)
        x = layer_norm(x)
        if k_prompt:
            x = x[:, k_prompt:, :]
        return x

    def logits(
        self,
        ids: np.ndarray,
        prompt: Tensor | None = None,
        dropout_rng: RngStream | None = None,
    ) -> Tensor:
        return self.head(self._trunk(ids, prompt, dropout_rng))

    def loss(
        self,
        input_ids: np.ndarray,
        target_ids: np.ndarray,
        prompt: Tensor | None = None,
        dropout_rng: RngStream | None = None,
    ) -> Tensor:
        logits = self.logits(input_ids, prompt, dropout_rng)
        return cross_entropy(logits, target_ids, ignore_id=self.vocab.pad_id)

    # -- frozen inference -----------------------------------------------------

    def hidden_states(self, stream: SelfiesTokenStream | list[int]) -> np.ndarray:
        """Final-layer representation of each stream token, (L, hidden_dim).

        Always detached: callers cannot backpropagate into the model. The
        stream is fed behind a [bos], so position i sees tokens 0..i.
        """
        ids = stream.vocab_ids if isinstance(stream, SelfiesTokenStream) else list(stream)
        if len(ids) == 0:
            raise ValueError("hidden_states needs a non-empty stream")
        if len(ids) > self.cfg.max_seq_len:
            raise SequenceTooLongError(
                f"stream length {len(ids)} > max_seq_len {self.cfg.max_seq_len}"
            )
        row = np.asarray([[self.vocab.bos_id, *ids]])
        with no_grad():
            out = self._trunk(row)
        return out.data[0, 1:, :].copy()


def batch_hidden_states(
    model: LanguageModel,
    streams: list,
    trainable: bool = False,
) -> tuple[Tensor, np.ndarray]:
    """Per-token final states for a padded batch; ((B, L_max, D), lengths).

    Pad keys are masked and sit after the real tokens, so each real row
    matches the single-stream hidden_states output exactly. trainable=True
    keeps the autodiff graph alive so the language model's parameters can
    receive gradients (the finetune ablation); the default detaches.
    """
    rows = [
        list(s.vocab_ids) if isinstance(s, SelfiesTokenStream) else list(s)
        for s in streams
    ]
    if not rows:
        raise ValueError("batch_hidden_states needs at least one stream")
    if any(len(r) == 0 for r in rows):
        raise ValueError("batch_hidden_states needs non-empty streams")
    lengths = np.asarray([len(r) for r in rows], dtype=np.int64)
    if lengths.max() > model.cfg.max_seq_len:
        raise SequenceTooLongError(
            f"stream length {int(lengths.max())} > max_seq_len {model.cfg.max_seq_len}"
        )
    ids = np.full((len(rows), int(lengths.max()) + 1), model.vocab.pad_id, dtype=np.int64)
    ids[:, 0] = model.vocab.bos_id
    for r, s in enumerate(rows):
        ids[r, 1 : 1 + len(s)] = s
    if trainable:
        return model._trunk(ids)[:, 1:, :], lengths
    with no_grad():
        out = model._trunk(ids)
    return Tensor(out.data[:, 1:, :].copy()), lengths


def batch_rows(
    vocab: Vocabulary, streams: list[list[int]]
) -> tuple[np.ndarray, np.ndarray]:
    """Teacher-forcing batch: inputs [bos] s, targets s [eos], pad-filled."""
    width = max(len(s) for s in streams) + 1
    inputs = np.full((len(streams), width), vocab.pad_id, dtype=np.int64)
    targets = np.full((len(streams), width), vocab.pad_id, dtype=np.int64)
    for r, s in enumerate(streams):
        inputs[r, 0] = vocab.bos_id
        inputs[r, 1 : 1 + len(s)] = s
        targets[r, : len(s)] = s
        targets[r, len(s)] = vocab.eos_id
    return inputs, targets


@dataclass
class LmTrainResult:
    model: "LanguageModel"
    epoch_perplexities: list[float] = field(default_factory=list)
    final_loss: float = float("nan")


def train_lm(
    corpus: list[SelfiesTokenStream],
    config: LmConfig,
    epochs: int,
    batch_size: int,
    rng: RngStream,
    lr: float = 3e-4,
    weight_decay: float = 0.0,
    grad_clip: float = 1.0,
    vocab: Vocabulary | None = None,
    model: LanguageModel | None = None,
    properties: list[float] | None = None,
    prompt_net: PropertyPromptNet | None = None,
    normalizer: tuple[float, float] | None = None,
    schedule: WarmupCosineSchedule | None = None,
    log=None,
    on_step=None,
) -> LmTrainResult:
    """Teacher-forced next-token training; returns model + per-epoch ppl.

    When properties/prompt_net/normalizer are all given, every sequence is
    preceded by its property soft prompt and the prompt net trains jointly.
    """
    vocab = vocab or default_vocabulary()
    if not corpus:
        raise ValueError("empty corpus")
    for i, s in enumerate(corpus):
        if len(s) + 1 > config.max_seq_len:
            raise SequenceTooLongError(
                f"corpus[{i}] has {len(s)} tokens; max_seq_len {config.max_seq_len}"
            )
    conditional = prompt_net is not None
    if conditional and (properties is None or normalizer is None):
        raise ValueError("conditional training needs properties and a normalizer")
    if properties is not None and len(properties) != len(corpus):
        raise ValueError("one property value per corpus entry required")

    if model is None:
        model = LanguageModel(config, rng.substream("init"), vocab)
    params = model.parameters()
    if conditional:
        params = params + prompt_net.parameters()
    opt = AdamW(params, lr=lr, weight_decay=weight_decay, schedule=schedule)
    order_rng = rng.substream("order")
    drop_rng = rng.substream("dropout") if config.dropout_rate > 0 else None

    ids_corpus = [list(s.vocab_ids) for s in corpus]
    result = LmTrainResult(model=model)
    step_count = 0
    for epoch in range(epochs):
        order = order_rng.permutation(len(ids_corpus))
        nll_sum = 0.0
        tok_sum = 0
        for lo in range(0, len(order), batch_size):
            sel = order[lo : lo + batch_size]
            rows = [ids_corpus[i] for i in sel]
            inputs, targets = batch_rows(vocab, rows)
            prompt = None
            if conditional:
                prompts = [
                    make_soft_prompt(prompt_net, properties[i], normalizer).embeddings
                    for i in sel
                ]
                prompt = concat([p.reshape(1, *p.shape) for p in prompts], axis=0)
            opt.zero_grad()
            loss = model.loss(inputs, targets, prompt=prompt, dropout_rng=drop_rng)
            loss.backward()
            clip_global_norm(params, grad_clip)
            step_lr = opt.step()
            step_count += 1
            if on_step is not None:
                on_step(step_count, loss.item(), step_lr)
            n_tok = int((targets != vocab.pad_id).sum())
            nll_sum += loss.item() * n_tok
            tok_sum += n_tok
            result.final_loss = loss.item()
        ppl = math.exp(nll_sum / max(tok_sum, 1))
        result.epoch_perplexities.append(ppl)
        if log is not None:
            log(f"epoch {epoch + 1}/{epochs} perplexity {ppl:.4f}")
    return result


def perplexity(
    model: LanguageModel,
    corpus: list[SelfiesTokenStream],
    batch_size: int = 64,
) -> float:
    """Teacher-forced eval perplexity over a corpus, dropout off."""
    vocab = model.vocab
    nll_sum = 0.0
    tok_sum = 0
    with no_grad():
        for lo in range(0, len(corpus), batch_size):
            rows = [list(s.vocab_ids) for s in corpus[lo : lo + batch_size]]
            inputs, targets = batch_rows(vocab, rows)
            loss = model.loss(inputs, targets)
            n_tok = int((targets != vocab.pad_id).sum())
            nll_sum += loss.item() * n_tok
            tok_sum += n_tok
    return math.exp(nll_sum / max(tok_sum, 1))


def _sample_logits_mask(vocab: Vocabulary) -> np.ndarray:
    """Structural tokens ([pad], [bos]) are never emitted while sampling."""
    keep = np.ones(len(vocab), dtype=bool)
    keep[vocab.pad_id] = False
    keep[vocab.bos_id] = False
    return keep


def sample_sequences(
    model: LanguageModel,
    n: int,
    temperature: float = 1.0,
    beam_size: int = 1,
    max_len: int | None = None,
    soft_prompt: SoftPrompt | None = None,
    rng: RngStream | None = None,
) -> list[SelfiesTokenStream]:
    """Draw n token streams; beam_size 1 = ancestral, larger = beam search.

    Beam search is deterministic; asking for more sequences than the beam
    holds cycles through the ranked beams.
    """
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    if n == 0:
        return []
    vocab = model.vocab
    max_len = max_len or model.cfg.max_seq_len - 1
    max_len = min(max_len, model.cfg.max_seq_len - 1)
    prompt = soft_prompt.embeddings if soft_prompt is not None else None
    keep = _sample_logits_mask(vocab)

    if beam_size <= 1:
        if rng is None:
            raise ValueError("ancestral sampling needs an rng")
        return [
            _sample_one(model, temperature, max_len, prompt, keep, rng)
            for _ in range(n)
        ]
    ranked = _beam_search(model, beam_size, temperature, max_len, prompt, keep)
    return [ranked[i % len(ranked)] for i in range(n)]


def _sample_one(model, temperature, max_len, prompt, keep, rng) -> SelfiesTokenStream:
    vocab = model.vocab
    ids: list[int] = []
    with no_grad():
        for _ in range(max_len):
            row = np.asarray([[vocab.bos_id, *ids]])
            logits = model.logits(row, prompt=prompt).data[0, -1] / temperature
            logits = np.where(keep, logits, -np.inf)
            if not ids:
                # An empty stream has no molecule; eos cannot come first.
                logits[vocab.eos_id] = -np.inf
            logits -= logits.max()
            p = np.exp(logits.astype(np.float64))
            p /= p.sum()
            tok = rng.choice(len(vocab), p)
            if tok == vocab.eos_id:
                break
            ids.append(tok)
    return SelfiesTokenStream.from_ids(ids, vocab)


def _beam_search(model, beam_size, temperature, max_len, prompt, keep):
    vocab = model.vocab
    # (ids, score, finished); score = sum of token log-probs
    beams: list[tuple[list[int], float, bool]] = [([], 0.0, False)]
    with no_grad():
        for _ in range(max_len):
            candidates: list[tuple[list[int], float, bool]] = []
            for ids, score, finished in beams:
                if finished:
                    candidates.append((ids, score, True))
                    continue
                row = np.asarray([[vocab.bos_id, *ids]])
                logits = model.logits(row, prompt=prompt).data[0, -1] / temperature
                logits = np.where(keep, logits, -np.inf).astype(np.float64)
                if not ids:
                    logits[vocab.eos_id] = -np.inf
                logits -= logits.max()
                logp = logits - math.log(np.exp(logits).sum())
                top = np.argsort(-logp)[: beam_size]
                for tok in top:
                    tok = int(tok)
                    if tok == vocab.eos_id:
                        candidates.append((ids, score + float(logp[tok]), True))
                    else:
                        candidates.append((ids + [tok], score + float(logp[tok]), False))
            candidates.sort(key=lambda c: (-c[1], c[0]))
            beams = candidates[:beam_size]
            if all(f for _, _, f in beams):
                break
    beams.sort(key=lambda c: (-c[1], c[0]))
    return [SelfiesTokenStream.from_ids(ids, vocab) for ids, _, _ in beams]
