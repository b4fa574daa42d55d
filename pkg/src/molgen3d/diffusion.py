"""Coordinate-denoising diffusion over conformers.

The 2D graph rides along as clean conditioning (atom one-hots, charges,
bond channels); only coordinates are noised. The denoiser is a stack of
relational attention blocks: pair features bias the attention logits, get
refreshed from outer products of atom states, and the whole stream is
gated by adaLN on the fused condition (timestep + bridge + property).
Translation is handled by center-of-mass projection of data, noise,
predictions, and samples; rotation by random augmentation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bridge import ConditionBridge, PropertyEmbedding, TimestepEmbedding, fuse_condition
from .chem.elements import ELEMENT_ORDER
from .chem.graph import Conformer, GeometricGraph, MolecularGraph2D
from .lm import LanguageModel, batch_hidden_states
from .nn.layers import (
    AdaLNModulate,
    FeedForward,
    Linear,
    Module,
    MultiHeadAttention,
)
from .nn.optim import AdamW, WarmupCosineSchedule, clip_global_norm
from .nn.rng import RngStream
from .nn.tensor import ShapeError, Tensor, gelu, layer_norm, mse, no_grad
from .selfies import SelfiesTokenStream


# -- schedule -----------------------------------------------------------------


@dataclass
class NoiseSchedule:
    """Tables indexed by t = 0..T; index 0 is the clean sentinel (ᾱ=1)."""

    kind: str
    T: int
    alpha_bar: np.ndarray  # (T+1,), alpha_bar[0] = 1
    beta: np.ndarray  # (T+1,), beta[0] = 0
    alpha: np.ndarray  # (T+1,), alpha[0] = 1

    @property
    def table(self) -> np.ndarray:
        """The length-T ᾱ table over t = 1..T."""
        return self.alpha_bar[1:]


def build_schedule(kind: str, T: int) -> NoiseSchedule:
    if T < 2:
        raise ValueError(f"schedule needs T >= 2, got {T}")
    t = np.arange(T + 1, dtype=np.float64)
    if kind == "cosine":
        s = 0.008
        f = np.cos((t / T + s) / (1 + s) * np.pi / 2.0) ** 2
        alpha_bar = np.clip(f / f[0], 1e-5, 1.0 - 1e-5)
        alpha_bar[0] = 1.0
        prev = np.concatenate([[1.0], alpha_bar[:-1]])
        beta = 1.0 - alpha_bar / prev
        beta[1:] = np.clip(beta[1:], 1e-8, 0.999)
        beta[0] = 0.0
        alpha = 1.0 - beta
    elif kind == "linear":
        beta = np.concatenate([[0.0], np.linspace(1e-4, 0.02, T)])
        alpha = 1.0 - beta
        alpha_bar = np.cumprod(alpha)
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    return NoiseSchedule(kind, T, alpha_bar, beta, alpha)


def forward_noise(x0: np.ndarray, t: int, eps: np.ndarray, schedule: NoiseSchedule):
    """x_t = sqrt(ᾱ_t) x0 + sqrt(1-ᾱ_t) eps, exactly."""
    if not 1 <= t <= schedule.T:
        raise ValueError(f"t={t} outside [1, {schedule.T}]")
    ab = schedule.alpha_bar[t]
    return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * eps


def center_of_mass_project(x: np.ndarray) -> np.ndarray:
    """Subtract the column mean: zero out the translation mode."""
    return x - x.mean(axis=0, keepdims=True)


# -- featurization -------------------------------------------------------------


def rbf_encode(dists: np.ndarray, n_rbf: int, r_max: float) -> np.ndarray:
    """Gaussian radial bins of pairwise distances; (..., n_rbf)."""
    centers = np.linspace(0.0, r_max, n_rbf)
    width = r_max / max(n_rbf - 1, 1)
    z = (dists[..., None] - centers) / width
    return np.exp(-0.5 * z * z)


@dataclass
class DenoiserConfig:
    n_layers: int = 4
    atom_hidden: int = 128
    atom_intermediate: int = 512
    pair_hidden: int = 32
    pair_intermediate: int = 128
    n_heads: int = 4
    cond_dim: int = 128
    dropout: float = 0.0
    n_rbf: int = 16
    r_max: float = 8.0

    def __post_init__(self):
        if self.atom_hidden % self.n_heads:
            raise ValueError(
                f"atom_hidden {self.atom_hidden} not divisible by n_heads {self.n_heads}"
            )

    @property
    def atom_feature_dim(self) -> int:
        return len(ELEMENT_ORDER) + 1 + 3  # one-hot + charge + current coords

    @property
    def pair_feature_dim(self) -> int:
        return 3 + self.n_rbf  # bond exists/aromatic/order + radial bins


def build_features(
    graph: MolecularGraph2D,
    coords: np.ndarray,
    cfg: DenoiserConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """(atom (N, da), pair (N, N, dp)) inputs for the current coordinates."""
    from .chem.graph import atom_features, pair_features

    base = atom_features(graph)
    atom = np.concatenate([base, np.asarray(coords, dtype=np.float64)], axis=-1)
    diff = coords[:, None, :] - coords[None, :, :]
    dists = np.sqrt((diff * diff).sum(-1))
    pair = np.concatenate(
        [pair_features(graph), rbf_encode(dists, cfg.n_rbf, cfg.r_max)], axis=-1
    )
    return atom, pair


def pack_batch(
    graphs: list[MolecularGraph2D],
    coords: list[np.ndarray],
    cfg: DenoiserConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pad per-molecule features to a common atom count.

    Returns atom (B, N, da), pair (B, N, N, dp), mask (B, N) with True on
    real atoms.
    """
    n_max = max(g.n_atoms for g in graphs)
    b = len(graphs)
    atom = np.zeros((b, n_max, cfg.atom_feature_dim))
    pair = np.zeros((b, n_max, n_max, cfg.pair_feature_dim))
    mask = np.zeros((b, n_max), dtype=bool)
    for r, (g, x) in enumerate(zip(graphs, coords)):
        a, p = build_features(g, x, cfg)
        n = g.n_atoms
        atom[r, :n] = a
        pair[r, :n, :n] = p
        mask[r, :n] = True
    return atom, pair, mask


# -- denoiser ------------------------------------------------------------------


class _DenoiserBlock(Module):
    def __init__(self, cfg: DenoiserConfig, rng: RngStream):
        self.ada_attn = AdaLNModulate(cfg.cond_dim, cfg.atom_hidden, rng.substream("ada_a"))
        self.attn = MultiHeadAttention(cfg.atom_hidden, cfg.n_heads, rng.substream("attn"))
        self.bias_map = Linear(cfg.pair_hidden, cfg.n_heads, rng.substream("bias"))
        self.pair_left = Linear(cfg.atom_hidden, cfg.pair_intermediate, rng.substream("pl"))
        self.pair_right = Linear(cfg.atom_hidden, cfg.pair_intermediate, rng.substream("pr"))
        self.pair_out = Linear(cfg.pair_intermediate, cfg.pair_hidden, rng.substream("po"))
        self.ada_ffn = AdaLNModulate(cfg.cond_dim, cfg.atom_hidden, rng.substream("ada_f"))
        self.ffn = FeedForward(cfg.atom_hidden, cfg.atom_intermediate, rng.substream("ffn"))

    def __call__(self, x: Tensor, p: Tensor, cond: Tensor, mask: np.ndarray, drop):
        bias = self.bias_map(layer_norm(p))  # (B, N, N, heads)
        bias = bias.transpose((0, 3, 1, 2))
        attn_mask = mask[:, None, None, :]
        x = x + drop(self.attn(self.ada_attn(x, cond), mask=attn_mask, bias=bias))
        ln = layer_norm(x)
        outer = self.pair_left(ln).reshape(*ln.shape[:-1], 1, -1) * self.pair_right(
            ln
        ).reshape(ln.shape[0], 1, ln.shape[1], -1)
        p = p + self.pair_out(gelu(outer))
        x = x + drop(self.ffn(self.ada_ffn(x, cond)))
        return x, p


class Denoiser(Module):
    """eps prediction network; call gives (B, N, 3), CoM-free on real atoms."""

    def __init__(self, cfg: DenoiserConfig, rng: RngStream):
        self.cfg = cfg
        self.atom_in = Linear(cfg.atom_feature_dim, cfg.atom_hidden, rng.substream("atom_in"))
        self.pair_in = Linear(cfg.pair_feature_dim, cfg.pair_hidden, rng.substream("pair_in"))
        self.blocks = [
            _DenoiserBlock(cfg, rng.substream(f"block{i}")) for i in range(cfg.n_layers)
        ]
        self.head = Linear(cfg.atom_hidden, 3, rng.substream("head"))
        self.training_steps = 0

    def __call__(
        self,
        atom: np.ndarray | Tensor,
        pair: np.ndarray | Tensor,
        mask: np.ndarray,
        cond: Tensor,
        dropout_rng: RngStream | None = None,
    ) -> Tensor:
        x = atom if isinstance(atom, Tensor) else Tensor(atom)
        p = pair if isinstance(pair, Tensor) else Tensor(pair)
        if x.shape[-1] != self.cfg.atom_feature_dim:
            raise ShapeError(
                f"atom features {x.shape[-1]} != expected {self.cfg.atom_feature_dim}"
            )
        if p.shape[-1] != self.cfg.pair_feature_dim:
            raise ShapeError(
                f"pair features {p.shape[-1]} != expected {self.cfg.pair_feature_dim}"
            )
        rate = self.cfg.dropout
        if dropout_rng is None or rate <= 0.0:
            def drop(t: Tensor) -> Tensor:
                return t
        else:
            def drop(t: Tensor) -> Tensor:
                keep = dropout_rng.uniform(t.shape) >= rate
                return t * (keep / (1.0 - rate))

        x = self.atom_in(x)
        p = self.pair_in(p)
        for block in self.blocks:
            x, p = block(x, p, cond, mask, drop)
        eps = self.head(layer_norm(x))
        # Zero the translation mode over real atoms.
        m = mask[..., None].astype(eps.data.dtype)
        counts = m.sum(axis=-2, keepdims=True)
        mu = (eps * m).sum(axis=-2, keepdims=True) * (1.0 / counts)
        return (eps - mu) * m


def predict_noise(
    denoiser: Denoiser,
    graph: GeometricGraph,
    coords_t: np.ndarray,
    cond: Tensor,
) -> np.ndarray:
    """Single-molecule eps prediction, (N, 3), zero column mean."""
    atom, pair, mask = pack_batch([graph.graph2d], [np.asarray(coords_t)], denoiser.cfg)
    with no_grad():
        out = denoiser(atom, pair, mask, cond)
    return out.data[0]


def diffusion_loss(eps_hat: Tensor, eps: np.ndarray, mask: np.ndarray | None = None) -> Tensor:
    """Mean squared error over the (real-atom) N x 3 entries."""
    if eps_hat.shape != np.asarray(eps).shape:
        raise ShapeError(f"eps_hat {eps_hat.shape} != eps {np.asarray(eps).shape}")
    m = None if mask is None else np.broadcast_to(mask[..., None], eps_hat.shape)
    return mse(eps_hat, eps, mask=m)


# -- sampling ------------------------------------------------------------------


def strided_times(T: int, steps: int) -> np.ndarray:
    """Evenly spaced sub-schedule 1..T (ascending), steps entries or fewer."""
    if steps >= T:
        return np.arange(1, T + 1)
    return np.unique(np.round(np.linspace(1, T, steps)).astype(int))


def sample_conformer(
    denoiser: Denoiser,
    schedule: NoiseSchedule,
    graph2d: MolecularGraph2D,
    cond_fn,
    rng: RngStream,
    steps: int | None = None,
) -> tuple[Conformer, dict]:
    """Ancestral reversal along a strided sub-schedule.

    cond_fn(t: int) -> (1, cond_dim) condition for the (scalar) timestep.
    Returns the conformer and metadata (flags an untrained denoiser).
    """
    n = graph2d.n_atoms
    taus = strided_times(schedule.T, steps or schedule.T)
    prevs = np.concatenate([[0], taus[:-1]])
    x = center_of_mass_project(rng.normal((n, 3)))
    ab = schedule.alpha_bar
    for s in range(len(taus) - 1, -1, -1):
        t, t_prev = int(taus[s]), int(prevs[s])
        atom, pair, mask = pack_batch([graph2d], [x], denoiser.cfg)
        with no_grad():
            eps_hat = denoiser(atom, pair, mask, cond_fn(t)).data[0]
        a_eff = ab[t] / ab[t_prev]
        b_eff = 1.0 - a_eff
        mean = (x - b_eff / math.sqrt(1.0 - ab[t]) * eps_hat) / math.sqrt(a_eff)
        if s > 0:
            sigma = math.sqrt(b_eff * (1.0 - ab[t_prev]) / (1.0 - ab[t]))
            z = center_of_mass_project(rng.normal((n, 3)))
            x = mean + sigma * z
        else:
            x = mean
    meta = {
        "untrained": denoiser.training_steps == 0,
        "steps": int(len(taus)),
        "schedule": schedule.kind,
    }
    return Conformer(np.asarray(x, dtype=np.float64)), meta


# -- training -------------------------------------------------------------------


@dataclass
class TrainingPair:
    stream: SelfiesTokenStream
    geom: GeometricGraph
    property_value: float | None = None


@dataclass
class DiffusionTrainConfig:
    epochs: int = 10
    batch_size: int = 8
    schedule_kind: str = "cosine"
    total_steps_T: int = 1000
    # Optimizer block (full-scale defaults; desk runs override).
    init_lr: float = 1e-4
    min_lr: float = 1e-5
    warmup_lr: float = 1e-6
    warmup_steps: int = 1000
    weight_decay: float = 0.05
    grad_clip: float = 1.0
    rotation_augment: bool = True
    zero_bridge: bool = False
    finetune_lm: bool = False
    checkpoint_every: int = 0  # batches; 0 = only at the end
    use_lr_schedule: bool = True
    fixed_lr: float = 1e-3  # used when use_lr_schedule is False


@dataclass
class DiffusionTrainResult:
    denoiser: Denoiser
    bridge: ConditionBridge
    time_embed: TimestepEmbedding
    schedule: NoiseSchedule
    epoch_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    prop_embed: PropertyEmbedding | None = None


def _random_rotation(rng: RngStream) -> np.ndarray:
    """Haar-uniform rotation from the QR of a Gaussian matrix, det +1."""
    m = rng.normal((3, 3))
    q, r = np.linalg.qr(m)
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def _condition(
    bridge: ConditionBridge,
    time_embed: TimestepEmbedding,
    states: np.ndarray,
    lengths: list[int],
    t: np.ndarray,
    T: int,
    zero_bridge: bool,
    prop_embed: PropertyEmbedding | None = None,
    prop_values: np.ndarray | None = None,
    normalizer: tuple[float, float] | None = None,
) -> Tensor:
    t_emb = time_embed(t, T)
    c_chem = None if zero_bridge else bridge(states, lengths)
    p_emb = None
    if prop_embed is not None and prop_values is not None:
        p_emb = prop_embed(prop_values, normalizer)
    return fuse_condition(c_chem, t_emb, p_emb)


def validation_loss(
    pairs: list[TrainingPair],
    states: list[np.ndarray],
    denoiser: Denoiser,
    bridge: ConditionBridge,
    time_embed: TimestepEmbedding,
    schedule: NoiseSchedule,
    seed: int,
    zero_bridge: bool = False,
    prop_embed: PropertyEmbedding | None = None,
    normalizer: tuple[float, float] | None = None,
    batch_size: int = 16,
) -> float:
    """Deterministic eval loss: (t, eps) fixed by the seed, paired across
    models so arms of an ablation see identical noise draws."""
    noise_rng = RngStream(seed).substream("val_noise")
    draws = []
    for pair in pairs:
        n = pair.geom.graph2d.n_atoms
        t = int(noise_rng.integers(1, schedule.T + 1))
        eps = center_of_mass_project(noise_rng.normal((n, 3)))
        draws.append((t, eps))
    total = 0.0
    count = 0
    with no_grad():
        for lo in range(0, len(pairs), batch_size):
            chunk = pairs[lo : lo + batch_size]
            chunk_states = states[lo : lo + batch_size]
            chunk_draws = draws[lo : lo + batch_size]
            loss = _batch_loss(
                chunk, chunk_states, chunk_draws, denoiser, bridge, time_embed,
                schedule, zero_bridge, prop_embed, normalizer, dropout_rng=None,
            )
            n_entries = sum(p.geom.graph2d.n_atoms for p in chunk) * 3
            total += loss.item() * n_entries
            count += n_entries
    return total / max(count, 1)


def _batch_loss(
    chunk: list[TrainingPair],
    chunk_states,
    draws: list[tuple[int, np.ndarray]],
    denoiser: Denoiser,
    bridge: ConditionBridge,
    time_embed: TimestepEmbedding,
    schedule: NoiseSchedule,
    zero_bridge: bool,
    prop_embed: PropertyEmbedding | None,
    normalizer: tuple[float, float] | None,
    dropout_rng: RngStream | None,
    rotations: list[np.ndarray] | None = None,
) -> Tensor:
    # chunk_states: list of per-molecule (L, D) arrays, or a prebuilt
    # (states, lengths) pair (Tensor keeps the LM graph alive for finetuning).
    if isinstance(chunk_states, tuple):
        padded, lengths = chunk_states
        lengths = list(lengths)
    else:
        lm_dim = chunk_states[0].shape[-1]
        l_max = max(s.shape[0] for s in chunk_states)
        padded = np.zeros((len(chunk), l_max, lm_dim))
        lengths = []
        for r, s in enumerate(chunk_states):
            padded[r, : s.shape[0]] = s
            lengths.append(s.shape[0])
    graphs = []
    noised = []
    eps_list = []
    for r, (pair, (t, eps)) in enumerate(zip(chunk, draws)):
        x0 = center_of_mass_project(pair.geom.conformer.coordinates)
        if rotations is not None:
            x0 = x0 @ rotations[r].T
        graphs.append(pair.geom.graph2d)
        noised.append(forward_noise(x0, t, eps, schedule))
        eps_list.append(eps)
    atom, pair_feat, mask = pack_batch(graphs, noised, denoiser.cfg)
    t_arr = np.asarray([t for t, _ in draws])
    prop_values = None
    if prop_embed is not None:
        prop_values = np.asarray([p.property_value for p in chunk], dtype=np.float64)
    cond = _condition(
        bridge, time_embed, padded, lengths, t_arr, schedule.T,
        zero_bridge, prop_embed, prop_values, normalizer,
    )
    eps_hat = denoiser(atom, pair_feat, mask, cond, dropout_rng=dropout_rng)
    n_max = atom.shape[1]
    eps_target = np.zeros((len(chunk), n_max, 3))
    for r, e in enumerate(eps_list):
        eps_target[r, : e.shape[0]] = e
    return diffusion_loss(eps_hat, eps_target, mask=mask)


def train_diffusion(
    dataset: list[TrainingPair],
    bridge: ConditionBridge,
    lm: LanguageModel,
    config: DenoiserConfig,
    train_cfg: DiffusionTrainConfig,
    rng: RngStream,
    denoiser: Denoiser | None = None,
    time_embed: TimestepEmbedding | None = None,
    prop_embed: PropertyEmbedding | None = None,
    normalizer: tuple[float, float] | None = None,
    val_pairs: list[TrainingPair] | None = None,
    val_seed: int = 1234,
    on_checkpoint=None,
    log=None,
    on_step=None,
) -> DiffusionTrainResult:
    """Stage 2: train denoiser + bridge (+ property MLP) end to end.

    By default the language model only supplies frozen hidden states
    (cached up front); its parameters stay out of the optimizer, so no
    training step can move them. The finetune_lm flag inverts that
    contract: states are recomputed per batch with the graph alive and the
    LM parameters join the optimizer.
    """
    if not dataset:
        raise ValueError("empty dataset")
    if train_cfg.finetune_lm and train_cfg.zero_bridge:
        raise ValueError(
            "finetune_lm with zero_bridge is inert: no gradient reaches the LM"
        )
    if prop_embed is not None:
        if normalizer is None:
            raise ValueError("property conditioning needs a normalizer")
        missing = [i for i, p in enumerate(dataset) if p.property_value is None]
        if missing:
            raise ValueError(f"records without property values: {missing[:5]}")
    schedule = build_schedule(train_cfg.schedule_kind, train_cfg.total_steps_T)
    if denoiser is None:
        denoiser = Denoiser(config, rng.substream("denoiser"))
    if time_embed is None:
        time_embed = TimestepEmbedding(config.cond_dim, rng.substream("time"))

    states = None
    if not train_cfg.finetune_lm:
        states = [lm.hidden_states(p.stream) for p in dataset]
    val_states = None

    params = denoiser.parameters() + time_embed.parameters()
    if not train_cfg.zero_bridge:
        params += bridge.parameters()
    if train_cfg.finetune_lm:
        params += lm.parameters()
    if prop_embed is not None:
        params += prop_embed.parameters()
    schedule_lr = None
    if train_cfg.use_lr_schedule:
        total = train_cfg.epochs * max(len(dataset) // max(train_cfg.batch_size, 1), 1)
        schedule_lr = WarmupCosineSchedule(
            init_lr=train_cfg.init_lr,
            min_lr=train_cfg.min_lr,
            warmup_lr=train_cfg.warmup_lr,
            warmup_steps=train_cfg.warmup_steps,
            total_steps=max(total, train_cfg.warmup_steps + 1),
        )
    opt = AdamW(
        params,
        lr=train_cfg.fixed_lr,
        weight_decay=train_cfg.weight_decay,
        schedule=schedule_lr,
    )
    order_rng = rng.substream("order")
    noise_rng = rng.substream("noise")
    rot_rng = rng.substream("rotation")
    drop_rng = rng.substream("dropout") if config.dropout > 0 else None

    result = DiffusionTrainResult(
        denoiser=denoiser, bridge=bridge, time_embed=time_embed,
        schedule=schedule, prop_embed=prop_embed,
    )
    batches_done = 0
    for epoch in range(train_cfg.epochs):
        order = order_rng.permutation(len(dataset))
        loss_sum = 0.0
        loss_n = 0
        for lo in range(0, len(order), train_cfg.batch_size):
            sel = order[lo : lo + train_cfg.batch_size]
            chunk = [dataset[i] for i in sel]
            if train_cfg.finetune_lm:
                chunk_states = batch_hidden_states(
                    lm, [p.stream for p in chunk], trainable=True
                )
            else:
                chunk_states = [states[i] for i in sel]
            draws = []
            for p in chunk:
                n = p.geom.graph2d.n_atoms
                t = int(noise_rng.integers(1, schedule.T + 1))
                eps = center_of_mass_project(noise_rng.normal((n, 3)))
                draws.append((t, eps))
            rotations = None
            if train_cfg.rotation_augment:
                rotations = [_random_rotation(rot_rng) for _ in chunk]
            opt.zero_grad()
            loss = _batch_loss(
                chunk, chunk_states, draws, denoiser, bridge, time_embed,
                schedule, train_cfg.zero_bridge, prop_embed, normalizer,
                dropout_rng=drop_rng, rotations=rotations,
            )
            loss.backward()
            clip_global_norm(params, train_cfg.grad_clip)
            step_lr = opt.step()
            denoiser.training_steps += 1
            batches_done += 1
            if on_step is not None:
                on_step(batches_done, loss.item(), step_lr)
            loss_sum += loss.item()
            loss_n += 1
            if (
                train_cfg.checkpoint_every
                and on_checkpoint
                and batches_done % train_cfg.checkpoint_every == 0
            ):
                on_checkpoint(result, batches_done)
        result.epoch_losses.append(loss_sum / max(loss_n, 1))
        if val_pairs:
            # A moving LM invalidates cached validation states.
            if val_states is None or train_cfg.finetune_lm:
                val_states = [lm.hidden_states(p.stream) for p in val_pairs]
            result.val_losses.append(
                validation_loss(
                    val_pairs, val_states, denoiser, bridge, time_embed,
                    schedule, val_seed, train_cfg.zero_bridge, prop_embed, normalizer,
                )
            )
        if log is not None:
            msg = f"epoch {epoch + 1}/{train_cfg.epochs} loss {result.epoch_losses[-1]:.5f}"
            if result.val_losses:
                msg += f" val {result.val_losses[-1]:.5f}"
            log(msg)
    if on_checkpoint:
        on_checkpoint(result, batches_done)
    return result


def embed_property_for_diffusion(
    net: PropertyEmbedding, value: float, normalizer: tuple[float, float]
) -> Tensor:
    """z-scored scalar -> MLP -> cond_dim row vector, for fuse_condition."""
    return net(np.asarray([value]), normalizer)
