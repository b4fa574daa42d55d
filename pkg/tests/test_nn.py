import numpy as np
import pytest

from molgen3d.nn import tensor as T
from molgen3d.nn.checkpoint import (
    checkpoint_byte_hash,
    load_checkpoint,
    save_checkpoint,
)
from molgen3d.nn.layers import Linear, Parameter, sinusoidal_embedding
from molgen3d.nn.optim import AdamW, WarmupCosineSchedule, clip_global_norm
from molgen3d.nn.rng import RngStream
from molgen3d.nn.tensor import Tensor, no_grad, precision
from oracles import fd_gradient, max_normalized_error


def _check_grad(build_loss, x0, tol=1e-6):
    # build_loss maps a leaf Tensor to a scalar Tensor; 64-bit throughout.
    with precision(np.float64):
        leaf = Tensor(np.array(x0, dtype=np.float64), requires_grad=True)
        loss = build_loss(leaf)
        loss.backward()
        fd = fd_gradient(lambda arr: build_loss(Tensor(arr)).item(), np.array(x0))
    err = max_normalized_error(leaf.grad, fd)
    assert err < tol, f"grad mismatch {err}"


def test_grad_elementwise_ops():
    rng = np.random.default_rng(0)
    x0 = rng.normal(size=(3, 4))
    other = Tensor(rng.normal(size=(3, 4)))
    _check_grad(lambda x: ((x * other + x / 2.0 - other) ** 2.0).sum(), x0)
    _check_grad(lambda x: T.gelu(x).sum(), x0)
    _check_grad(lambda x: (x.exp() + (x * x + 1.0).log()).sum(), x0)


def test_grad_matmul_and_broadcast():
    rng = np.random.default_rng(1)
    a0 = rng.normal(size=(3, 5))
    b = Tensor(rng.normal(size=(5, 2)))
    bias = Tensor(rng.normal(size=(2,)))
    _check_grad(lambda x: ((x @ b + bias) ** 2.0).sum(), a0)
    # A broadcast leaf exercises _unbroadcast on the way back.
    wide = Tensor(rng.normal(size=(4, 3)))
    _check_grad(lambda x: ((x + wide) ** 2.0).sum(), rng.normal(size=(1, 3)))


def test_grad_reductions_and_shapes():
    rng = np.random.default_rng(2)
    x0 = rng.normal(size=(2, 3, 4))
    _check_grad(lambda x: x.sum(axis=1).mean(), x0)
    _check_grad(lambda x: x.reshape(6, 4).transpose((1, 0)).sum(), x0)
    _check_grad(lambda x: x.swapaxes(0, 2)[1].sum(), x0)
    _check_grad(lambda x: T.concat([x, x * 2.0], axis=-1).sum(), x0)


def test_grad_layer_norm_and_softmax():
    rng = np.random.default_rng(3)
    x0 = rng.normal(size=(4, 6))
    mult = rng.normal(size=(4, 6))
    _check_grad(lambda x: (T.layer_norm(x) * Tensor(mult)).sum(), x0)
    mask = np.ones((4, 6), dtype=bool)
    mask[1, 3:] = False
    mask[2, :] = False  # fully masked row must stay a zero row
    _check_grad(lambda x: (T.softmax(x, mask=mask) ** 2.0).sum(), x0)
    out = T.softmax(Tensor(x0), mask=mask)
    assert np.all(out.data[2] == 0.0)
    assert np.allclose(out.data[mask.any(axis=-1)].sum(axis=-1), 1.0)
    assert np.all(out.data[1, 3:] == 0.0)


def test_grad_losses():
    rng = np.random.default_rng(4)
    logits0 = rng.normal(size=(5, 7))
    targets = rng.integers(0, 7, size=5)
    _check_grad(lambda x: T.cross_entropy(x, targets), logits0)
    pred0 = rng.normal(size=(6, 3))
    target = rng.normal(size=(6, 3))
    mask = np.array([1, 1, 0, 1, 0, 1], dtype=bool)[:, None]
    _check_grad(lambda x: T.mse(x, target, mask=mask), pred0)


def test_layer_norm_statistics():
    rng = np.random.default_rng(5)
    with precision(np.float64):
        x = Tensor(rng.normal(loc=3.0, scale=5.0, size=(10, 32)))
        y = T.layer_norm(x).data
    assert np.allclose(y.mean(axis=-1), 0.0, atol=1e-12)
    assert np.allclose(y.var(axis=-1), 1.0, atol=1e-4)


def test_no_grad_blocks_graph():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with no_grad():
        y = (x * 2.0).sum()
    assert not y.requires_grad
    y2 = (x * 2.0).sum()
    assert y2.requires_grad


def test_embedding_rows():
    rng = np.random.default_rng(6)
    table0 = rng.normal(size=(9, 4))
    ids = np.array([1, 1, 7, 0])
    _check_grad(lambda t: (T.embedding(t, ids) ** 2.0).sum(), table0)


def test_adamw_decoupled_decay():
    # With zero gradient the AdamW update is pure decay: p -= lr * wd * p.
    p = Parameter(np.full((3,), 2.0))
    p.grad = np.zeros(3)
    opt = AdamW([p], lr=0.1, weight_decay=0.5)
    returned = opt.step()
    assert returned == 0.1
    assert np.allclose(p.data, 2.0 - 0.1 * 0.5 * 2.0)


def test_adamw_descends():
    rng = RngStream(17)
    p = Parameter(np.array([5.0]))
    opt = AdamW([p], lr=0.2)
    for _ in range(200):
        opt.zero_grad()
        p.grad = 2.0 * p.data  # d/dp p^2
        opt.step()
    assert abs(p.data[0]) < 0.1


def test_warmup_cosine_schedule():
    s = WarmupCosineSchedule(
        init_lr=1e-4, min_lr=1e-5, warmup_lr=1e-6, warmup_steps=100, total_steps=1000
    )
    assert s.lr(0) == pytest.approx(1e-6)
    assert s.lr(100) == pytest.approx(1e-4)
    assert s.lr(1000) == pytest.approx(1e-5)
    assert s.lr(5000) == pytest.approx(1e-5)  # clamps past the end
    mid = s.lr(550)
    assert 1e-5 < mid < 1e-4


def test_clip_global_norm():
    p1 = Parameter(np.zeros(3))
    p2 = Parameter(np.zeros(4))
    p1.grad = np.full(3, 3.0)
    p2.grad = np.full(4, 4.0)
    before = float(np.sqrt((p1.grad ** 2).sum() + (p2.grad ** 2).sum()))
    total = clip_global_norm([p1, p2], 1.0)
    assert total == pytest.approx(before)
    after = float(np.sqrt((p1.grad ** 2).sum() + (p2.grad ** 2).sum()))
    assert after == pytest.approx(1.0)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    tensors = {
        "b.weight": rng.normal(size=(4, 3)),
        "a.bias": rng.normal(size=(3,)),
    }
    prefix = tmp_path / "model"
    save_checkpoint(prefix, tensors, extra={"note": 1})
    back, extra = load_checkpoint(prefix)
    assert extra == {"note": 1}
    for k in tensors:
        assert np.array_equal(back[k], tensors[k])
    h1 = checkpoint_byte_hash(prefix)
    save_checkpoint(prefix, tensors, extra={"note": 2})
    assert checkpoint_byte_hash(prefix) == h1  # extra lives in the manifest
    tensors["b.weight"] = tensors["b.weight"] + 1e-12
    save_checkpoint(prefix, tensors)
    assert checkpoint_byte_hash(prefix) != h1  # any bit flip shows up


def test_checkpoint_missing_raises(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "nope")


def test_rng_substreams():
    root = RngStream(42)
    a1 = root.substream("alpha").normal((5,))
    a2 = RngStream(42).substream("alpha").normal((5,))
    b = RngStream(42).substream("beta").normal((5,))
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, b)
    # Drawing from the parent does not disturb named children.
    root2 = RngStream(42)
    root2.normal((100,))
    assert np.array_equal(root2.substream("alpha").normal((5,)), a1)


def test_linear_shapes():
    lin = Linear(6, 4, RngStream(1))
    out = lin(Tensor(np.zeros((3, 6))))
    assert out.shape == (3, 4)


def test_sinusoidal_embedding_range():
    emb = sinusoidal_embedding(np.array([0.0, 1.0, 500.0]), 16)
    arr = emb if isinstance(emb, np.ndarray) else emb.data
    assert arr.shape == (3, 16)
    assert np.all(np.abs(arr) <= 1.0 + 1e-12)
