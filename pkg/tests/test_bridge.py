import numpy as np
import pytest

from molgen3d.bridge import (
    ConditionBridge,
    ProjectorConfig,
    PropertyEmbedding,
    TimestepEmbedding,
    fuse_condition,
)
from molgen3d.nn.rng import RngStream
from molgen3d.nn.tensor import Tensor, no_grad


@pytest.fixture(scope="module")
def bridge():
    cfg = ProjectorConfig(n_layers=2, hidden_dim=48, n_heads=4, ffn_dim=96,
                          n_queries=4, cond_dim=24)
    return ConditionBridge(cfg, lm_hidden_dim=64, rng=RngStream(21))


def test_project_shapes(bridge):
    states = np.random.default_rng(0).normal(size=(7, 64))
    with no_grad():
        q = bridge.project(states)
        c = bridge.condense(q)
    assert q.shape == (1, 4, 48)  # single molecule is a batch of one
    assert c.shape == (1, 24)
    with no_grad():
        full = bridge(states)
    assert np.array_equal(full.data, c.data)


def test_project_padding_invariance(bridge):
    # Extra padded rows behind the length must not change the projection.
    rng = np.random.default_rng(1)
    states = rng.normal(size=(5, 64))
    padded = np.concatenate([states, np.zeros((3, 64))], axis=0)
    batch = np.stack([padded, rng.normal(size=(8, 64))])
    with no_grad():
        single = bridge(states).data
        both = bridge.project(batch, lengths=[5, 8])
        pooled = bridge.condense(both).data
    assert pooled.shape == (2, 24)
    assert np.allclose(pooled[0], single, atol=1e-6)


def test_project_is_bidirectional(bridge):
    # Changing the LAST state row moves the result: no causal mask here.
    rng = np.random.default_rng(2)
    states = rng.normal(size=(6, 64))
    edited = states.copy()
    edited[-1] += 1.0
    with no_grad():
        a = bridge(states).data
        b = bridge(edited).data
    assert not np.allclose(a, b)


def test_gradient_reaches_queries(bridge):
    states = np.random.default_rng(3).normal(size=(4, 64))
    bridge.zero_grad()
    out = bridge(states)
    out.sum().backward()
    moved = [p for _, p in bridge.named_parameters() if p.grad is not None
             and np.any(p.grad != 0)]
    assert moved, "no gradient reached the bridge"
    names = [n for n, p in bridge.named_parameters()
             if p.grad is not None and np.any(p.grad != 0)]
    assert any("quer" in n for n in names)


def test_timestep_embedding_distinguishes_times():
    emb = TimestepEmbedding(cond_dim=24, rng=RngStream(4))
    with no_grad():
        e = emb(np.array([0, 10, 500]), total_steps=1000).data
    assert e.shape == (3, 24)
    assert not np.allclose(e[0], e[1])
    assert not np.allclose(e[1], e[2])


def test_property_embedding_normalizes():
    emb = PropertyEmbedding(cond_dim=24, rng=RngStream(5))
    with no_grad():
        a = emb(np.array([4.0]), normalizer=(4.0, 2.0)).data
        b = emb(np.array([8.0]), normalizer=(8.0, 4.0)).data
    # Same z-score, same embedding.
    assert np.allclose(a, b)
    with pytest.raises(ValueError):
        emb(np.array([1.0]), normalizer=(0.0, 0.0))


def test_fuse_condition_is_additive():
    rng = np.random.default_rng(6)
    c = Tensor(rng.normal(size=(2, 24)))
    t = Tensor(rng.normal(size=(2, 24)))
    p = Tensor(rng.normal(size=(2, 24)))
    fused = fuse_condition(c, t, p)
    assert np.allclose(fused.data, c.data + t.data + p.data)
    no_prop = fuse_condition(c, t, None)
    assert np.allclose(no_prop.data, c.data + t.data)
