"""Synthetic desk-scale corpora.

Molecules come from decoding uniformly random token streams (the decoder
is total, so every draw is a valid molecule); conformers come from a
seeded spring relaxation over the bond graph: bonded pairs pull toward
covalent-radius targets, 1-3 pairs open toward tetrahedral-ish spacing,
everything else repels at short range. Geometry is plausible, not
quantum-accurate; its job is to give the diffusion model a reproducible
target distribution.
"""

from __future__ import annotations

import numpy as np

from .chem.elements import ELEMENTS
from .chem.graph import Conformer, GeometricGraph, MolecularGraph2D
from .chem.hashing import canonical_hash
from .data import DatasetRecord, record_from_geometric
from .nn.rng import RngStream
from .properties import SURROGATE_ORACLES
from .selfies import decode, default_vocabulary, encode

# Bond-length contraction per bond order relative to the radius sum.
_ORDER_SCALE = {1.0: 1.00, 1.5: 0.93, 2.0: 0.87, 3.0: 0.81}


def bond_length_target(graph: MolecularGraph2D, i: int, j: int, order: float) -> float:
    base = ELEMENTS[graph.atoms[i].symbol].covalent_radius + \
        ELEMENTS[graph.atoms[j].symbol].covalent_radius
    return base * _ORDER_SCALE[float(order)]


def layout_conformer(
    graph: MolecularGraph2D,
    rng: RngStream,
    n_steps: int = 300,
    step_size: float = 0.05,
) -> Conformer:
    n = graph.n_atoms
    if n == 1:
        return Conformer(np.zeros((1, 3)))
    coords = rng.normal((n, 3)) * 1.0

    bond_pairs = []
    bond_targets = []
    neighbor_sets = [set() for _ in range(n)]
    for b in graph.bonds:
        bond_pairs.append((b.i, b.j))
        bond_targets.append(bond_length_target(graph, b.i, b.j, b.order.value))
        neighbor_sets[b.i].add(b.j)
        neighbor_sets[b.j].add(b.i)
    angle_pairs = []
    angle_targets = []
    target_of = {frozenset(p): t for p, t in zip(bond_pairs, bond_targets)}
    for center in range(n):
        nbrs = sorted(neighbor_sets[center])
        for a in range(len(nbrs)):
            for b in range(a + 1, len(nbrs)):
                i, k = nbrs[a], nbrs[b]
                if k in neighbor_sets[i]:
                    continue
                li = target_of[frozenset((i, center))]
                lk = target_of[frozenset((k, center))]
                angle_pairs.append((i, k))
                angle_targets.append(0.8165 * (li + lk))  # ~109.5 deg opening

    bonded = {frozenset(p) for p in bond_pairs} | {frozenset(p) for p in angle_pairs}
    repel_pairs = [
        (i, j)
        for i in range(n)
        for j in range(i + 1, n)
        if frozenset((i, j)) not in bonded
    ]

    def spring_grad(pairs, targets, k_spring):
        g = np.zeros_like(coords)
        if not pairs:
            return g
        idx = np.asarray(pairs)
        delta = coords[idx[:, 0]] - coords[idx[:, 1]]
        dist = np.sqrt((delta**2).sum(axis=1)) + 1e-9
        pull = k_spring * (dist - np.asarray(targets)) / dist
        force = delta * pull[:, None]
        np.add.at(g, idx[:, 0], force)
        np.add.at(g, idx[:, 1], -force)
        return g

    for _ in range(n_steps):
        grad = spring_grad(bond_pairs, bond_targets, 4.0)
        grad += spring_grad(angle_pairs, angle_targets, 1.0)
        if repel_pairs:
            idx = np.asarray(repel_pairs)
            delta = coords[idx[:, 0]] - coords[idx[:, 1]]
            dist = np.sqrt((delta**2).sum(axis=1)) + 1e-9
            close = dist < 2.2
            if close.any():
                push = np.zeros_like(dist)
                push[close] = 2.0 * (dist[close] - 2.2) / dist[close]
                force = delta * push[:, None]
                np.add.at(grad, idx[:, 0], force)
                np.add.at(grad, idx[:, 1], -force)
        coords = coords - step_size * grad
    coords = coords - coords.mean(axis=0)
    return Conformer(coords)


def random_molecule(
    rng: RngStream,
    max_tokens: int = 12,
    max_heavy: int = 9,
    min_heavy: int = 2,
    max_attempts: int = 200,
):
    """(stream, graph) from decoding random tokens; None when unlucky."""
    vocab = default_vocabulary()
    drawable = [
        i for i in range(len(vocab))
        if i not in (vocab.pad_id, vocab.bos_id, vocab.eos_id)
    ]
    for _ in range(max_attempts):
        length = int(rng.integers(3, max_tokens + 1))
        ids = [drawable[int(k)] for k in rng.integers(0, len(drawable), size=length)]
        graph = decode(ids)
        heavy = graph.heavy_atom_count()
        if min_heavy <= heavy <= max_heavy:
            return graph
    return None


def make_toy_corpus(
    n: int,
    seed: int,
    max_heavy: int = 9,
    min_heavy: int = 2,
    max_tokens: int = 12,
    distinct: bool = False,
) -> list[DatasetRecord]:
    """n seeded records: canonical selfies, conformer, surrogate properties."""
    rng = RngStream(seed)
    mol_rng = rng.substream("molecules")
    records: list[DatasetRecord] = []
    seen: set[str] = set()
    attempts = 0
    budget = 400 * max(n, 1)
    while len(records) < n:
        attempts += 1
        if attempts > budget:
            raise RuntimeError(
                f"toy corpus stalled: {len(records)}/{n} after {attempts} attempts"
            )
        graph = random_molecule(
            mol_rng, max_tokens=max_tokens, max_heavy=max_heavy, min_heavy=min_heavy
        )
        if graph is None:
            continue
        if distinct:
            h = canonical_hash(graph)
            if h in seen:
                continue
            seen.add(h)
        stream = encode(graph)
        conformer = layout_conformer(graph, rng.substream(f"layout{len(records)}"))
        geom = GeometricGraph(graph, conformer)
        props = {name: fn(graph) for name, fn in SURROGATE_ORACLES.items()}
        records.append(record_from_geometric(geom, selfies=stream.raw, properties=props))
    return records
