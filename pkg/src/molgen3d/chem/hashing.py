"""Canonical graph hashing via Weisfeiler-Leman color refinement.

The hash is stable across atom reorderings of the same labeled multigraph
and across platforms (blake2b over explicit little-endian byte encodings,
no Python hash()). WL refinement is a non-complete isomorphism test; for
the molecule sizes this package handles, confusable non-isomorphic pairs
are not a practical concern, and the test suite cross-checks against an
exact backtracking oracle.
"""

from __future__ import annotations

import hashlib
import struct

from .graph import MolecularGraph2D

_EMPTY_GRAPH_HASH = "empty:" + hashlib.blake2b(b"empty-graph", digest_size=16).hexdigest()


def _digest(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=16).digest()


def _initial_colors(graph: MolecularGraph2D) -> list[bytes]:
    colors = []
    for a in graph.atoms:
        payload = a.symbol.encode("ascii") + struct.pack("<i", a.charge)
        colors.append(_digest(payload))
    return colors


def _refine_once(graph: MolecularGraph2D, colors: list[bytes], adj) -> list[bytes]:
    out = []
    for i in range(graph.n_atoms):
        neigh = sorted(
            struct.pack("<d", order) + colors[j] for j, order in adj[i]
        )
        payload = colors[i] + b"|" + b"".join(neigh)
        out.append(_digest(payload))
    return out


def wl_colors(graph: MolecularGraph2D, rounds: int | None = None) -> list[bytes]:
    """Stable per-atom colors after WL refinement to a fixed point.

    Runs until the color partition stops splitting (at most n rounds), or
    exactly `rounds` iterations when given.
    """
    colors = _initial_colors(graph)
    if graph.n_atoms == 0:
        return colors
    adj = graph.neighbors()
    max_rounds = graph.n_atoms if rounds is None else rounds
    n_classes = len(set(colors))
    for _ in range(max_rounds):
        colors = _refine_once(graph, colors, adj)
        if rounds is None:
            new_classes = len(set(colors))
            if new_classes == n_classes:
                break
            n_classes = new_classes
    return colors


def canonical_hash(graph: MolecularGraph2D) -> str:
    """Order-independent hex identity string for a labeled molecular graph."""
    if graph.n_atoms == 0:
        return _EMPTY_GRAPH_HASH
    colors = wl_colors(graph)
    # A multiset of final colors plus a multiset of colored edges pins the
    # labeled graph up to WL equivalence.
    edge_parts = []
    for b in graph.bonds:
        ci, cj = sorted((colors[b.i], colors[b.j]))
        edge_parts.append(ci + cj + struct.pack("<d", b.order.value))
    payload = b"".join(sorted(colors)) + b"#" + b"".join(sorted(edge_parts))
    return hashlib.blake2b(payload, digest_size=16).hexdigest()
