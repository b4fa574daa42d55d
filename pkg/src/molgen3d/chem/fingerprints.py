"""Circular substructure fingerprints and Tanimoto similarity.

Morgan-style: each atom contributes one identifier per radius shell in
[0, radius], computed by iterated neighborhood hashing (same update rule
as WL refinement, with bond orders folded in). Identifiers are folded into
a fixed-width bit vector.
"""

from __future__ import annotations

import hashlib
import struct

from .graph import MolecularGraph2D

DEFAULT_RADIUS = 2
DEFAULT_N_BITS = 2048


def _digest(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=8).digest()


def morgan_bits(
    graph: MolecularGraph2D,
    radius: int = DEFAULT_RADIUS,
    n_bits: int = DEFAULT_N_BITS,
) -> frozenset[int]:
    """Set of fingerprint bit positions for the graph."""
    if graph.n_atoms == 0:
        return frozenset()
    adj = graph.neighbors()
    colors = []
    for a in graph.atoms:
        payload = a.symbol.encode("ascii") + struct.pack("<i", a.charge)
        colors.append(_digest(payload))
    bits: set[int] = set()
    for r in range(radius + 1):
        for c in colors:
            code = struct.unpack("<Q", c)[0]
            bits.add(code % n_bits)
        if r == radius:
            break
        nxt = []
        for i in range(graph.n_atoms):
            neigh = sorted(struct.pack("<d", order) + colors[j] for j, order in adj[i])
            nxt.append(_digest(colors[i] + b"|" + b"".join(neigh)))
        colors = nxt
    return frozenset(bits)


def tanimoto(bits_a: frozenset[int], bits_b: frozenset[int]) -> float:
    """Jaccard similarity of two bit sets; 1.0 for two empty sets."""
    if not bits_a and not bits_b:
        return 1.0
    inter = len(bits_a & bits_b)
    union = len(bits_a | bits_b)
    return inter / union
