"""Geometric feature extraction from conformers.

Every measured feature carries a type key: the element-symbol sequence
along the path, with a symbol lowercased when an aromatic bond on the path
touches that atom. Keys are direction-canonicalized (the lexicographically
smaller of the sequence and its reverse) so "C-O-H" and "H-O-C" pool into
one bucket.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graph import BondOrder, GeometricGraph

# Torsions with a near-straight inner angle have no defined rotation axis.
DEGENERATE_ANGLE_RAD = 1e-6


@dataclass
class GeomMeasurements:
    bond_lengths: list[tuple[str, float]] = field(default_factory=list)
    bond_angles: list[tuple[str, float]] = field(default_factory=list)
    dihedral_angles: list[tuple[str, float]] = field(default_factory=list)
    n_skipped_dihedrals: int = 0


def _path_key(symbols: list[str], aromatic_flags: list[bool]) -> str:
    """Canonical type key for a bonded path.

    aromatic_flags[k] marks the bond between path positions k and k+1.
    """
    cased = list(symbols)
    for k, is_arom in enumerate(aromatic_flags):
        if is_arom:
            cased[k] = cased[k].lower()
            cased[k + 1] = cased[k + 1].lower()
    rev = cased[::-1]
    return "-".join(min(cased, rev))


def _angle_deg(u: np.ndarray, v: np.ndarray) -> float:
    cos = np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v))
    return math.degrees(math.acos(np.clip(cos, -1.0, 1.0)))


def _inner_angle_rad(u: np.ndarray, v: np.ndarray) -> float:
    cos = np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v))
    return math.acos(np.clip(cos, -1.0, 1.0))


def _dihedral_deg(p0, p1, p2, p3) -> float:
    """Unsigned torsion of the path p0-p1-p2-p3, in [0, 180] degrees."""
    b1 = p1 - p0
    b2 = p2 - p1
    b3 = p3 - p2
    n1 = np.cross(b1, b2)
    n2 = np.cross(b2, b3)
    m1 = np.cross(n1, b2 / np.linalg.norm(b2))
    x = np.dot(n1, n2)
    y = np.dot(m1, n2)
    return abs(math.degrees(math.atan2(y, x)))


def measure_geometry(g: GeometricGraph) -> GeomMeasurements:
    """All bond lengths, bond angles, and torsions of a conformer.

    Lengths in Angstrom, angles in degrees; torsions are unsigned (the
    mirror image of a molecule reports the same values). Torsions whose
    inner angle at either central atom is within DEGENERATE_ANGLE_RAD of
    0 or pi are skipped and counted instead of raising.
    """
    graph = g.graph2d
    coords = g.conformer.coordinates
    if not np.all(np.isfinite(coords)):
        raise ValueError("conformer has non-finite coordinates")
    syms = [a.symbol for a in graph.atoms]
    arom: dict[tuple[int, int], bool] = {}
    for b in graph.bonds:
        arom[b.key()] = b.order is BondOrder.AROMATIC

    def bond_arom(i: int, j: int) -> bool:
        return arom[(i, j) if i < j else (j, i)]

    out = GeomMeasurements()
    adj = [sorted(j for j, _ in nbrs) for nbrs in graph.neighbors()]

    for b in graph.bonds:
        key = _path_key([syms[b.i], syms[b.j]], [bond_arom(b.i, b.j)])
        out.bond_lengths.append((key, float(np.linalg.norm(coords[b.i] - coords[b.j]))))

    for j in range(graph.n_atoms):
        nbrs = adj[j]
        for a in range(len(nbrs)):
            for c in range(a + 1, len(nbrs)):
                i, k = nbrs[a], nbrs[c]
                key = _path_key(
                    [syms[i], syms[j], syms[k]],
                    [bond_arom(i, j), bond_arom(j, k)],
                )
                ang = _angle_deg(coords[i] - coords[j], coords[k] - coords[j])
                out.bond_angles.append((key, ang))

    for b in graph.bonds:
        j, k = b.key()
        for i in adj[j]:
            if i == k:
                continue
            for l in adj[k]:
                if l == j or l == i:
                    continue
                inner_j = _inner_angle_rad(coords[i] - coords[j], coords[k] - coords[j])
                inner_k = _inner_angle_rad(coords[j] - coords[k], coords[l] - coords[k])
                if min(inner_j, inner_k) < DEGENERATE_ANGLE_RAD or max(
                    inner_j, inner_k
                ) > math.pi - DEGENERATE_ANGLE_RAD:
                    out.n_skipped_dihedrals += 1
                    continue
                key = _path_key(
                    [syms[i], syms[j], syms[k], syms[l]],
                    [bond_arom(i, j), bond_arom(j, k), bond_arom(k, l)],
                )
                out.dihedral_angles.append(
                    (key, _dihedral_deg(coords[i], coords[j], coords[k], coords[l]))
                )

    return out
