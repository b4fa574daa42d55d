"""2D molecular graphs, conformers, and the stability/validity checks.

Graphs are explicit-hydrogen throughout: every H the molecule owns is an
atom in the list, and the stability bookkeeping assumes no implicit
hydrogens remain to be added.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .elements import adjusted_valences, get_element, max_adjusted_valence


class BondOrder(float, enum.Enum):
    SINGLE = 1.0
    AROMATIC = 1.5
    DOUBLE = 2.0
    TRIPLE = 3.0

    @classmethod
    def from_value(cls, value: float) -> "BondOrder":
        for member in cls:
            if member.value == float(value):
                return member
        raise ValueError(f"not a bond order: {value!r}")


@dataclass(frozen=True)
class Atom:
    symbol: str
    charge: int = 0

    def __post_init__(self):
        get_element(self.symbol)  # raises UnknownElementError early


@dataclass(frozen=True)
class Bond:
    i: int
    j: int
    order: BondOrder

    def key(self) -> tuple[int, int]:
        return (self.i, self.j) if self.i < self.j else (self.j, self.i)


@dataclass
class MolecularGraph2D:
    """Simple graph: no self loops, at most one bond per atom pair."""

    atoms: list[Atom]
    bonds: list[Bond]

    def __post_init__(self):
        n = len(self.atoms)
        seen: set[tuple[int, int]] = set()
        for b in self.bonds:
            if not (0 <= b.i < n and 0 <= b.j < n):
                raise ValueError(f"bond {b.i}-{b.j} references a missing atom (n={n})")
            if b.i == b.j:
                raise ValueError(f"self-loop on atom {b.i}")
            k = b.key()
            if k in seen:
                raise ValueError(f"duplicate bond {k}")
            seen.add(k)

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    def neighbors(self) -> list[list[tuple[int, float]]]:
        """Adjacency as (neighbor index, bond order value) lists."""
        adj: list[list[tuple[int, float]]] = [[] for _ in self.atoms]
        for b in self.bonds:
            adj[b.i].append((b.j, b.order.value))
            adj[b.j].append((b.i, b.order.value))
        return adj

    def valence_sums(self) -> list[float]:
        sums = [0.0] * len(self.atoms)
        for b in self.bonds:
            sums[b.i] += b.order.value
            sums[b.j] += b.order.value
        return sums

    def n_components(self) -> int:
        n = len(self.atoms)
        if n == 0:
            return 0
        adj = self.neighbors()
        seen = [False] * n
        count = 0
        for start in range(n):
            if seen[start]:
                continue
            count += 1
            stack = [start]
            seen[start] = True
            while stack:
                u = stack.pop()
                for v, _ in adj[u]:
                    if not seen[v]:
                        seen[v] = True
                        stack.append(v)
        return count

    def heavy_atom_count(self) -> int:
        return sum(1 for a in self.atoms if a.symbol != "H")


@dataclass
class Conformer:
    """3D coordinates in Angstrom, one row per atom of the owning graph."""

    coordinates: np.ndarray

    def __post_init__(self):
        self.coordinates = np.asarray(self.coordinates, dtype=np.float64)
        if self.coordinates.ndim != 2 or self.coordinates.shape[1] != 3:
            raise ValueError(f"coordinates must be (N, 3), got {self.coordinates.shape}")
        if not np.all(np.isfinite(self.coordinates)):
            raise ValueError("coordinates contain non-finite entries")

    @property
    def n_atoms(self) -> int:
        return self.coordinates.shape[0]


def atom_feature_dim() -> int:
    from .elements import ELEMENT_ORDER

    return len(ELEMENT_ORDER) + 1  # one-hot element + formal charge


PAIR_FEATURE_DIM = 3  # bond exists, aromatic flag, bond order value


def atom_features(graph: MolecularGraph2D) -> np.ndarray:
    """One-hot element type plus integer formal charge, (N, d1)."""
    from .elements import ELEMENT_ORDER

    index = {sym: k for k, sym in enumerate(ELEMENT_ORDER)}
    out = np.zeros((graph.n_atoms, atom_feature_dim()), dtype=np.float64)
    for i, a in enumerate(graph.atoms):
        out[i, index[a.symbol]] = 1.0
        out[i, -1] = float(a.charge)
    return out


def pair_features(graph: MolecularGraph2D) -> np.ndarray:
    """Bond-channel tensor, (N, N, 3), symmetric in the first two axes."""
    n = graph.n_atoms
    out = np.zeros((n, n, PAIR_FEATURE_DIM), dtype=np.float64)
    for b in graph.bonds:
        row = (1.0, 1.0 if b.order is BondOrder.AROMATIC else 0.0, b.order.value)
        out[b.i, b.j] = row
        out[b.j, b.i] = row
    return out


@dataclass
class GeometricGraph:
    """A 2D graph paired with a conformer and its derived feature tensors."""

    graph2d: MolecularGraph2D
    conformer: Conformer
    atom_features: np.ndarray = field(repr=False, default=None)
    pair_features: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.conformer.n_atoms != self.graph2d.n_atoms:
            raise ValueError(
                f"conformer has {self.conformer.n_atoms} rows for "
                f"{self.graph2d.n_atoms} atoms"
            )
        if self.atom_features is None:
            self.atom_features = atom_features(self.graph2d)
        if self.pair_features is None:
            self.pair_features = pair_features(self.graph2d)


def atom_is_stable(graph: MolecularGraph2D, valence_sum: float, idx: int) -> bool:
    a = graph.atoms[idx]
    return valence_sum in adjusted_valences(a.symbol, a.charge)


def compute_atom_stability(graph: MolecularGraph2D) -> float:
    """Fraction of atoms whose bond-order sum hits an allowed valence.

    Aromatic bonds count 1.5. Explicit-H convention: no implicit hydrogens
    are credited, so a bare carbon is unstable.
    """
    if graph.n_atoms == 0:
        return 0.0
    sums = graph.valence_sums()
    stable = sum(1 for i in range(graph.n_atoms) if atom_is_stable(graph, sums[i], i))
    return stable / graph.n_atoms


def molecule_stable(graph: MolecularGraph2D) -> bool:
    return graph.n_atoms > 0 and compute_atom_stability(graph) == 1.0


def valences_admissible(graph: MolecularGraph2D) -> bool:
    """Every atom at or below its maximum charge-adjusted valence."""
    sums = graph.valence_sums()
    return all(
        sums[i] <= max_adjusted_valence(a.symbol, a.charge)
        for i, a in enumerate(graph.atoms)
    )


def is_valid_and_connected(graph: MolecularGraph2D) -> bool:
    return valences_admissible(graph) and graph.n_components() == 1
