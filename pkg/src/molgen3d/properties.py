"""Cheap structural property oracles for conditioning and MAE scoring.

Real quantum-chemical targets (dipole moment, HOMO/LUMO gaps, ...) need an
external estimator; these surrogates are computable from the graph alone,
so the conditioning mechanism can be exercised and scored end to end. Any
property name outside this table must arrive precomputed in the record's
properties map.
"""

from __future__ import annotations

import numpy as np

from .chem.elements import ELEMENTS
from .chem.graph import MolecularGraph2D


def heavy_atom_count(graph: MolecularGraph2D) -> float:
    return float(graph.heavy_atom_count())


def mol_weight(graph: MolecularGraph2D) -> float:
    return float(sum(ELEMENTS[a.symbol].mass for a in graph.atoms))


def polar_atom_count(graph: MolecularGraph2D) -> float:
    """Topological polar-surface proxy: how many N and O atoms."""
    return float(sum(1 for a in graph.atoms if a.symbol in ("N", "O")))


SURROGATE_ORACLES = {
    "heavy_atom_count": heavy_atom_count,
    "mol_weight": mol_weight,
    "polar_atom_count": polar_atom_count,
}


def is_surrogate(name: str) -> bool:
    return name in SURROGATE_ORACLES


def surrogate_value(name: str, graph: MolecularGraph2D) -> float:
    if name not in SURROGATE_ORACLES:
        raise KeyError(
            f"unknown surrogate property {name!r}; choices: {sorted(SURROGATE_ORACLES)}"
        )
    return SURROGATE_ORACLES[name](graph)


def resolve_property(
    name: str, graph: MolecularGraph2D, properties: dict | None
) -> float:
    """Record-supplied value when present, else the surrogate oracle."""
    if properties and name in properties:
        return float(properties[name])
    if is_surrogate(name):
        return surrogate_value(name, graph)
    raise KeyError(
        f"property {name!r} neither stored on the record nor a known surrogate"
    )


def normalizer_stats(values: list[float]) -> tuple[float, float]:
    """(mean, std) for z-scoring; std uses the population convention."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot build a normalizer from zero values")
    return float(arr.mean()), float(arr.std())


def property_mae(
    graphs: list[MolecularGraph2D],
    oracle,
    targets,
    max_failure_frac: float = 0.10,
) -> dict:
    """Mean |oracle(g) - target|; oracle failures excluded and counted.

    targets: one scalar broadcast to all molecules, or one value per
    molecule. More than max_failure_frac oracle failures aborts.
    """
    if not graphs:
        raise ValueError("property_mae needs at least one molecule")
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    if targets.size == 1:
        targets = np.full(len(graphs), targets[0])
    if targets.size != len(graphs):
        raise ValueError(f"{targets.size} targets for {len(graphs)} molecules")
    errors = []
    n_failed = 0
    for g, t in zip(graphs, targets):
        try:
            value = float(oracle(g))
        except Exception:
            n_failed += 1
            continue
        errors.append(abs(value - t))
    if n_failed > max_failure_frac * len(graphs):
        raise ValueError(
            f"oracle failed on {n_failed}/{len(graphs)} molecules (> "
            f"{max_failure_frac:.0%} aborts)"
        )
    mae = float(np.mean(errors)) if errors else float("nan")
    return {"mae": mae, "n_scored": len(errors), "n_failed": n_failed}
