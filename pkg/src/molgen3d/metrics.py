"""Evaluation battery: 2D validity/stability/uniqueness/novelty/SNN and
3D geometric-distribution MMD, with histogram export.

Uniqueness is order-independent: graphs are keyed by canonical hash and
counted as distinct hashes, not first-seen-in-order. 3D stability is a
stand-in protocol (distance-cutoff bonds), labeled as such in reports.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chem.elements import get_element
from .chem.fingerprints import DEFAULT_N_BITS, DEFAULT_RADIUS, morgan_bits, tanimoto
from .chem.geometry import measure_geometry
from .chem.graph import (
    Bond,
    BondOrder,
    GeometricGraph,
    MolecularGraph2D,
    compute_atom_stability,
    is_valid_and_connected,
    molecule_stable,
    valences_admissible,
)
from .chem.hashing import canonical_hash

# Geometric bond re-derivation: bonded when closer than the covalent-radius
# sum plus this slack (Angstrom). A stand-in for the unpublished protocol.
BOND_SLACK_ANGSTROM = 0.4
STABILITY_3D_PROTOCOL = "covalent-radius-cutoff-standin"

MIN_MMD_SAMPLES = 20


@dataclass
class MetricReport:
    counts: dict = field(default_factory=dict)
    scores: dict = field(default_factory=dict)
    geometry: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def validate(self) -> None:
        for key, value in self.scores.items():
            if isinstance(value, (int, float)) and not (
                -1e-9 <= value <= 1.0 + 1e-9 or key.startswith("mmd")
            ):
                raise ValueError(f"score {key}={value} outside [0, 1]")
        vc = self.scores.get("vc")
        vu = self.scores.get("vu")
        vun = self.scores.get("vun")
        if vc is not None and vu is not None and vun is not None:
            if not (vun <= vu + 1e-12 and vu <= vc + 1e-12):
                raise ValueError(f"expected vun <= vu <= vc, got {vun}, {vu}, {vc}")

    def as_dict(self) -> dict:
        return {
            "counts": self.counts,
            "scores": self.scores,
            "geometry": self.geometry,
            "metadata": self.metadata,
        }


# -- 2D ------------------------------------------------------------------------


def eval_2d(
    generated: list[MolecularGraph2D], reference_hashes: set[str]
) -> MetricReport:
    n = len(generated)
    report = MetricReport()
    n_valid = sum(1 for g in generated if valences_admissible(g))
    vc_flags = [is_valid_and_connected(g) for g in generated]
    n_connected = sum(vc_flags)
    hashes = sorted(
        canonical_hash(g) for g, ok in zip(generated, vc_flags) if ok
    )
    distinct = set(hashes)
    n_unique = len(distinct)
    n_novel = len(distinct - set(reference_hashes))
    atom_frac = (
        float(np.mean([compute_atom_stability(g) for g in generated])) if n else 0.0
    )
    mol_frac = float(np.mean([molecule_stable(g) for g in generated])) if n else 0.0
    report.counts.update(
        n_generated=n,
        n_valid=n_valid,
        n_connected=n_connected,
        n_unique=n_unique,
        n_novel=n_novel,
    )
    report.scores.update(
        atom_stable_frac=atom_frac,
        mol_stable_frac=mol_frac,
        vc=n_connected / n if n else 0.0,
        vu=n_unique / n if n else 0.0,
        vun=n_novel / n if n else 0.0,
    )
    report.validate()
    return report


def snn(
    generated: list[MolecularGraph2D],
    reference: list[MolecularGraph2D],
    radius: int = DEFAULT_RADIUS,
    n_bits: int = DEFAULT_N_BITS,
) -> float:
    """Mean over generated of the best Tanimoto match in the reference."""
    if not generated or not reference:
        raise ValueError("snn needs non-empty generated and reference sets")
    ref_bits = [morgan_bits(g, radius, n_bits) for g in reference]
    total = 0.0
    for g in generated:
        bits = morgan_bits(g, radius, n_bits)
        total += max(tanimoto(bits, rb) for rb in ref_bits)
    return total / len(generated)


# -- MMD -----------------------------------------------------------------------


def median_heuristic_bandwidth(pooled: np.ndarray) -> float:
    """Median of all pairwise absolute differences; 1.0 when degenerate."""
    diffs = np.abs(pooled[:, None] - pooled[None, :])
    upper = diffs[np.triu_indices(len(pooled), k=1)]
    med = float(np.median(upper)) if upper.size else 0.0
    return med if med > 0 else 1.0


def mmd(a: list[float] | np.ndarray, b: list[float] | np.ndarray) -> float:
    """Unbiased squared MMD with a Gaussian kernel, clamped at zero."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if len(a) < 2 or len(b) < 2:
        raise ValueError(f"mmd needs >= 2 samples per side, got {len(a)}, {len(b)}")
    sigma = median_heuristic_bandwidth(np.concatenate([a, b]))
    gamma = 1.0 / (2.0 * sigma * sigma)

    def kmat(x, y):
        d = x[:, None] - y[None, :]
        return np.exp(-gamma * d * d)

    m, n = len(a), len(b)
    kaa = kmat(a, a)
    kbb = kmat(b, b)
    kab = kmat(a, b)
    term_a = (kaa.sum() - np.trace(kaa)) / (m * (m - 1))
    term_b = (kbb.sum() - np.trace(kbb)) / (n * (n - 1))
    term_ab = 2.0 * kab.sum() / (m * n)
    return max(float(term_a + term_b - term_ab), 0.0)


# -- 3D ------------------------------------------------------------------------


def derive_bonds_from_distances(geom: GeometricGraph) -> MolecularGraph2D:
    """Stand-in bond perception: pairs closer than the covalent-radius sum
    plus slack are bonded; orders copied from the 2D graph when that pair
    is 2D-bonded, single otherwise."""
    graph = geom.graph2d
    coords = geom.conformer.coordinates
    known = {b.key(): b.order for b in graph.bonds}
    radii = [get_element(a.symbol).covalent_radius for a in graph.atoms]
    bonds = []
    for i in range(graph.n_atoms):
        for j in range(i + 1, graph.n_atoms):
            cutoff = radii[i] + radii[j] + BOND_SLACK_ANGSTROM
            if np.linalg.norm(coords[i] - coords[j]) < cutoff:
                bonds.append(Bond(i, j, known.get((i, j), BondOrder.SINGLE)))
    return MolecularGraph2D(list(graph.atoms), bonds)


def pool_measurements(
    geoms: list[GeometricGraph], workers: int = 1
) -> dict[str, dict[str, list[float]]]:
    """family -> type_key -> pooled values, families: lengths/angles/dihedrals.

    workers > 1 fans the per-molecule measurement over a bounded thread
    pool; pooling order stays list order, so results are identical.
    """
    pools: dict[str, dict[str, list[float]]] = {
        "bond_lengths": {},
        "bond_angles": {},
        "dihedral_angles": {},
    }
    if workers > 1 and len(geoms) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            measured = list(pool.map(measure_geometry, geoms))
    else:
        measured = [measure_geometry(g) for g in geoms]
    for meas in measured:
        for family in pools:
            for key, value in getattr(meas, family):
                pools[family].setdefault(key, []).append(value)
    return pools


def eval_3d(
    generated: list[GeometricGraph], reference: list[GeometricGraph],
    workers: int = 1,
) -> MetricReport:
    if not generated or not reference:
        raise ValueError("eval_3d needs non-empty generated and reference sets")
    gen_pools = pool_measurements(generated, workers=workers)
    ref_pools = pool_measurements(reference, workers=workers)
    report = MetricReport()
    geometry: dict = {"per_type": {}, "aggregate": {}, "insufficient": False}
    any_key = False
    for family in ("bond_lengths", "bond_angles", "dihedral_angles"):
        per_type = {}
        weights = {}
        for key in sorted(set(gen_pools[family]) & set(ref_pools[family])):
            gv = gen_pools[family][key]
            rv = ref_pools[family][key]
            if len(gv) < MIN_MMD_SAMPLES or len(rv) < MIN_MMD_SAMPLES:
                continue
            per_type[key] = mmd(gv, rv)
            weights[key] = len(gv) + len(rv)
        geometry["per_type"][family] = per_type
        if per_type:
            any_key = True
            total_w = sum(weights.values())
            geometry["aggregate"][family] = sum(
                per_type[k] * weights[k] for k in per_type
            ) / total_w
        else:
            geometry["aggregate"][family] = None
    geometry["insufficient"] = not any_key

    derived = [derive_bonds_from_distances(g) for g in generated]
    geometry["stability_3d"] = {
        "protocol": STABILITY_3D_PROTOCOL,
        "atom_stable_frac": float(np.mean([compute_atom_stability(g) for g in derived])),
        "mol_stable_frac": float(np.mean([molecule_stable(g) for g in derived])),
    }
    report.geometry = geometry
    return report


# -- histograms -----------------------------------------------------------------


def export_histograms(
    sets: dict[str, tuple[list[float], list[float]]], bins: int = 50
) -> tuple[list[dict], list[str]]:
    """Aligned density histograms per type_key.

    sets: type_key -> (generated values, reference values). Returns (rows,
    notes); each row has type_key, bin_lo, bin_hi, gen_density,
    ref_density. Keys with an empty side are skipped with a note.
    """
    if bins < 2:
        raise ValueError(f"need at least 2 bins, got {bins}")
    rows: list[dict] = []
    notes: list[str] = []
    for key in sorted(sets):
        gen, ref = sets[key]
        if not gen or not ref:
            notes.append(f"{key}: skipped (empty sample list)")
            continue
        pooled = np.asarray(list(gen) + list(ref), dtype=np.float64)
        lo, hi = float(pooled.min()), float(pooled.max())
        # A near-zero span collapses linspace into duplicate edges.
        if hi - lo < max(abs(lo), abs(hi), 1.0) * 1e-9:
            lo, hi = lo - 0.5, hi + 0.5
        edges = np.linspace(lo, hi, bins + 1)
        gd, _ = np.histogram(gen, bins=edges, density=True)
        rd, _ = np.histogram(ref, bins=edges, density=True)
        for k in range(bins):
            rows.append(
                {
                    "type_key": key,
                    "bin_lo": float(edges[k]),
                    "bin_hi": float(edges[k + 1]),
                    "gen_density": float(gd[k]),
                    "ref_density": float(rd[k]),
                }
            )
    return rows, notes
