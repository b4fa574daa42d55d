import numpy as np
import pytest

from molgen3d.chem.elements import (
    ELEMENTS,
    UnknownElementError,
    adjusted_valences,
    get_element,
)
from molgen3d.chem.graph import (
    Atom,
    Bond,
    BondOrder,
    Conformer,
    GeometricGraph,
    MolecularGraph2D,
    compute_atom_stability,
    molecule_stable,
)
from molgen3d.chem.geometry import measure_geometry
from molgen3d.chem.fingerprints import morgan_bits, tanimoto
from molgen3d.chem.hashing import canonical_hash
from molgen3d.selfies import decode, tokenize
from oracles import graphs_isomorphic


def _graph(symbols, bonds, charges=None):
    charges = charges or [0] * len(symbols)
    return MolecularGraph2D(
        atoms=[Atom(s, c) for s, c in zip(symbols, charges)],
        bonds=[Bond(i, j, BondOrder.from_value(o)) for i, j, o in bonds],
    )


def _permuted(graph, perm):
    inv = {old: new for new, old in enumerate(perm)}
    return MolecularGraph2D(
        atoms=[graph.atoms[p] for p in perm],
        bonds=[Bond(inv[b.i], inv[b.j], b.order) for b in graph.bonds],
    )


def _values(pairs, key):
    return [v for k, v in pairs if k == key]


def test_element_table():
    for sym, el in ELEMENTS.items():
        assert el.mass > 0
        assert all(v > 0 for v in el.allowed_valences)
        assert el.covalent_radius > 0
    assert get_element("C").allowed_valences == frozenset({4})
    with pytest.raises(UnknownElementError):
        get_element("Xx")


def test_adjusted_valences_charge():
    assert adjusted_valences("N", +1) == frozenset({4})
    assert adjusted_valences("O", -1) == frozenset({1})
    assert adjusted_valences("C", 0) == frozenset({4})


def test_graph_validation_rejects_bad_bonds():
    with pytest.raises(ValueError):
        _graph(["C", "C"], [(0, 2, 1.0)])  # index out of range
    with pytest.raises(ValueError):
        _graph(["C", "C"], [(0, 0, 1.0)])  # self bond
    with pytest.raises(ValueError):
        _graph(["C", "C"], [(0, 1, 1.0), (1, 0, 1.0)])  # duplicate edge


def test_graph_components_and_heavy_count():
    g = _graph(["C", "C", "O", "H"], [(0, 1, 1.0), (2, 3, 1.0)])
    assert g.n_components() == 2
    assert g.heavy_atom_count() == 3


def test_canonical_hash_permutation_invariance():
    # Hash is a function of the isomorphism class, not the atom order.
    text = "[C][C][O][Branch1][C][F][C]"
    g = decode(tokenize(text))
    base = canonical_hash(g)
    rng = np.random.default_rng(7)
    for _ in range(25):
        perm = list(rng.permutation(g.n_atoms))
        assert canonical_hash(_permuted(g, perm)) == base


def test_canonical_hash_separates_non_isomorphic():
    a = decode(tokenize("[C][C][O]"))
    b = decode(tokenize("[C][C][N]"))
    c = decode(tokenize("[C][=C]"))
    hashes = {canonical_hash(a), canonical_hash(b), canonical_hash(c)}
    assert len(hashes) == 3


def test_hash_agrees_with_backtracking_oracle(toy_records):
    rng = np.random.default_rng(11)
    graphs = [r.graph2d() for r in toy_records[:12]]
    for g in graphs:
        perm = list(rng.permutation(g.n_atoms))
        assert graphs_isomorphic(g, _permuted(g, perm))
    for i in range(len(graphs)):
        for j in range(i + 1, len(graphs)):
            same_hash = canonical_hash(graphs[i]) == canonical_hash(graphs[j])
            assert same_hash == graphs_isomorphic(graphs[i], graphs[j])


def test_stability_counts_explicit_h():
    # CH4: carbon valence sum 4 -> stable; strip one H -> unstable atom.
    full = _graph(["C", "H", "H", "H", "H"], [(0, i, 1.0) for i in range(1, 5)])
    assert compute_atom_stability(full) == 1.0
    assert molecule_stable(full)
    missing = _graph(["C", "H", "H", "H"], [(0, i, 1.0) for i in range(1, 4)])
    assert not molecule_stable(missing)
    assert compute_atom_stability(missing) < 1.0


def test_morgan_tanimoto_properties(toy_records):
    graphs = [r.graph2d() for r in toy_records[:8]]
    for g in graphs:
        bits = morgan_bits(g)
        assert tanimoto(bits, bits) == 1.0
    rng = np.random.default_rng(3)
    for g in graphs:
        perm = list(rng.permutation(g.n_atoms))
        assert morgan_bits(_permuted(g, perm)) == morgan_bits(g)
    for i in range(len(graphs)):
        for j in range(len(graphs)):
            t = tanimoto(morgan_bits(graphs[i]), morgan_bits(graphs[j]))
            assert 0.0 <= t <= 1.0


def test_geometry_right_angle():
    g2d = _graph(["O", "H", "H"], [(0, 1, 1.0), (0, 2, 1.0)])
    coords = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    m = measure_geometry(GeometricGraph(graph2d=g2d, conformer=Conformer(coords)))
    (angle,) = _values(m.bond_angles, "H-O-H")
    assert abs(angle - 90.0) < 1e-9
    lengths = _values(m.bond_lengths, "H-O")
    assert len(lengths) == 2
    assert all(abs(v - 1.0) < 1e-12 for v in lengths)


def test_geometry_dihedral_unsigned():
    # Four-atom chain, one torsion; trans layout gives 180 degrees.
    g2d = _graph(["C", "C", "C", "C"], [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)])
    trans = np.array(
        [[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, -1.0, 0.0]]
    )
    m = measure_geometry(GeometricGraph(graph2d=g2d, conformer=Conformer(trans)))
    (d,) = _values(m.dihedral_angles, "C-C-C-C")
    assert abs(d - 180.0) < 1e-9
    # The mirror image must report the same unsigned torsion.
    twist = trans.copy()
    twist[3] = [1.0, -np.cos(0.7), np.sin(0.7)]
    mirror = twist * np.array([1.0, 1.0, -1.0])
    da = _values(
        measure_geometry(
            GeometricGraph(graph2d=g2d, conformer=Conformer(twist))
        ).dihedral_angles,
        "C-C-C-C",
    )[0]
    db = _values(
        measure_geometry(
            GeometricGraph(graph2d=g2d, conformer=Conformer(mirror))
        ).dihedral_angles,
        "C-C-C-C",
    )[0]
    assert abs(da - db) < 1e-9
    assert 0.0 <= da <= 180.0


def test_geometry_counts(toy_records):
    # Every bond yields one length sample under its sorted type key.
    rec = toy_records[0]
    m = measure_geometry(rec.geometric())
    assert len(m.bond_lengths) == len(rec.bonds)
