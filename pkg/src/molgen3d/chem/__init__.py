"""Chemistry core: elements, graphs, geometry, hashing, fingerprints."""

from .elements import (
    ELEMENT_ORDER,
    ELEMENTS,
    Element,
    UnknownElementError,
    adjusted_valences,
    get_element,
    max_adjusted_valence,
)
from .fingerprints import DEFAULT_N_BITS, DEFAULT_RADIUS, morgan_bits, tanimoto
from .geometry import GeomMeasurements, measure_geometry
from .graph import (
    PAIR_FEATURE_DIM,
    Atom,
    Bond,
    BondOrder,
    Conformer,
    GeometricGraph,
    MolecularGraph2D,
    atom_feature_dim,
    atom_features,
    compute_atom_stability,
    is_valid_and_connected,
    molecule_stable,
    pair_features,
    valences_admissible,
)
from .hashing import canonical_hash, wl_colors

__all__ = [
    "ELEMENT_ORDER",
    "ELEMENTS",
    "Element",
    "UnknownElementError",
    "adjusted_valences",
    "get_element",
    "max_adjusted_valence",
    "DEFAULT_N_BITS",
    "DEFAULT_RADIUS",
    "morgan_bits",
    "tanimoto",
    "GeomMeasurements",
    "measure_geometry",
    "PAIR_FEATURE_DIM",
    "Atom",
    "Bond",
    "BondOrder",
    "Conformer",
    "GeometricGraph",
    "MolecularGraph2D",
    "atom_feature_dim",
    "atom_features",
    "compute_atom_stability",
    "is_valid_and_connected",
    "molecule_stable",
    "pair_features",
    "valences_admissible",
    "canonical_hash",
    "wl_colors",
]
