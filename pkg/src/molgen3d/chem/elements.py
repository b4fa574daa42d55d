"""Element table and valence conventions.

The table is deliberately small: the elements occurring in the QM9/GEOM-style
datasets this package targets. Valences are the usual organic-chemistry
bookkeeping values, not anything quantum mechanical.
"""

from __future__ import annotations

from dataclasses import dataclass


class UnknownElementError(ValueError):
    """Raised when a symbol is not in the element table."""


@dataclass(frozen=True)
class Element:
    symbol: str
    atomic_number: int
    allowed_valences: frozenset[int]
    covalent_radius: float  # Angstrom
    mass: float  # amu

    @property
    def max_valence(self) -> int:
        return max(self.allowed_valences)


_ELEMENT_ROWS = [
    # symbol, Z, allowed valences, covalent radius, mass
    ("H", 1, (1,), 0.31, 1.008),
    ("C", 6, (4,), 0.76, 12.011),
    ("N", 7, (3,), 0.71, 14.007),
    ("O", 8, (2,), 0.66, 15.999),
    ("F", 9, (1,), 0.57, 18.998),
    ("P", 15, (3, 5), 1.07, 30.974),
    ("S", 16, (2, 4, 6), 1.05, 32.06),
    ("Cl", 17, (1,), 1.02, 35.45),
    ("Br", 35, (1,), 1.20, 79.904),
    ("I", 53, (1,), 1.39, 126.904),
]

ELEMENTS: dict[str, Element] = {
    sym: Element(sym, z, frozenset(vals), r, m) for sym, z, vals, r, m in _ELEMENT_ROWS
}

# Fixed ordering used for one-hot atom features and vocabulary construction.
ELEMENT_ORDER: tuple[str, ...] = tuple(sym for sym, *_ in _ELEMENT_ROWS)

# Cation charge raises the bonding capacity of the nitrogen family, anion
# charge lowers it for the oxygen family (ammonium-N binds 4, alkoxide-O 1).
_CATION_PLUS_ONE = {"N", "P"}
_ANION_MINUS_ONE = {"O", "S"}


def get_element(symbol: str) -> Element:
    try:
        return ELEMENTS[symbol]
    except KeyError:
        raise UnknownElementError(f"unknown element symbol: {symbol!r}") from None


def adjusted_valences(symbol: str, charge: int) -> frozenset[int]:
    """Allowed valences of an atom after its formal-charge adjustment."""
    elem = get_element(symbol)
    if charge == +1 and symbol in _CATION_PLUS_ONE:
        return frozenset(v + 1 for v in elem.allowed_valences)
    if charge == -1 and symbol in _ANION_MINUS_ONE:
        return frozenset(max(v - 1, 0) for v in elem.allowed_valences)
    return elem.allowed_valences


def max_adjusted_valence(symbol: str, charge: int) -> int:
    return max(adjusted_valences(symbol, charge))
