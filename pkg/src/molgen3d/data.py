"""Dataset records and their file formats.

A record is one molecule: its token string, explicit-hydrogen graph
(atoms + bonds), one conformer, and optional property values. JSONL is
the canonical interchange; XYZ directories import with a bond sidecar
because bare XYZ carries no bond orders. A JSONL line holding a single
"__meta__" object is file metadata (config hash, seed), not a record.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chem.elements import ELEMENTS
from .chem.graph import Atom, Bond, BondOrder, Conformer, GeometricGraph, MolecularGraph2D
from .nn.rng import RngStream

META_KEY = "__meta__"


class RecordError(ValueError):
    """A record line cannot be turned into a molecule."""


@dataclass
class DatasetRecord:
    selfies: str | None
    atoms: list[tuple[str, int]]
    bonds: list[tuple[int, int, float]]
    coords: np.ndarray
    properties: dict[str, float] = field(default_factory=dict)
    source_line: int | None = None  # line (or file) number at parse, not serialized

    def graph2d(self) -> MolecularGraph2D:
        return MolecularGraph2D(
            atoms=[Atom(sym, charge) for sym, charge in self.atoms],
            bonds=[Bond(i, j, BondOrder.from_value(o)) for i, j, o in self.bonds],
        )

    def geometric(self) -> GeometricGraph:
        return GeometricGraph(self.graph2d(), Conformer(self.coords))

    def to_json_dict(self) -> dict:
        out = {
            "selfies": self.selfies,
            "atoms": [[sym, charge] for sym, charge in self.atoms],
            "bonds": [[i, j, o] for i, j, o in self.bonds],
            "coords": [[float(v) for v in row] for row in np.asarray(self.coords)],
        }
        if self.properties:
            out["properties"] = {k: float(v) for k, v in sorted(self.properties.items())}
        return out


def record_from_geometric(
    geom: GeometricGraph,
    selfies: str | None = None,
    properties: dict[str, float] | None = None,
) -> DatasetRecord:
    g = geom.graph2d
    return DatasetRecord(
        selfies=selfies,
        atoms=[(a.symbol, a.charge) for a in g.atoms],
        bonds=[(b.i, b.j, float(b.order.value)) for b in g.bonds],
        coords=np.asarray(geom.conformer.coordinates, dtype=np.float64),
        properties=dict(properties or {}),
    )


def _parse_record(obj: dict) -> DatasetRecord:
    if not isinstance(obj, dict):
        raise RecordError(f"record must be an object, got {type(obj).__name__}")
    for key in ("atoms", "bonds", "coords"):
        if key not in obj:
            raise RecordError(f"missing field {key!r}")
    atoms = []
    for k, entry in enumerate(obj["atoms"]):
        if not (isinstance(entry, (list, tuple)) and len(entry) == 2):
            raise RecordError(f"atoms[{k}] must be [element, charge]")
        sym, charge = entry
        if sym not in ELEMENTS:
            raise RecordError(f"atoms[{k}]: unknown element {sym!r}")
        if not isinstance(charge, int) or isinstance(charge, bool):
            raise RecordError(f"atoms[{k}]: charge must be an integer")
        atoms.append((sym, charge))
    bonds = []
    for k, entry in enumerate(obj["bonds"]):
        if not (isinstance(entry, (list, tuple)) and len(entry) == 3):
            raise RecordError(f"bonds[{k}] must be [i, j, order]")
        i, j, order = entry
        if not isinstance(i, int) or not isinstance(j, int):
            raise RecordError(f"bonds[{k}]: endpoints must be integers")
        try:
            BondOrder.from_value(float(order))
        except ValueError as exc:
            raise RecordError(f"bonds[{k}]: {exc}")
        bonds.append((i, j, float(order)))
    coords = np.asarray(obj["coords"], dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise RecordError(f"coords must be Nx3, got shape {coords.shape}")
    if coords.shape[0] != len(atoms):
        raise RecordError(
            f"coords rows ({coords.shape[0]}) != atom count ({len(atoms)})"
        )
    if not np.isfinite(coords).all():
        raise RecordError("coords contain non-finite values")
    selfies = obj.get("selfies")
    if selfies is not None and not isinstance(selfies, str):
        raise RecordError("selfies must be a string when present")
    props = obj.get("properties") or {}
    if not isinstance(props, dict):
        raise RecordError("properties must be an object")
    properties = {}
    for name, value in props.items():
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise RecordError(f"properties[{name!r}] must be a number")
        properties[str(name)] = float(value)
    record = DatasetRecord(
        selfies=selfies, atoms=atoms, bonds=bonds, coords=coords,
        properties=properties,
    )
    try:
        record.graph2d()
    except ValueError as exc:
        raise RecordError(str(exc))
    return record


def read_jsonl(path: str | Path) -> tuple[list[DatasetRecord], list[tuple[int, str]], dict]:
    """All parseable records, line-numbered rejects, and file metadata."""
    records: list[DatasetRecord] = []
    rejects: list[tuple[int, str]] = []
    meta: dict = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                rejects.append((line_no, f"not valid JSON: {exc}"))
                continue
            if isinstance(obj, dict) and set(obj) == {META_KEY}:
                meta = obj[META_KEY]
                continue
            try:
                rec = _parse_record(obj)
                rec.source_line = line_no
                records.append(rec)
            except RecordError as exc:
                rejects.append((line_no, str(exc)))
    return records, rejects, meta


def write_jsonl(
    path: str | Path, records: list[DatasetRecord], meta: dict | None = None
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        if meta is not None:
            fh.write(json.dumps({META_KEY: meta}, sort_keys=True) + "\n")
        for rec in records:
            fh.write(json.dumps(rec.to_json_dict(), sort_keys=True) + "\n")


# -- XYZ import -----------------------------------------------------------------


def _read_xyz_file(path: Path) -> tuple[list[str], np.ndarray]:
    lines = path.read_text().splitlines()
    if not lines:
        raise RecordError("empty xyz file")
    try:
        n = int(lines[0].split()[0])
    except (ValueError, IndexError):
        raise RecordError(f"first line must be the atom count, got {lines[0]!r}")
    body = lines[2 : 2 + n]
    if len(body) < n:
        raise RecordError(f"expected {n} atom lines, found {len(body)}")
    symbols = []
    coords = np.zeros((n, 3))
    for k, line in enumerate(body):
        parts = line.split()
        if len(parts) < 4:
            raise RecordError(f"atom line {k + 3}: need 'El x y z', got {line!r}")
        symbols.append(parts[0])
        try:
            coords[k] = [float(p) for p in parts[1:4]]
        except ValueError:
            raise RecordError(f"atom line {k + 3}: non-numeric coordinate")
    return symbols, coords


def read_xyz_dir(path: str | Path) -> tuple[list[DatasetRecord], list[tuple[int, str]], dict]:
    """One record per .xyz file. Bonds come from '<stem>.bonds.json',
    falling back to a shared 'bonds.json' (identical topology). Reject
    numbering is by file order since there are no shared line numbers.
    """
    root = Path(path)
    records: list[DatasetRecord] = []
    rejects: list[tuple[int, str]] = []
    shared = root / "bonds.json"
    files = sorted(root.glob("*.xyz"))
    for file_no, xyz in enumerate(files, start=1):
        sidecar = xyz.with_suffix(".bonds.json")
        if not sidecar.exists():
            sidecar = shared
        try:
            if not sidecar.exists():
                raise RecordError(f"no bond sidecar for {xyz.name}")
            symbols, coords = _read_xyz_file(xyz)
            side = json.loads(sidecar.read_text())
            bonds = [(int(i), int(j), float(o)) for i, j, o in side.get("bonds", [])]
            charges = side.get("charges") or [0] * len(symbols)
            if len(charges) != len(symbols):
                raise RecordError(
                    f"{sidecar.name}: {len(charges)} charges for {len(symbols)} atoms"
                )
            obj = {
                "selfies": side.get("selfies"),
                "atoms": [[s, int(c)] for s, c in zip(symbols, charges)],
                "bonds": [[i, j, o] for i, j, o in bonds],
                "coords": coords.tolist(),
                "properties": side.get("properties") or {},
            }
            rec = _parse_record(obj)
            rec.source_line = file_no
            records.append(rec)
        except (RecordError, json.JSONDecodeError, OSError) as exc:
            rejects.append((file_no, f"{xyz.name}: {exc}"))
    return records, rejects, {}


def write_xyz_dir(path: str | Path, records: list[DatasetRecord]) -> None:
    """Inverse of read_xyz_dir: one numbered .xyz plus .bonds.json each."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    for k, rec in enumerate(records):
        lines = [str(len(rec.atoms)), f"record {k}"]
        for (sym, _), row in zip(rec.atoms, np.asarray(rec.coords)):
            lines.append(f"{sym} {row[0]:.8f} {row[1]:.8f} {row[2]:.8f}")
        (root / f"mol{k:05d}.xyz").write_text("\n".join(lines) + "\n")
        side = {
            "bonds": [[i, j, o] for i, j, o in rec.bonds],
            "charges": [charge for _, charge in rec.atoms],
        }
        if rec.selfies is not None:
            side["selfies"] = rec.selfies
        if rec.properties:
            side["properties"] = {k2: float(v) for k2, v in sorted(rec.properties.items())}
        (root / f"mol{k:05d}.bonds.json").write_text(json.dumps(side, sort_keys=True) + "\n")


# -- splits ----------------------------------------------------------------------


def split_indices(
    n: int, fractions: tuple[float, float, float], seed: int
) -> dict[str, list[int]]:
    """Deterministic train/val/test index lists; sizes by largest remainder."""
    if n <= 0:
        raise ValueError("cannot split an empty dataset")
    raw = [f * n for f in fractions]
    counts = [int(np.floor(r)) for r in raw]
    short = n - sum(counts)
    order = sorted(range(3), key=lambda k: (-(raw[k] - counts[k]), k))
    for k in order[:short]:
        counts[k] += 1
    perm = RngStream(seed).substream("split").permutation(n)
    out = {}
    lo = 0
    for name, count in zip(("train", "val", "test"), counts):
        out[name] = sorted(int(i) for i in perm[lo : lo + count])
        lo += count
    return out
