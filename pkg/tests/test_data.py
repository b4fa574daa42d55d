import json

import numpy as np
import pytest

from molgen3d.data import (
    META_KEY,
    DatasetRecord,
    read_jsonl,
    read_xyz_dir,
    split_indices,
    write_jsonl,
    write_xyz_dir,
)


def test_jsonl_round_trip(tmp_path, toy_records):
    path = tmp_path / "records.jsonl"
    write_jsonl(path, toy_records, meta={"kind": "dataset"})
    back, rejects, meta = read_jsonl(path)
    assert not rejects
    assert meta == {"kind": "dataset"}
    assert len(back) == len(toy_records)
    for a, b in zip(toy_records, back):
        assert a.selfies == b.selfies
        assert a.atoms == b.atoms
        assert a.bonds == b.bonds
        assert np.allclose(a.coords, b.coords)
        assert a.properties == b.properties
    # Line numbers point into the file (meta occupies line 1).
    assert back[0].source_line == 2


def test_jsonl_rejects_carry_line_numbers(tmp_path, toy_records):
    path = tmp_path / "dirty.jsonl"
    good = [json.dumps(toy_records[i].to_json_dict()) for i in range(4)]
    lines = [
        json.dumps({META_KEY: {"kind": "dataset"}}),
        good[0],
        "{ not json",
        good[1],
        json.dumps({"selfies": "[C]"}),  # missing atoms/bonds/coords
        good[2],
        json.dumps({**toy_records[3].to_json_dict(), "coords": [[0, 0]]}),
        good[3],
    ]
    path.write_text("\n".join(lines) + "\n")
    records, rejects, meta = read_jsonl(path)
    assert len(records) == 4
    bad_lines = sorted(line for line, _ in rejects)
    assert bad_lines == [3, 5, 7]
    for _, reason in rejects:
        assert reason


def test_xyz_dir_round_trip(tmp_path, toy_records):
    out = tmp_path / "xyz"
    write_xyz_dir(out, toy_records[:5])
    assert len(list(out.glob("*.xyz"))) == 5
    assert len(list(out.glob("*.bonds.json"))) == 5
    back, rejects, _ = read_xyz_dir(out)
    assert not rejects
    assert len(back) == 5
    for a, b in zip(sorted(r.selfies for r in toy_records[:5]),
                    sorted(r.selfies for r in back)):
        assert a == b
    for rec in back:
        assert rec.coords.shape == (len(rec.atoms), 3)


def test_xyz_dir_missing_sidecar_rejects(tmp_path, toy_records):
    out = tmp_path / "xyz"
    write_xyz_dir(out, toy_records[:3])
    victims = sorted(out.glob("*.bonds.json"))
    victims[0].unlink()
    back, rejects, _ = read_xyz_dir(out)
    assert len(back) == 2
    assert len(rejects) == 1
    assert "bond" in rejects[0][1].lower() or "sidecar" in rejects[0][1].lower()


def test_split_indices_partition():
    splits = split_indices(25, [0.8, 0.1, 0.1], seed=7)
    train, val, test = splits["train"], splits["val"], splits["test"]
    assert sorted(train + val + test) == list(range(25))
    assert len(train) == 20 and len(val) in (2, 3) and len(test) in (2, 3)
    assert len(val) + len(test) == 5
    # Sorted within each split, deterministic across calls.
    assert train == sorted(train)
    assert split_indices(25, [0.8, 0.1, 0.1], seed=7) == splits
    assert split_indices(25, [0.8, 0.1, 0.1], seed=8) != splits


def test_split_largest_remainder_exact():
    # Counts must always sum to n even when fractions do not divide it.
    for n in (7, 10, 33, 100):
        splits = split_indices(n, [0.7, 0.2, 0.1], seed=1)
        assert sum(len(v) for v in splits.values()) == n


def test_record_rejects_bad_graph(toy_records):
    rec = toy_records[0]
    with pytest.raises(Exception):
        DatasetRecord(
            selfies=rec.selfies,
            atoms=[("C", 0)],
            bonds=[(0, 5, 1.0)],  # bond to a missing atom
            coords=np.zeros((1, 3)),
            properties={},
        ).graph2d()
