"""Checkpoint I/O: named tensors in one little-endian flat binary + manifest.

<prefix>.params.bin   raw buffers back to back
<prefix>.manifest.json  {"format": ..., "tensors": {name: {shape, dtype, offset}}}
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

FORMAT_NAME = "flat-le-v1"
_DTYPES = {"float32": "<f4", "float64": "<f8"}


def save_checkpoint(
    prefix: str | Path,
    tensors: dict[str, np.ndarray],
    extra: dict | None = None,
) -> None:
    """Write tensors (name -> array) plus an optional JSON-able extra blob."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    manifest: dict = {"format": FORMAT_NAME, "tensors": {}, "extra": extra or {}}
    offset = 0
    chunks: list[bytes] = []
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        dtype_name = str(arr.dtype)
        if dtype_name not in _DTYPES:
            raise ValueError(f"{name}: unsupported checkpoint dtype {dtype_name}")
        raw = np.ascontiguousarray(arr, dtype=_DTYPES[dtype_name]).tobytes()
        manifest["tensors"][name] = {
            "shape": list(arr.shape),
            "dtype": dtype_name,
            "offset": offset,
            "nbytes": len(raw),
        }
        chunks.append(raw)
        offset += len(raw)
    Path(str(prefix) + ".params.bin").write_bytes(b"".join(chunks))
    Path(str(prefix) + ".manifest.json").write_text(
        json.dumps(manifest, indent=1, sort_keys=True), encoding="utf-8"
    )


def load_checkpoint(prefix: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read back (tensors, extra). Missing files raise FileNotFoundError."""
    manifest_path = Path(str(prefix) + ".manifest.json")
    blob_path = Path(str(prefix) + ".params.bin")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format") != FORMAT_NAME:
        raise ValueError(f"unknown checkpoint format {manifest.get('format')!r}")
    blob = blob_path.read_bytes()
    tensors: dict[str, np.ndarray] = {}
    for name, info in manifest["tensors"].items():
        arr = np.frombuffer(
            blob, dtype=_DTYPES[info["dtype"]], count=int(np.prod(info["shape"], dtype=np.int64)) if info["shape"] else 1,
            offset=info["offset"],
        )
        tensors[name] = arr.reshape(info["shape"]).astype(info["dtype"])
    return tensors, manifest.get("extra", {})


def checkpoint_byte_hash(prefix: str | Path) -> str:
    """sha256 over the parameter blob; pins a frozen model's exact bytes."""
    return hashlib.sha256(Path(str(prefix) + ".params.bin").read_bytes()).hexdigest()
