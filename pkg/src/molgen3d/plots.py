"""Report figures: density-histogram panels rendered headlessly to PNG.

Each geometry family (bond lengths, bond angles, dihedral angles) gets
one figure with up to a handful of per-type panels, generated vs
reference as step plots over the shared bin grid. PNGs omit the writer
metadata chunk so byte content depends only on the data.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

_FAMILY_LABELS = {
    "bond_lengths": ("bond length", "angstrom"),
    "bond_angles": ("bond angle", "degrees"),
    "dihedral_angles": ("dihedral angle", "degrees"),
}


def render_histogram_figure(
    family: str,
    rows: list[dict],
    out_path: str | Path,
    max_panels: int = 6,
    dpi: int = 110,
) -> Path | None:
    """Step-plot panels for the family's first max_panels type keys.

    rows: export_histograms output filtered to this family. Returns the
    written path, or None when there is nothing to draw.
    """
    by_key: dict[str, list[dict]] = {}
    for row in rows:
        by_key.setdefault(row["type_key"], []).append(row)
    keys = sorted(by_key)[:max_panels]
    if not keys:
        return None
    label, unit = _FAMILY_LABELS.get(family, (family, "value"))
    n_cols = min(3, len(keys))
    n_rows = (len(keys) + n_cols - 1) // n_cols
    fig, axes = plt.subplots(
        n_rows, n_cols, figsize=(4.2 * n_cols, 3.2 * n_rows), squeeze=False
    )
    for k, key in enumerate(keys):
        ax = axes[k // n_cols][k % n_cols]
        chunk = by_key[key]
        edges = [c["bin_lo"] for c in chunk] + [chunk[-1]["bin_hi"]]
        gen = [c["gen_density"] for c in chunk]
        ref = [c["ref_density"] for c in chunk]
        ax.stairs(ref, edges, label="reference", color="#666666", fill=True, alpha=0.35)
        ax.stairs(gen, edges, label="generated", color="#c0392b", linewidth=1.6)
        ax.set_title(key, fontsize=10)
        ax.set_xlabel(unit, fontsize=8)
        ax.set_ylabel("density", fontsize=8)
        ax.tick_params(labelsize=7)
        if k == 0:
            ax.legend(fontsize=8)
    for k in range(len(keys), n_rows * n_cols):
        axes[k // n_cols][k % n_cols].axis("off")
    fig.suptitle(f"{label} distributions", fontsize=12)
    fig.tight_layout(rect=(0, 0, 1, 0.96))
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=dpi, metadata={"Software": None})
    plt.close(fig)
    return out_path


def render_all_histogram_figures(
    rows_by_family: dict[str, list[dict]], out_dir: str | Path
) -> list[Path]:
    out_dir = Path(out_dir)
    written = []
    for family, rows in sorted(rows_by_family.items()):
        path = render_histogram_figure(family, rows, out_dir / f"{family}.png")
        if path is not None:
            written.append(path)
    return written
