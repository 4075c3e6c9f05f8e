"""File output: probe series, field snapshots and run manifests.

Snapshots are written twice: as a legacy ASCII VTK ``STRUCTURED_POINTS`` file
that ParaView and VisIt open directly, and as a CSV with one row per node.
Nodes outside the material carry zeros plus ``material = 0``.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Mapping

import numpy as np

from .geometry import Lattice

PROBE_HEADER = ("t", "ux", "uy")


def write_probe_series(path, t, u) -> Path:
    """``t`` has shape (n,), ``u`` shape (n, 2)."""
    path = Path(path)
    t = np.asarray(t, dtype=float)
    u = np.asarray(u, dtype=float).reshape(len(t), 2)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(PROBE_HEADER)
        for ti, (ux, uy) in zip(t, u):
            w.writerow((repr(float(ti)), repr(float(ux)), repr(float(uy))))
    return path


def read_probe_series(path) -> tuple[np.ndarray, np.ndarray]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != PROBE_HEADER:
        raise ValueError(f"{path}: expected header {','.join(PROBE_HEADER)}")
    data = np.array(rows[1:], dtype=float).reshape(-1, 3)
    return data[:, 0], data[:, 1:]


def _masked(a: np.ndarray, material: np.ndarray) -> np.ndarray:
    return np.where(material, a, 0.0)


def write_snapshot(fields: Mapping[str, np.ndarray], lattice: Lattice, path) -> tuple[Path, Path]:
    """Write ``path.vtk`` and ``path.csv`` for scalar fields and the vector ``u``.

    ``fields`` maps names to (nx, ny) scalars, except ``u`` which is (2, nx, ny).
    Returns both paths.
    """
    stem = Path(path)
    if stem.suffix in (".vtk", ".csv"):
        stem = stem.with_suffix("")
    mat = lattice.material
    nx, ny, dh = lattice.nx, lattice.ny, lattice.spacing
    scalars = {k: _masked(np.asarray(v, dtype=float), mat) for k, v in fields.items() if k != "u"}
    u = fields.get("u")
    u = np.zeros((2, nx, ny)) if u is None else np.asarray(u, dtype=float) * mat

    def column(a):  # VTK points run x fastest, the arrays are (nx, ny)
        return a.T.reshape(-1)

    vtk = stem.with_suffix(".vtk")
    lines = [
        "# vtk DataFile Version 3.0",
        "plane strain snapshot",
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {nx} {ny} 1",
        "ORIGIN 0 0 0",
        f"SPACING {dh!r} {dh!r} {dh!r}",
        f"POINT_DATA {nx * ny}",
        "SCALARS material int 1",
        "LOOKUP_TABLE default",
        *map(str, column(mat.astype(int))),
    ]
    for name, a in scalars.items():
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [repr(float(x)) for x in column(a)]
    lines.append("VECTORS u double")
    lines += [f"{ux!r} {uy!r} 0.0" for ux, uy in zip(column(u[0]).tolist(), column(u[1]).tolist())]
    vtk.write_text("\n".join(lines) + "\n", encoding="utf-8")

    csv_path = stem.with_suffix(".csv")
    X, Y = lattice.coordinates()
    names = list(scalars)
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "x", "y", "material", "class", "ux", "uy", *names])
        for i in range(nx):
            for j in range(ny):
                w.writerow([i, j, repr(float(X[i, j])), repr(float(Y[i, j])), int(mat[i, j]),
                            int(lattice.node_class[i, j]), repr(float(u[0, i, j])),
                            repr(float(u[1, i, j])),
                            *(repr(float(scalars[k][i, j])) for k in names)])
    return vtk, csv_path


def read_snapshot_csv(path) -> dict[str, np.ndarray]:
    """Read a snapshot CSV back into (nx, ny) arrays keyed by column name."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], np.array(rows[1:], dtype=float)
    i, j = body[:, 0].astype(int), body[:, 1].astype(int)
    shape = (i.max() + 1, j.max() + 1)
    out = {}
    for c, name in enumerate(head[2:], start=2):
        a = np.zeros(shape)
        a[i, j] = body[:, c]
        out[name] = a
    return out


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_manifest(manifest: Mapping, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(dict(manifest)), indent=2) + "\n", encoding="utf-8")
    return path


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
