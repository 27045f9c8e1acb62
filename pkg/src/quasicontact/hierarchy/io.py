"""Grid export: CSV and the compact ``CHK1`` binary dump.

Binary layout (little-endian): magic ``b"CHK1"``, int32 n, int32 d,
int32 N, float64 L, int32 m, then the values as float64 in row-major
order.  The layout (marks / difference / full) follows from the payload
length.  A marks-layout grid without a torus is written with d = N = 0
and L = 0.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .grids import CorrelationGrid, TorusGrid, spatial_slots

MAGIC = b"CHK1"
_HEADER = struct.Struct("<4siiidi")


def write_binary(k: CorrelationGrid, path) -> None:
    grid = k.grid
    d, n_pts, box = (grid.dim, grid.n_points, grid.box) if grid else (0, 0, 0.0)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, k.order, d, n_pts, float(box), k.n_marks))
        fh.write(np.ascontiguousarray(k.values, dtype="<f8").tobytes())


def read_binary(path) -> CorrelationGrid:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError("file too short for a CHK1 header")
    magic, n, d, n_pts, box, m = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(float)
    grid = TorusGrid(d, box, n_pts) if d else None
    for rep in ("marks", "difference", "full"):
        if rep == "difference" and n < 2:
            continue
        if spatial_slots(n, rep) and grid is None:
            continue
        shape = CorrelationGrid.shape_for(n, rep, m, grid)
        if int(np.prod(shape)) == data.size:
            return CorrelationGrid(n, rep, data.reshape(shape), m, grid)
    raise ValueError(f"payload of {data.size} values matches no layout for n={n}")


def _coord_columns(k: CorrelationGrid) -> list:
    prefix = "u" if k.representation == "difference" else "x"
    cols = []
    for s in range(k.slots):
        for a in range(k.grid.dim):
            cols.append(f"{prefix}{s + 1}_{a}" if k.grid.dim > 1 else f"{prefix}{s + 1}")
    return cols


def write_csv(k: CorrelationGrid, path) -> None:
    """One row per grid cell and mark tuple: coordinates, mark indices, value."""
    ndim = k.spatial_ndim
    header = _coord_columns(k) + [f"s{i + 1}" for i in range(k.order)] + ["value"]
    h = k.grid.spacing if k.grid else 0.0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for idx in np.ndindex(k.values.shape):
            coords = [repr(i * h) for i in idx[:ndim]]
            marks = [str(i) for i in idx[ndim:]]
            writer.writerow(coords + marks + [repr(float(k.values[idx]))])


def read_csv_values(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["value"]) for r in rows])
