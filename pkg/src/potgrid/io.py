"""CSV / PGM serialisation of masks and grid functions.

CSV layout: line ``k`` holds the cells ``ix = k``, comma separated over
``iy``.  Cells off the support are written ``nan``; flagged -inf cells are
written ``-inf``.  Masks are written as 0/1.

PGM files are plain "P2" heatmaps, rows running from the top (largest
``iy``) down, with the affine grey-scale map recorded in ``<file>.scale``.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .geometry import DomainMask, GridFunction, GridSpec

MAXVAL = 255


def fmt(v: float) -> str:
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "-inf" if v < 0 else "inf"
    return format(float(v) + 0.0, ".17g")  # + 0.0 folds -0 into 0


def write_grid(path, grid: GridSpec):
    lines = [
        f"origin_x = {fmt(grid.origin[0])}",
        f"origin_y = {fmt(grid.origin[1])}",
        f"h = {fmt(grid.h)}",
        f"nx = {grid.nx}",
        f"ny = {grid.ny}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def read_grid(path) -> GridSpec:
    kv = read_kv(path)
    return GridSpec((float(kv["origin_x"]), float(kv["origin_y"])), float(kv["h"]), int(kv["nx"]), int(kv["ny"]))


def read_kv(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"expected 'key = value', got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def write_kv(path, items):
    Path(path).write_text("".join(f"{k} = {v}\n" for k, v in items))


def write_csv(path, obj):
    if isinstance(obj, DomainMask):
        rows = ("," .join("1" if c else "0" for c in row) for row in obj.cells)
    elif isinstance(obj, GridFunction):
        rows = (",".join(fmt(v) for v in row) for row in obj.masked())
    else:
        rows = (",".join(fmt(v) for v in row) for row in np.asarray(obj, float))
    Path(path).write_text("\n".join(rows) + "\n")


def read_csv_array(path) -> np.ndarray:
    lines = Path(path).read_text().split()
    return np.array([[float(t) for t in line.split(",")] for line in lines])


def read_mask(path, grid: GridSpec) -> DomainMask:
    return DomainMask(grid, read_csv_array(path) != 0)


def read_function(path, grid: GridSpec) -> GridFunction:
    a = read_csv_array(path)
    support = DomainMask(grid, ~np.isnan(a))
    return GridFunction(support, np.where(np.isnan(a), 0.0, a))


def write_pgm(path, obj):
    if isinstance(obj, DomainMask):
        a = obj.cells.astype(float)
        valid = np.ones(a.shape, bool)
    elif isinstance(obj, GridFunction):
        a = obj.values
        valid = obj.finite_cells()
    else:
        a = np.asarray(obj, float)
        valid = np.isfinite(a)
    if valid.any():
        lo, hi = float(a[valid].min()), float(a[valid].max())
    else:
        lo, hi = 0.0, 0.0
    span = hi - lo
    gray = np.zeros(a.shape, int)
    if span > 0:
        gray[valid] = np.rint((a[valid] - lo) / span * MAXVAL).astype(int)
    img = gray.T[::-1]
    body = "\n".join(" ".join(str(g) for g in row) for row in img)
    Path(path).write_text(f"P2\n{a.shape[0]} {a.shape[1]}\n{MAXVAL}\n{body}\n")
    write_kv(
        str(path) + ".scale",
        [("vmin", fmt(lo)), ("vmax", fmt(hi)), ("maxval", MAXVAL), ("map", "gray = round((v - vmin) / (vmax - vmin) * maxval)")],
    )


def write_both(outdir, stem, obj):
    outdir = Path(outdir)
    write_csv(outdir / f"{stem}.csv", obj)
    write_pgm(outdir / f"{stem}.pgm", obj)
