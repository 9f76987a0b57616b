"""Plain-file writers: CSV, JSON, binary PGM and legacy VTK structured points."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else _fmt(v) for v in row])
    return path


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if hasattr(obj, "value") and not isinstance(obj, (int, float, str, bool)):
        return obj.value
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps_json(obj), encoding="utf-8")
    return path


def write_pgm(path, image) -> Path:
    """8-bit binary PGM (P5); masked pixels are written as 0."""
    img = np.ma.filled(np.ma.asarray(image), 0)
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError("PGM image must be 2D")
    if img.dtype != np.uint8:
        img = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    rows, cols = img.shape
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end].decode("ascii"))
        pos = end
    if tokens[0] != "P5":
        raise ValueError("not a binary PGM")
    cols, rows = int(tokens[1]), int(tokens[2])
    pos += 1
    return np.frombuffer(data[pos:pos + rows * cols], dtype=np.uint8).reshape(rows, cols)


def write_vtk(path, grid, cell_data: dict, title: str = "micromix") -> Path:
    """Legacy VTK STRUCTURED_POINTS (ASCII) with cell-centred scalars.

    ``grid`` supplies dims, spacing and origin in micrometres; points are the
    cell corners so each array has one value per cell, x fastest.
    """
    nx, ny, nz = grid.dims
    h = grid.spacing
    ox, oy, oz = grid.origin
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET STRUCTURED_POINTS",
             f"DIMENSIONS {nx + 1} {ny + 1} {nz + 1}",
             f"ORIGIN {ox!r} {oy!r} {oz!r}", f"SPACING {h!r} {h!r} {h!r}",
             f"CELL_DATA {nx * ny * nz}"]
    for name, arr in cell_data.items():
        a = np.asarray(arr)
        if a.shape == (3, nx, ny, nz):
            lines.append(f"VECTORS {name} double")
            flat = a.transpose(3, 2, 1, 0).reshape(-1, 3)
            lines += [f"{x:.9g} {y:.9g} {z:.9g}" for x, y, z in flat]
            continue
        if a.shape != (nx, ny, nz):
            raise ValueError(f"array {name!r} has shape {a.shape}, expected {(nx, ny, nz)}")
        kind = "int" if np.issubdtype(a.dtype, np.integer) else "double"
        lines += [f"SCALARS {name} {kind} 1", "LOOKUP_TABLE default"]
        flat = a.transpose(2, 1, 0).ravel()
        fmt = "{:d}" if kind == "int" else "{:.9g}"
        lines += [" ".join(fmt.format(v) for v in flat[i:i + 9]) for i in range(0, flat.size, 9)]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    return path
