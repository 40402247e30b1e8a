"""CSV / JSON / binary snapshot persistence.

CSV dialect: comma separator, one header row, '.' decimal point, no locale,
floats written with repr so that re-runs reproduce files bit-exactly.
Binary snapshots are little-endian float64, row-major, with a small header
carrying the dims.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .grids import Field, PeriodicGrid

SNAPSHOT_MAGIC = b"FPIN"


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path):
    """Returns (header, columns dict of float arrays where possible)."""
    lines = Path(path).read_text().strip().split("\n")
    header = lines[0].split(",")
    cols = {h: [] for h in header}
    for line in lines[1:]:
        for h, v in zip(header, line.split(",")):
            try:
                cols[h].append(float(v))
            except ValueError:
                cols[h].append(v)
    return header, {h: np.asarray(v) for h, v in cols.items()}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def write_snapshot(path, field: Field) -> Path:
    """Binary field snapshot: magic, dim, per-axis (n, length), then values."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    grid = field.grid
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<i", grid.dim))
        for i in range(grid.dim):
            fh.write(struct.pack("<id", grid.ns[i], grid.lengths[i]))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())
    return path


def read_snapshot(path) -> Field:
    raw = Path(path).read_bytes()
    if raw[:4] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path} is not a field snapshot")
    off = 4
    (dim,) = struct.unpack_from("<i", raw, off)
    off += 4
    ns, lengths = [], []
    for _ in range(dim):
        n, l = struct.unpack_from("<id", raw, off)
        off += 12
        ns.append(n)
        lengths.append(l)
    vals = np.frombuffer(raw, dtype="<f8", offset=off).reshape(ns)
    return Field(PeriodicGrid(tuple(lengths), tuple(ns)), vals.copy())
