"""File formats: JSON reports, sinogram CSV and raw grid files.

All writers are deterministic: floats carry 17 significant digits, line
endings are LF and key order follows insertion order.
"""
import csv
import hashlib
import json
import math
from enum import Enum
from pathlib import Path

import numpy as np

from .radon import ImageGrid, Sinogram


def _fmt_float(v):
    if not math.isfinite(v):
        raise ValueError("NaN/Inf cannot be written to a report")
    return "%.17g" % v


def _encode(obj, out):
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, Enum):
        _encode(obj.value, out)
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_fmt_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                out.append(", ")
            out.append(json.dumps(str(k)) + ": ")
            _encode(v, out)
        out.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(", ")
            _encode(v, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj):
    """JSON text with ``%.17g`` floats; NaN and Inf raise ``ValueError``."""
    out = []
    _encode(obj, out)
    return "".join(out) + "\n"


def write_json(path, obj):
    Path(path).write_bytes(dumps(obj).encode("utf-8"))


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def config_hash(text):
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def write_sinogram_csv(path, sino):
    """Rows ``y1..y{n-1}, t, value``, centers outer and ``t`` inner."""
    m = sino.centers.shape[1]
    header = [f"y{i + 1}" for i in range(m)] + ["t", "value"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, y in enumerate(sino.centers):
            for j, t in enumerate(sino.ts):
                w.writerow([_fmt_float(float(v)) for v in (*y, t, sino.values[i, j])])


def read_sinogram_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
    m = len(header) - 2
    if header != [f"y{i + 1}" for i in range(m)] + ["t", "value"]:
        raise ValueError("unexpected sinogram header")
    ts = []
    for t in body[:, m]:
        if t in ts:
            break
        ts.append(t)
    nt = len(ts)
    if len(body) % nt:
        raise ValueError("sinogram rows do not form a centers x ts table")
    centers = body[::nt, :m]
    values = body[:, m + 1].reshape(len(centers), nt)
    return Sinogram(centers, np.array(ts), values)


def write_grid(path, grid, meta=None):
    """Raw little-endian float64 row-major values plus ``<path>.json``."""
    path = Path(path)
    path.write_bytes(np.ascontiguousarray(grid.values, dtype="<f8").tobytes())
    side = {"origin": grid.origin, "spacing": grid.spacing, "dims": list(grid.dims),
            "meta": meta or {}}
    write_json(str(path) + ".json", side)


def read_grid(path):
    path = Path(path)
    side = read_json(str(path) + ".json")
    dims = tuple(side["dims"])
    values = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(dims).astype(float)
    return ImageGrid(origin=np.array(side["origin"], dtype=float),
                     spacing=np.array(side["spacing"], dtype=float), dims=dims, values=values)
