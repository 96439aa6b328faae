"""Serialisation of run series and grid snapshots.

CSV files start with one ``# {json}`` metadata line, followed by a header
row and one row per record.  Floats are written with 17 significant digits
so parsing recovers every value bit for bit.  JSON output wraps the same
content as ``{"meta": ..., "columns": ..., "rows": [...]}``.

Snapshots are a single JSON header line (grid, time, model, rates, field
shapes) followed by the little-endian float64 data of each field in header
order.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError
from ..series import RunSeries

__all__ = ["emit", "to_csv_text", "read_csv", "read_json", "read_series",
           "write_snapshot", "read_snapshot"]


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return "%.17g" % x


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    return str(o)


def _meta_line(meta: dict) -> str:
    return json.dumps(meta, sort_keys=True, default=_json_default)


def to_csv_text(series: RunSeries) -> str:
    buf = io.StringIO()
    buf.write("# " + _meta_line(series.meta) + "\n")
    writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
    cols = series.columns or list(series.meta.get("columns", []))
    if cols:
        writer.writerow(cols)
    for row in series.rows:
        writer.writerow([_fmt(row[c]) for c in cols])
    return buf.getvalue()


def _finite_or_str(x):
    x = float(x)
    return x if math.isfinite(x) else repr(x)


def emit(series: RunSeries, fmt: str, path) -> Path:
    """Write ``series`` as ``csv`` or ``json`` to ``path``.

    I/O errors propagate unchanged.
    """
    p = Path(path)
    if fmt == "csv":
        text = to_csv_text(series)
    elif fmt == "json":
        cols = series.columns or list(series.meta.get("columns", []))
        rows = [[_finite_or_str(r[c]) for c in cols] for r in series.rows]
        # repr() of a float is the shortest string that round-trips
        text = json.dumps({"meta": series.meta, "columns": cols, "rows": rows},
                          default=_json_default, indent=None) + "\n"
    else:
        raise ConfigurationError(f"unknown output format {fmt!r} (expected csv or json)")
    with open(p, "w", newline="") as fh:
        fh.write(text)
    return p


def _parse(x: str) -> float:
    return float(x)


def read_csv(path) -> RunSeries:
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("# "):
            raise ConfigurationError(f"{path}: missing metadata line")
        meta = json.loads(first[2:])
        reader = csv.reader(fh)
        header = next(reader, None)
        rows = []
        if header is not None:
            for rec in reader:
                rows.append({c: _parse(x) for c, x in zip(header, rec)})
    if header and not rows:
        meta.setdefault("columns", header)
    return RunSeries(rows=rows, meta=meta)


def read_json(path) -> RunSeries:
    with open(path) as fh:
        data = json.load(fh)
    cols = data["columns"]
    rows = [{c: float(x) for c, x in zip(cols, r)} for r in data["rows"]]
    meta = data["meta"]
    if cols and not rows:
        meta.setdefault("columns", cols)
    return RunSeries(rows=rows, meta=meta)


def read_series(path) -> RunSeries:
    p = Path(path)
    return read_json(p) if p.suffix == ".json" else read_csv(p)


def write_snapshot(snap: dict, path) -> Path:
    """Write one snapshot as a JSON header line plus raw float64 payload."""
    fields = snap["fields"]
    header = {k: v for k, v in snap.items() if k != "fields"}
    header["fields"] = [[name, list(np.shape(arr))] for name, arr in fields.items()]
    header["dtype"] = "<f8"
    p = Path(path)
    with open(p, "wb") as fh:
        fh.write((_meta_line(header) + "\n").encode())
        for arr in fields.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return p


def read_snapshot(path) -> dict:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        payload = fh.read()
    fields = {}
    offset = 0
    for name, shape in header.pop("fields"):
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).reshape(shape)
        fields[name] = arr.copy()
        offset += 8 * count
    if offset != len(payload):
        raise ConfigurationError(f"{path}: snapshot payload size does not match its header")
    header.pop("dtype", None)
    header["fields"] = fields
    return header
