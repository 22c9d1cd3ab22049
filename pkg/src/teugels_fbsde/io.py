"""Versioned, byte-deterministic output files.

CSV files start with a ``# teugels-fbsde <kind> v<N>`` header line.  JSON
files carry ``format`` and ``version`` keys and are written with sorted
keys.  Floats are written with ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
TOOL = "teugels-fbsde"


def _plain(value):
    """Convert numpy scalars and arrays (recursively) to JSON-safe builtins."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


def header_line(kind: str) -> str:
    return f"# {TOOL} {kind} v{FORMAT_VERSION}"


def write_csv(path, kind: str, rows: list[dict], columns: list[str] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if columns is None:
        columns = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        fh.write(header_line(kind) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c, "")) for c in columns])
    return path


def _cell(value):
    value = _plain(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return json.dumps(value)
    return value


def read_csv(path) -> tuple[str, list[dict]]:
    """Return the header line and the rows as strings."""
    with open(path, newline="") as fh:
        header = fh.readline().rstrip("\n")
        if not header.startswith(f"# {TOOL} "):
            raise ValueError(f"{path}: missing {TOOL} header line")
        return header, list(csv.DictReader(fh))


def write_json(path, kind: str, data: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"format": f"{TOOL}/{kind}", "version": FORMAT_VERSION, **_plain(data)}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_json(path, kind: str | None = None) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    if kind is not None and doc.get("format") != f"{TOOL}/{kind}":
        raise ValueError(f"{path}: expected format {TOOL}/{kind}, found {doc.get('format')!r}")
    return doc
