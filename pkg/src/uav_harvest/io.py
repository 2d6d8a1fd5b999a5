"""Result files: JSON for structured solutions, CSV (with unit headers) for series.

Writers produce byte-identical files for identical inputs: keys keep
insertion order, floats use ``repr`` and non-finite values become ``null``
in JSON and ``nan`` in CSV.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from pathlib import Path

import numpy as np

TRAJECTORY_HEADER = ("slot", "x_m", "y_m")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if math.isfinite(v) else "nan"
    return str(v)


def dumps_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


class OutputSet:
    """Tracks written files so a failed run can remove its partial outputs."""

    def __init__(self):
        self.paths: list[Path] = []

    def write_text(self, path, text: str) -> Path:
        path = Path(path)
        if path.parent != Path(""):
            path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".part")
        self.paths.append(tmp)
        tmp.write_text(text)
        os.replace(tmp, path)
        self.paths[-1] = path
        return path

    def write_json(self, path, obj) -> Path:
        return self.write_text(path, dumps_json(obj))

    def write_csv(self, path, header, rows) -> Path:
        return self.write_text(path, dumps_csv(header, rows))

    def remove_all(self) -> None:
        for p in self.paths:
            try:
                p.unlink()
            except FileNotFoundError:
                pass
        self.paths.clear()


def read_trajectory_csv(path) -> np.ndarray:
    """(N, 2) positions from a ``slot, x, y`` CSV with a header row."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ValueError(f"cannot read trajectory {path}: {exc}") from None
    if len(rows) < 2:
        raise ValueError(f"trajectory {path} has no data rows")
    body = rows[1:]
    try:
        slots = [int(r[0]) for r in body]
        q = np.array([[float(r[1]), float(r[2])] for r in body])
    except (IndexError, ValueError) as exc:
        raise ValueError(f"malformed trajectory row in {path}: {exc}") from None
    if slots != list(range(len(slots))):
        raise ValueError(f"trajectory {path}: slots must run 0..N-1 in order")
    return q


def trajectory_rows(q):
    return [(n, float(x), float(y)) for n, (x, y) in enumerate(np.asarray(q, dtype=float))]
