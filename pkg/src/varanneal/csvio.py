"""CSV output: comma separated, 17 significant digits, LF line endings."""

from __future__ import annotations

import csv
import math
import os
from typing import Iterable, Sequence

from . import __version__


def fmt(value) -> str:
    """Cell text; ``None`` and NaN become empty fields."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float) or hasattr(value, "dtype"):
        v = float(value)
        if math.isnan(v):
            return ""
        return f"{v:.17g}"
    return str(value)


def write_csv(path: str, columns: Sequence[str], rows: Iterable[Sequence], *,
              config_hash: str, dt: float | None) -> None:
    """Write a comment line (config hash, dt, version), a header row, then the rows."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_hash={config_hash} dt={fmt(dt)} version={__version__}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"row has {len(row)} cells, expected {len(columns)}")
            w.writerow([fmt(v) for v in row])


def read_csv(path: str) -> tuple[list[str], list[list[str]]]:
    """Header and rows (as strings), skipping ``#`` comment lines."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]
