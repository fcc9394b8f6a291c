"""CSV loading with explicit column checks.

Readers return DictReader rows as-is (strings, empty string for missing
halves); numeric parsing happens at plot time.  Errors always name the
file and the offending columns.
"""

from __future__ import annotations

import csv
from datetime import datetime
from pathlib import Path


class FigureDataError(ValueError):
    pass


def load_rows(path, required: tuple[str, ...]) -> list[dict]:
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise FigureDataError(f"{path} has no header row")
        missing = [c for c in required if c not in reader.fieldnames]
        if missing:
            raise FigureDataError(f"{path} is missing column(s): {', '.join(missing)}")
        rows = list(reader)
    if not rows:
        raise FigureDataError(f"{path} has no data rows")
    return rows


def fnum(row: dict, key: str) -> float | None:
    raw = row[key].strip()
    return float(raw) if raw else None


def ts(row: dict, key: str) -> datetime:
    return datetime.fromisoformat(row[key])
