"""Streaming CSV frames: one frame per line, ``#`` comments, optional header."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .atomic import atomic_open
from .errors import DataError


def _parse(fields: list[str]) -> list[float] | None:
    try:
        return [float(f) for f in fields]
    except ValueError:
        return None


def iter_frames(path, width: int | None = None) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(line_number, frame)`` pairs without loading the file.

    Blank lines and lines starting with ``#`` are skipped. The first content
    line is a header when none of its fields is numeric. Every frame must
    have ``width`` finite values (the first frame's width when ``None``).
    """
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    with fh:
        first = True
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            values = _parse(row)
            if values is None:
                if first and not _parse_any(row):
                    first = False
                    continue
                raise DataError(f"{path}:{lineno}: non-numeric value in row {row!r}")
            first = False
            if width is None:
                width = len(values)
            if len(values) != width:
                raise DataError(
                    f"{path}:{lineno}: expected {width} columns, got {len(values)}"
                )
            if not all(math.isfinite(v) for v in values):
                raise DataError(f"{path}:{lineno}: non-finite value")
            yield lineno, np.array(values)


def _parse_any(row: list[str]) -> bool:
    """True when at least one field parses as a number."""
    for f in row:
        try:
            float(f)
            return True
        except ValueError:
            pass
    return False


def read_frames(path, width: int | None = None) -> np.ndarray:
    rows = [x for _, x in iter_frames(path, width)]
    if not rows:
        raise DataError(f"{path}: no frames")
    return np.vstack(rows)


def write_rows(path, rows: Iterable, header: list[str] | None = None, comments: Iterable[str] = ()) -> int:
    """Atomically write numeric rows; returns the number of rows written."""
    n = 0
    with atomic_open(path, "w", newline="", encoding="utf-8") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) for v in np.atleast_1d(r)])
            n += 1
    return n
