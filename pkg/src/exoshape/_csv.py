"""Deterministic CSV emission shared by every writer in the package."""

from __future__ import annotations

import csv
import os

import numpy as np
from typing import Iterable, Sequence


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, str):
        return v
    try:
        f = float(v)
    except (TypeError, ValueError):
        return str(v)
    if f.is_integer() and abs(f) < 1e15 and not isinstance(v, float) and str(v).lstrip("-").isdigit():
        return str(int(f))
    return repr(f)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Write UTF-8 CSV with a header row; floats use shortest round-trip repr."""
    d = os.path.dirname(os.fspath(path))
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]
