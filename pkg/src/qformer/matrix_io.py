"""CSV matrix ingestion and delimited report output.

Format: UTF-8, row-major, comma separated, '.' decimal separator, optional
first comment line ``# rows cols``; complex entries written as ``a+bi``.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import InvalidInputError


class MatrixParseError(InvalidInputError):
    """Raised when a matrix file cannot be parsed."""


def _parse_entry(text: str) -> complex:
    t = text.strip().replace(" ", "")
    if not t:
        raise MatrixParseError("empty entry")
    try:
        if "i" in t:
            return complex(t.replace("i", "j"))
        return complex(float(t))
    except ValueError as exc:
        raise MatrixParseError(f"cannot parse entry {text!r}") from exc


def load_matrix(path: str | Path) -> np.ndarray:
    """Read a matrix; returns a real array when all entries are real."""
    path = Path(path)
    rows: list[list[complex]] = []
    declared: tuple[int, int] | None = None
    with path.open("r", encoding="utf-8", newline="") as fh:
        first = True
        for line in fh:
            stripped = line.strip()
            if not stripped:
                continue
            if first and stripped.startswith("#"):
                parts = stripped[1:].split()
                if len(parts) == 2 and all(p.isdigit() for p in parts):
                    declared = (int(parts[0]), int(parts[1]))
                first = False
                continue
            first = False
            rows.append([_parse_entry(cell) for cell in stripped.split(",")])
    if not rows:
        raise MatrixParseError(f"{path} holds no data rows")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise MatrixParseError(f"{path} has ragged rows")
    m = np.array(rows, dtype=complex)
    if declared is not None and m.shape != declared:
        raise MatrixParseError(f"{path} declares {declared} but holds {m.shape}")
    if np.all(np.abs(m.imag) == 0):
        return m.real
    return m


def format_entry(value) -> str:
    v = complex(value)
    if v.imag == 0:
        return repr(v.real)
    sign = "+" if v.imag >= 0 else "-"
    return f"{v.real!r}{sign}{abs(v.imag)!r}i"


def save_matrix(path: str | Path, matrix: np.ndarray) -> None:
    m = np.asarray(matrix)
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {m.shape[0]} {m.shape[1]}\n")
        for row in m:
            fh.write(",".join(format_entry(v) for v in row) + "\n")


def save_table(path: str | Path, header: list[str], rows: list[list]) -> None:
    """Delimited report table with a fixed column order."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
