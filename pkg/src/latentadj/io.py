"""Delimited matrix files and flat key=value configuration files."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InputError

ORIENTATIONS = ("features_by_samples", "samples_by_covariates")


@dataclass(frozen=True)
class LabeledMatrix:
    values: np.ndarray
    row_ids: list
    col_ids: list
    corner: str = "id"

    def transpose(self) -> "LabeledMatrix":
        return LabeledMatrix(self.values.T.copy(), list(self.col_ids), list(self.row_ids), self.corner)


def delimiter_for(path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix == ".csv":
        return ","
    if suffix in (".tsv", ".txt", ".tab"):
        return "\t"
    raise InputError(f"{path}: cannot infer delimiter from extension {suffix!r} (use .tsv or .csv)")


def format_float(v: float) -> str:
    return f"{float(v):.17g}"


def _duplicates(ids: Sequence[str]) -> list:
    seen, dup = set(), []
    for i in ids:
        if i in seen:
            dup.append(i)
        seen.add(i)
    return dup


def read_matrix(path, orientation: str = "features_by_samples") -> LabeledMatrix:
    """Read a labeled numeric matrix: first row holds column ids, first column row ids.

    ``orientation`` only documents what rows and columns mean; it is checked
    but the matrix is returned as stored.  Parsing uses Python's float(),
    which is locale independent.  Missing or non-numeric cells, ragged rows
    and duplicate ids raise :class:`InputError` with 1-based line/column
    coordinates.
    """
    if orientation not in ORIENTATIONS:
        raise InputError(f"orientation must be one of {ORIENTATIONS}")
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter_for(path)))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise InputError(f"{path}: need a header line and at least one data line")
    header = [c.strip() for c in rows[0]]
    col_ids = header[1:]
    width = len(header)
    row_ids = []
    values = np.empty((len(rows) - 1, width - 1))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise InputError(f"{path}: line {i} has {len(row)} fields, header has {width}")
        row_ids.append(row[0].strip())
        for j, cell in enumerate(row[1:], start=2):
            try:
                v = float(cell)
            except ValueError:
                raise InputError(f"{path}: line {i}, column {j} ({col_ids[j - 2]!r}): "
                                 f"non-numeric value {cell!r}") from None
            if not math.isfinite(v):
                raise InputError(f"{path}: line {i}, column {j} ({col_ids[j - 2]!r}): "
                                 f"non-finite value {cell!r}")
            values[i - 2, j - 2] = v
    for what, ids in (("row", row_ids), ("column", col_ids)):
        dup = _duplicates(ids)
        if dup:
            raise InputError(f"{path}: duplicate {what} id {dup[0]!r}")
    return LabeledMatrix(values, row_ids, col_ids, corner=header[0] or "id")


def write_matrix(path, values, row_ids, col_ids, corner: str = "id") -> None:
    """Write a labeled matrix with 17 significant digits (exact float round trip)."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    delim = delimiter_for(path)
    with open(path, "w", newline="") as fh:
        fh.write(delim.join([corner, *map(str, col_ids)]) + "\n")
        for rid, row in zip(row_ids, values):
            fh.write(delim.join([str(rid), *map(format_float, row)]) + "\n")


def read_config(path) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment, blank lines are skipped."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}: line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if not key:
            raise InputError(f"{path}: line {lineno}: empty key")
        out[key] = value
    return out
