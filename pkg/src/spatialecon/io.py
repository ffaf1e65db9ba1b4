"""Dataset and weights files, and report rendering.

Dataset file
    Delimited text with a header row. Columns ``id``, ``x`` and ``y``
    (planar coordinates) are required; every other column is a numeric
    variable. Comma, tab, semicolon and pipe delimiters are detected from
    the header.

Weights file
    First line ``N standardized_flag metric transform [key=value ...]``,
    e.g. ``400 1 euclidean connectivity threshold=1.0``. ``metric`` and
    ``transform`` are ``none`` for matrices of unknown origin. Each
    further line is a zero-based triplet ``i j w`` for one nonzero entry.
    Numbers are written in shortest round-trip form, so a reload is
    bitwise exact.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, ParseError, SpatialError
from .geometry import METRICS, PointSet
from .weights import SpatialWeights, WeightsSpec

__all__ = [
    "REQUIRED_COLUMNS",
    "load_dataset",
    "save_dataset",
    "load_weights",
    "save_weights",
    "format_p",
    "write_json",
]

REQUIRED_COLUMNS = ("id", "x", "y")
_DELIMITERS = ",\t;|"


def _num(v: float) -> str:
    return repr(float(v))


def _parse_float(text, path, line, what):
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"{what}: {text!r} is not a number", path, line) from None
    if not math.isfinite(v):
        raise ParseError(f"{what}: {text!r} is not finite", path, line)
    return v


def load_dataset(path, delimiter: str | None = None) -> PointSet:
    """Read a dataset file into a :class:`PointSet`.

    Row order and column order are preserved.

    Raises
    ------
    ParseError
        Missing required column, duplicate id, non-numeric or non-finite
        cell, ragged row; the message carries the line number.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        text = fh.read()
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty file", path, 1)
    if delimiter is None:
        counts = {d: lines[0].count(d) for d in _DELIMITERS}
        delimiter = max(counts, key=counts.get) if max(counts.values()) > 0 else ","
    reader = csv.reader(lines, delimiter=delimiter)
    header = [h.strip() for h in next(reader)]
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise ParseError(f"missing required column(s): {', '.join(missing)}", path, 1)
    if len(set(header)) != len(header):
        dup = next(h for h in header if header.count(h) > 1)
        raise ParseError(f"duplicate column {dup!r}", path, 1)
    pos = {h: k for k, h in enumerate(header)}
    var_names = [h for h in header if h not in REQUIRED_COLUMNS]

    ids, coords = [], []
    cols = {name: [] for name in var_names}
    first_line = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(row)}", path, lineno)
        ident = row[pos["id"]].strip()
        if ident in first_line:
            raise ParseError(
                f"duplicate id {ident!r} (first seen on line {first_line[ident]})", path, lineno
            )
        first_line[ident] = lineno
        ids.append(ident)
        coords.append((
            _parse_float(row[pos["x"]], path, lineno, "column 'x'"),
            _parse_float(row[pos["y"]], path, lineno, "column 'y'"),
        ))
        for name in var_names:
            cols[name].append(_parse_float(row[pos[name]], path, lineno, f"column {name!r}"))
    if len(ids) < 2:
        raise ParseError(f"need at least 2 data rows, found {len(ids)}", path)
    return PointSet(ids, np.array(coords), {k: np.array(v) for k, v in cols.items()})


def save_dataset(path, points: PointSet, delimiter: str = ",") -> None:
    clash = [c for c in points.variables if c in REQUIRED_COLUMNS]
    if clash:
        raise InvalidInputError(f"variable name(s) {clash} clash with the coordinate columns")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        names = list(points.variables)
        writer.writerow(list(REQUIRED_COLUMNS) + names)
        cols = [points.variables[k] for k in names]
        for i, ident in enumerate(points.ids):
            writer.writerow(
                [ident, _num(points.coords[i, 0]), _num(points.coords[i, 1])]
                + [_num(c[i]) for c in cols]
            )


def save_weights(path, w: SpatialWeights) -> None:
    """Write ``w`` as a sparse triplet file."""
    head = [str(w.n), "1" if w.standardized else "0", w.metric or "none"]
    if w.spec is None:
        head.append("none")
    else:
        head.append(w.spec.kind)
        head.extend(f"{k}={_num(v)}" for k, v in w.spec.params().items())
    rows, cols = np.nonzero(w.values)
    with open(path, "w") as fh:
        fh.write(" ".join(head) + "\n")
        for i, j in zip(rows.tolist(), cols.tolist()):
            fh.write(f"{i} {j} {_num(w.values[i, j])}\n")


def load_weights(path) -> SpatialWeights:
    """Read a triplet weights file written by :func:`save_weights`."""
    path = Path(path)
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty weights file", path, 1)
    head = lines[0].split()
    if len(head) < 4:
        raise ParseError("header must be 'N standardized_flag metric transform [params]'", path, 1)
    try:
        n = int(head[0])
    except ValueError:
        raise ParseError(f"N: {head[0]!r} is not an integer", path, 1) from None
    if n < 2:
        raise ParseError(f"N must be at least 2, got {n}", path, 1)
    if head[1] not in ("0", "1"):
        raise ParseError(f"standardized flag must be 0 or 1, got {head[1]!r}", path, 1)
    standardized = head[1] == "1"
    metric = None if head[2] == "none" else head[2]
    if metric is not None and metric not in METRICS:
        raise ParseError(f"unknown metric {head[2]!r}", path, 1)
    spec = None
    if head[3] != "none":
        params = {}
        for tok in head[4:]:
            key, sep, val = tok.partition("=")
            if not sep or key not in ("threshold", "gamma"):
                raise ParseError(f"bad transform parameter {tok!r}", path, 1)
            params[key] = _parse_float(val, path, 1, key)
        try:
            spec = WeightsSpec(head[3], **params)
        except SpatialError as exc:
            raise ParseError(str(exc), path, 1) from None

    values = np.zeros((n, n))
    seen = set()
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 3:
            raise ParseError(f"expected 'i j w', found {len(parts)} fields", path, lineno)
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"indices must be integers: {line!r}", path, lineno) from None
        if not (0 <= i < n and 0 <= j < n):
            raise ParseError(f"index ({i}, {j}) out of range for N={n}", path, lineno)
        if i == j:
            raise ParseError(f"diagonal entry ({i}, {j}) not allowed", path, lineno)
        if (i, j) in seen:
            raise ParseError(f"duplicate entry ({i}, {j})", path, lineno)
        seen.add((i, j))
        v = _parse_float(parts[2], path, lineno, "weight")
        if v <= 0:
            raise ParseError(f"weight must be positive, got {parts[2]!r}", path, lineno)
        values[i, j] = v
    try:
        return SpatialWeights(values, spec=spec, standardized=standardized, metric=metric)
    except SpatialError as exc:
        raise ParseError(str(exc), path) from None


def format_p(p) -> str:
    """p-values as shown in text reports: 4 significant digits."""
    if p is None or (isinstance(p, float) and math.isnan(p)):
        return "n/a"
    return f"{p:.4g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2)
        fh.write("\n")
