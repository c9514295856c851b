"""Sweep tables as CSV and nodal fields as legacy VTK or CSV."""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ConfigurationError, OutputError
from .fem import StructuredGrid
from .norms import ErrorReport, SweepResult

SWEEP_COLUMNS = ("epsilon", "l2_error", "l2_rate", "h1_error", "h1_rate", "runtime_s")


def fmt(value: float) -> str:
    """17 significant digits, enough to round-trip any binary64 value."""
    return format(value, ".17g")


def ensure_directory(path: os.PathLike) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OutputError(f"output directory {path} is not writable: {exc}") from exc
    return path


class SweepWriter:
    """Appends one row per epsilon and flushes it, so a failed sweep leaves a valid partial table."""

    def __init__(self, path: os.PathLike):
        self.path = Path(path)
        ensure_directory(self.path.parent)
        try:
            self._fh = open(self.path, "w", newline="", encoding="utf-8")
        except OSError as exc:
            raise OutputError(f"cannot open {self.path}: {exc}") from exc
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(SWEEP_COLUMNS)
        self._fh.flush()
        self._last: ErrorReport | None = None

    def add(self, report: ErrorReport) -> None:
        prev = self._last
        l2_rate = h1_rate = ""
        if prev is not None:
            l2_rate = fmt(_rate(prev.l2_error, report.l2_error))
            h1_rate = fmt(_rate(prev.h1_error, report.h1_error))
        row = [fmt(report.epsilon), fmt(report.l2_error), l2_rate, fmt(report.h1_error), h1_rate,
               fmt(report.seconds)]
        try:
            self._writer.writerow(row)
            self._fh.flush()
        except OSError as exc:
            raise OutputError(f"cannot write {self.path}: {exc}") from exc
        self._last = report

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _rate(a: float, b: float) -> float:
    return math.log2(a / b) if a > 0 and b > 0 else math.nan


def write_sweep_csv(result: SweepResult, path: os.PathLike) -> Path:
    with SweepWriter(path) as w:
        for r in result.reports:
            w.add(r)
    return Path(path)


def read_sweep_csv(path: os.PathLike) -> SweepResult:
    """Inverse of :func:`write_sweep_csv`; rate columns are recomputed, not read."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc}") from exc
    if not rows or tuple(rows[0]) != SWEEP_COLUMNS:
        raise ConfigurationError(f"{path} is not a sweep table (header {rows[:1]})")
    reports = []
    for row in rows[1:]:
        values = dict(zip(SWEEP_COLUMNS, row))
        reports.append(ErrorReport(float(values["epsilon"]), float(values["l2_error"]),
                                   float(values["h1_error"]), seconds=float(values["runtime_s"])))
    return SweepResult(reports)


@dataclass
class FieldDump:
    grid: StructuredGrid
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for name, values in self.arrays.items():
            self.add(name, values)

    def add(self, name: str, values) -> None:
        values = np.asarray(values, dtype=float)
        if values.shape != (self.grid.num_nodes,):
            raise ValueError(f"field {name!r} has shape {values.shape}, expected ({self.grid.num_nodes},)")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"field {name!r} contains non-finite values")
        if any(c.isspace() for c in name) or not name:
            raise ValueError(f"field name {name!r} must be a non-empty token")
        self.arrays[name] = values


def _lines(values: np.ndarray, per_line: int = 6) -> Iterable[str]:
    for k in range(0, len(values), per_line):
        yield " ".join(fmt(v) for v in values[k:k + per_line])


def write_vtk(dump: FieldDump, path: os.PathLike, title: str = "diffdomain field") -> Path:
    """Legacy ASCII STRUCTURED_POINTS; node order x fastest, matching VTK."""
    g = dump.grid
    path = Path(path)
    ensure_directory(path.parent)
    head = [
        "# vtk DataFile Version 3.0",
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {g.nx + 1} {g.ny + 1} 1",
        f"ORIGIN {fmt(g.x0)} {fmt(g.y0)} 0",
        f"SPACING {fmt(g.hx)} {fmt(g.hy)} 1",
        f"POINT_DATA {g.num_nodes}",
    ]
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(head) + "\n")
            for name, values in dump.arrays.items():
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                for line in _lines(values):
                    fh.write(line + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path


def read_vtk(path: os.PathLike) -> FieldDump:
    """Reader for the subset written by :func:`write_vtk`."""
    try:
        tokens = Path(path).read_text(encoding="utf-8").split("\n")
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc}") from exc
    meta = {}
    k = 4
    while k < len(tokens) and not tokens[k].startswith("POINT_DATA"):
        parts = tokens[k].split()
        meta[parts[0]] = parts[1:]
        k += 1
    nx, ny = int(meta["DIMENSIONS"][0]) - 1, int(meta["DIMENSIONS"][1]) - 1
    x0, y0 = float(meta["ORIGIN"][0]), float(meta["ORIGIN"][1])
    hx, hy = float(meta["SPACING"][0]), float(meta["SPACING"][1])
    grid = StructuredGrid(x0, x0 + nx * hx, y0, y0 + ny * hy, nx, ny)
    n = int(tokens[k].split()[1])
    body = " ".join(tokens[k + 1:]).split()
    arrays = {}
    i = 0
    while i < len(body):
        if body[i] != "SCALARS":
            raise ConfigurationError(f"{path}: unexpected token {body[i]!r}")
        name = body[i + 1]
        i += 6  # SCALARS name double 1 LOOKUP_TABLE default
        arrays[name] = np.array(body[i:i + n], dtype=float)
        i += n
    return FieldDump(grid, arrays)


def write_field_csv(dump: FieldDump, name: str, path: os.PathLike) -> Path:
    """``x,y,value`` rows for one named array."""
    path = Path(path)
    ensure_directory(path.parent)
    xy = dump.grid.node_coordinates()
    values = dump.arrays[name]
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("x", "y", "value"))
            for (x, y), v in zip(xy, values):
                w.writerow((fmt(x), fmt(y), fmt(v)))
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path


def read_field_csv(path: os.PathLike) -> np.ndarray:
    """(n, 3) array of x, y, value."""
    try:
        return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc}") from exc


def write_dump(dump: FieldDump, path: os.PathLike, fmt_name: str, name: str | None = None,
               title: str = "diffdomain field") -> Path:
    if fmt_name == "vtk":
        return write_vtk(dump, path, title)
    if fmt_name == "csv":
        if name is None:
            if len(dump.arrays) != 1:
                raise ValueError("csv field output holds a single array; pass its name")
            name = next(iter(dump.arrays))
        return write_field_csv(dump, name, path)
    raise ConfigurationError(f"unknown field format {fmt_name!r}")

