"""Two-way panel data model and CSV ingestion.

A :class:`PanelArray` holds one observation per (g, h) cell of a G-by-H
grid. Cells may be missing: every downstream estimator sums over present
cells only and normalizes by realized counts. Raw cluster labels are mapped
to dense ``0..G-1`` / ``0..H-1`` indices in first-appearance order, so a
given file always loads to the same array.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateCell,
    EmptyFile,
    InputError,
    MissingColumn,
    ParseFailure,
)

__all__ = [
    "PanelArray",
    "ValidationReport",
    "load_csv",
    "write_csv",
    "validate",
]

RANK_TOL = 1e-10  # relative to the largest singular value


@dataclass(frozen=True)
class PanelArray:
    """Immutable two-way array of (y, x) cells.

    Attributes
    ----------
    G, H : int
        Number of row and column clusters.
    g_idx, h_idx : ndarray of int, shape (n,)
        Dense cluster index of each present cell.
    y : ndarray, shape (n,)
        Responses.
    x : ndarray, shape (n, d)
        Regressors. An intercept is never injected; supply a constant
        column explicitly.
    g_labels, h_labels : tuple
        Raw labels in first-appearance order; ``g_labels[g_idx[i]]`` is the
        raw label of observation i.
    """

    G: int
    H: int
    g_idx: np.ndarray
    h_idx: np.ndarray
    y: np.ndarray
    x: np.ndarray
    g_labels: tuple = field(default=())
    h_labels: tuple = field(default=())

    def __post_init__(self):
        g_idx = np.ascontiguousarray(np.asarray(self.g_idx, dtype=np.intp))
        h_idx = np.ascontiguousarray(np.asarray(self.h_idx, dtype=np.intp))
        y = np.ascontiguousarray(np.asarray(self.y, dtype=np.float64))
        x = np.ascontiguousarray(np.asarray(self.x, dtype=np.float64))
        if x.ndim != 2:
            raise DimensionMismatch("x must be a 2-D array of shape (n, d)")
        n = y.shape[0]
        if g_idx.shape != (n,) or h_idx.shape != (n,) or x.shape[0] != n:
            raise DimensionMismatch("g_idx, h_idx, y, x must share leading length")
        if n == 0:
            raise InputError("panel has no cells")
        if not (np.isfinite(y).all() and np.isfinite(x).all()):
            raise InputError("y and x entries must all be finite")
        if g_idx.min() < 0 or g_idx.max() >= self.G:
            raise InputError("g_idx out of range for G")
        if h_idx.min() < 0 or h_idx.max() >= self.H:
            raise InputError("h_idx out of range for H")
        flat = g_idx * self.H + h_idx
        uniq, counts = np.unique(flat, return_counts=True)
        if (counts > 1).any():
            bad = int(uniq[np.argmax(counts > 1)])
            g, h = divmod(bad, self.H)
            raise DuplicateCell(self._raw_g(g), self._raw_h(h))
        for arr in (g_idx, h_idx, y, x):
            arr.setflags(write=False)
        object.__setattr__(self, "g_idx", g_idx)
        object.__setattr__(self, "h_idx", h_idx)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        if not self.g_labels:
            object.__setattr__(self, "g_labels", tuple(range(self.G)))
        if not self.h_labels:
            object.__setattr__(self, "h_labels", tuple(range(self.H)))

    def _raw_g(self, g: int):
        return self.g_labels[g] if self.g_labels else g

    def _raw_h(self, h: int):
        return self.h_labels[h] if self.h_labels else h

    @property
    def n(self) -> int:
        """Number of present cells."""
        return self.y.shape[0]

    @property
    def d(self) -> int:
        """Regressor dimension."""
        return self.x.shape[1]

    def cell_set(self) -> set:
        """Set of (raw g, raw h, y, x-tuple) rows; order-insensitive identity."""
        return {
            (self.g_labels[g], self.h_labels[h], float(yv), tuple(float(v) for v in xv))
            for g, h, yv, xv in zip(self.g_idx, self.h_idx, self.y, self.x)
        }


@dataclass(frozen=True)
class ValidationReport:
    missing_cell_count: int
    duplicate_count: int
    rank_estimate: int
    messages: list[str]


def _parse_label(raw: str):
    """Integer-looking labels compare as ints so '1' and ' 1' coincide."""
    raw = raw.strip()
    try:
        return int(raw)
    except ValueError:
        return raw


def load_csv(path, schema: dict) -> PanelArray:
    """Read a long-format CSV with one row per (g, h) cell.

    Parameters
    ----------
    path : str or path-like
        UTF-8 CSV file with a header row.
    schema : dict
        Column-name map with keys ``g``, ``h``, ``y`` and ``x`` (a list of
        regressor column names).

    Raises
    ------
    MissingColumn, ParseFailure, DuplicateCell, EmptyFile
    """
    g_col, h_col, y_col = schema["g"], schema["h"], schema["y"]
    x_cols = list(schema["x"])
    if not x_cols:
        raise InputError("schema must name at least one x column")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(f"{path}: no header row") from None
        header = [c.strip() for c in header]
        pos = {}
        for col in [g_col, h_col, y_col, *x_cols]:
            if col not in header:
                raise MissingColumn(col)
            pos[col] = header.index(col)

        g_map: dict = {}
        h_map: dict = {}
        seen: set = set()
        g_idx, h_idx, ys, xs = [], [], [], []
        nrow = 0
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            nrow += 1
            g_raw = _parse_label(row[pos[g_col]])
            h_raw = _parse_label(row[pos[h_col]])
            if (g_raw, h_raw) in seen:
                raise DuplicateCell(g_raw, h_raw)
            seen.add((g_raw, h_raw))
            gi = g_map.setdefault(g_raw, len(g_map))
            hi = h_map.setdefault(h_raw, len(h_map))

            def _num(col: str) -> float:
                text = row[pos[col]]
                try:
                    return float(text)
                except (ValueError, IndexError):
                    raise ParseFailure(nrow, col, text) from None

            g_idx.append(gi)
            h_idx.append(hi)
            ys.append(_num(y_col))
            xs.append([_num(c) for c in x_cols])
        if nrow == 0:
            raise EmptyFile(f"{path}: header only, no data rows")
    return PanelArray(
        G=len(g_map),
        H=len(h_map),
        g_idx=np.array(g_idx, dtype=np.intp),
        h_idx=np.array(h_idx, dtype=np.intp),
        y=np.array(ys, dtype=np.float64),
        x=np.array(xs, dtype=np.float64),
        g_labels=tuple(g_map),
        h_labels=tuple(h_map),
    )


def write_csv(panel: PanelArray, path, schema: dict | None = None) -> None:
    """Serialize a panel back to the long CSV format read by :func:`load_csv`."""
    if schema is None:
        schema = {"g": "g", "h": "h", "y": "y", "x": [f"x{j + 1}" for j in range(panel.d)]}
    x_cols = list(schema["x"])
    if len(x_cols) != panel.d:
        raise DimensionMismatch("schema x column count differs from panel.d")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([schema["g"], schema["h"], schema["y"], *x_cols])
        for g, h, yv, xv in zip(panel.g_idx, panel.h_idx, panel.y, panel.x):
            writer.writerow(
                [panel.g_labels[g], panel.h_labels[h], repr(float(yv)),
                 *(repr(float(v)) for v in xv)]
            )


def validate(panel: PanelArray) -> ValidationReport:
    """Diagnostic pass: missing cells, duplicates, and numeric design rank."""
    missing = panel.G * panel.H - panel.n
    sv = np.linalg.svd(panel.x, compute_uv=False)
    rank = int(np.sum(sv > RANK_TOL * sv[0])) if sv.size else 0
    messages = []
    if missing:
        messages.append(f"{missing} of {panel.G * panel.H} grid cells missing")
    if rank < panel.d:
        messages.append(f"design matrix rank {rank} < d = {panel.d}")
    if panel.G < 2 or panel.H < 2:
        messages.append("two-way CRVE requires G >= 2 and H >= 2")
    return ValidationReport(
        missing_cell_count=missing,
        duplicate_count=0,
        rank_estimate=rank,
        messages=messages,
    )
