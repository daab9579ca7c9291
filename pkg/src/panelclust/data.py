"""Panel data container and CSV ingestion.

Each location carries a response vector, a covariate matrix sharing one
column count across locations, and a strictly increasing time grid. The CSV
schema is ``location_id,time,y,x1,...,xp`` with rows in any order; ingestion
groups by location (first-appearance order), sorts by time, and can rescale
each location's times affinely onto [-1, 1].
"""

from __future__ import annotations

import csv
from typing import Optional, Sequence

import numpy as np

from .errors import ParseError, ValidationError


def rescale_times(t: np.ndarray) -> np.ndarray:
    """Affine map onto [-1, 1]; a single time point maps to 0."""
    t = np.asarray(t, dtype=float)
    lo, hi = t.min(), t.max()
    if hi == lo:
        return np.zeros_like(t)
    return -1.0 + 2.0 * (t - lo) / (hi - lo)


class PanelData:
    """Per-location response/covariate/time arrays.

    Parameters
    ----------
    y : sequence of 1-d arrays
        Responses, one vector per location, length ``n_i >= 1``.
    x : sequence of 2-d arrays
        Covariates, ``n_i x p`` with a common ``p`` (an intercept column, if
        wanted, is part of the data).
    t : sequence of 1-d arrays
        Time points, strictly increasing per location.
    labels : sequence of str, optional
        Location names, index-aligned.
    """

    def __init__(self, y: Sequence[np.ndarray], x: Sequence[np.ndarray],
                 t: Sequence[np.ndarray], labels: Optional[Sequence[str]] = None):
        if not (len(y) == len(x) == len(t)) or len(y) == 0:
            raise ValidationError("y, x, t must be non-empty and index-aligned")
        self.y = tuple(np.ascontiguousarray(v, dtype=float) for v in y)
        self.x = tuple(np.ascontiguousarray(m, dtype=float) for m in x)
        self.t = tuple(np.ascontiguousarray(v, dtype=float) for v in t)
        p = self.x[0].shape[1] if self.x[0].ndim == 2 else -1
        for i, (yi, xi, ti) in enumerate(zip(self.y, self.x, self.t)):
            if yi.ndim != 1 or ti.ndim != 1 or xi.ndim != 2:
                raise ValidationError(f"location {i}: bad array dimensions")
            n = yi.shape[0]
            if n < 1:
                raise ValidationError(f"location {i}: needs at least one row")
            if xi.shape != (n, p):
                raise ValidationError(
                    f"location {i}: x has shape {xi.shape}, expected ({n},{p})")
            if ti.shape != (n,):
                raise ValidationError(f"location {i}: t length {ti.shape[0]} != {n}")
            if n > 1 and not np.all(np.diff(ti) > 0):
                raise ValidationError(f"location {i}: times not strictly increasing")
            for name, arr in (("y", yi), ("x", xi), ("t", ti)):
                if not np.all(np.isfinite(arr)):
                    raise ValidationError(f"location {i}: non-finite values in {name}")
        if labels is not None:
            labels = tuple(str(s) for s in labels)
            if len(labels) != len(self.y):
                raise ValidationError("labels length mismatch")
        self.labels = labels

    @property
    def n_locations(self) -> int:
        return len(self.y)

    @property
    def p(self) -> int:
        return self.x[0].shape[1]

    def n_obs(self, i: int) -> int:
        return self.y[i].shape[0]

    @property
    def n_total(self) -> int:
        return sum(v.shape[0] for v in self.y)

    @property
    def n_min(self) -> int:
        return min(v.shape[0] for v in self.y)

    def __repr__(self):
        return (f"PanelData(n_locations={self.n_locations}, p={self.p}, "
                f"n_total={self.n_total})")


def load_panel_csv(path, rescale_time: bool = False) -> PanelData:
    """Read ``location_id,time,y,x1,...,xp`` CSV into a :class:`PanelData`."""
    rows: dict[str, list[tuple[float, float, tuple[float, ...]]]] = {}
    order: list[str] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"empty file: {path}") from None
        header = [h.strip() for h in header]
        if len(header) < 4 or header[0] != "location_id" or header[1] != "time" \
                or header[2] != "y":
            raise ParseError(
                "expected header location_id,time,y,x1,...,xp; "
                f"got {','.join(header)}", line_no=1)
        p = len(header) - 3
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"expected {len(header)} fields, got {len(row)}", line_no)
            loc = row[0].strip()
            try:
                tval = float(row[1])
                yval = float(row[2])
                xvals = tuple(float(v) for v in row[3:])
            except ValueError as exc:
                raise ParseError(f"non-numeric field: {exc}", line_no) from None
            if loc not in rows:
                rows[loc] = []
                order.append(loc)
            rows[loc].append((tval, yval, xvals))
    y, x, t = [], [], []
    for loc in order:
        rec = sorted(rows[loc], key=lambda r: r[0])
        ti = np.array([r[0] for r in rec])
        if len(ti) > 1 and not np.all(np.diff(ti) > 0):
            raise ValidationError(f"location {loc!r}: duplicate time points")
        if rescale_time:
            ti = rescale_times(ti)
        t.append(ti)
        y.append(np.array([r[1] for r in rec]))
        x.append(np.array([r[2] for r in rec]))
    return PanelData(y, x, t, labels=order)


def write_panel_csv(data: PanelData, path) -> None:
    """Write a :class:`PanelData` in the ingestion schema (repr-exact floats)."""
    p = data.p
    labels = data.labels or [str(i) for i in range(data.n_locations)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["location_id", "time", "y"] + [f"x{j+1}" for j in range(p)])
        for i in range(data.n_locations):
            for j in range(data.n_obs(i)):
                writer.writerow(
                    [labels[i], repr(float(data.t[i][j])), repr(float(data.y[i][j]))]
                    + [repr(float(v)) for v in data.x[i][j]])
