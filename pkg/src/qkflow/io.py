"""CSV and JSON persistence with round-trip float formatting."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .report import fmt


def write_grid_csv(path, patch) -> None:
    """Columns x[,y],u in C order of the grid."""
    x = patch.coords().reshape(-1, patch.n)
    u = patch.u.reshape(-1)
    names = ["x", "y"][: patch.n] + ["u"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for xi, ui in zip(x, u):
            writer.writerow([fmt(v) for v in xi] + [fmt(ui)])


def read_grid_csv(path):
    """Inverse of :func:`write_grid_csv`; returns ``(lower, h, u)``.

    Rows may come in any order but must fill a uniform grid.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [c.strip() for c in next(reader)]
        rows = np.array([[float(v) for v in row] for row in reader if row])
    if header[-1] != "u" or len(header) not in (2, 3):
        raise ValueError(f"{path}: expected header x[,y],u, got {header}")
    n = len(header) - 1
    axes = [np.unique(rows[:, i]) for i in range(n)]
    steps = [np.diff(a) for a in axes]
    h = float(np.mean(steps[0]))
    for s in steps:
        if s.size == 0 or not np.allclose(s, h, rtol=1e-9, atol=0.0):
            raise ValueError(f"{path}: grid is not uniform with a common spacing")
    lower = tuple(float(a[0]) for a in axes)
    idx = tuple(np.rint((rows[:, i] - lower[i]) / h).astype(int) for i in range(n))
    u = np.full(tuple(a.size for a in axes), np.nan)
    u[idx] = rows[:, -1]
    if np.isnan(u).any():
        raise ValueError(f"{path}: grid has missing nodes")
    return lower, h, u


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def write_columns(path, columns: dict[str, np.ndarray]) -> None:
    names = list(columns)
    data = np.column_stack([np.asarray(columns[c], dtype=float) for c in names])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in data:
            writer.writerow([fmt(v) for v in row])


def read_columns(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [c.strip() for c in next(reader)]
        rows = np.array([[float(v) for v in row] for row in reader if row], dtype=float)
    return {name: rows[:, i] for i, name in enumerate(header)}
