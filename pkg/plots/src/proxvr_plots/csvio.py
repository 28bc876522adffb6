"""Readers for the two CSV products this package renders.

The schemas are fixed by the producing tool and validated strictly: a
trajectory file starts with ``k,mean_sq_dist`` (optional extra metric
columns), a rates file carries exactly the eleven rate-comparison columns.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

__all__ = ["SchemaError", "read_trajectory", "read_rates", "RATES_HEADER"]

RATES_HEADER = [
    "n", "s", "delta_sq", "gamma", "p", "slope",
    "rho_emp", "rho_alt", "r_squared", "rho_theory", "margin",
]


class SchemaError(ValueError):
    """Input CSV does not match the expected product schema."""


def read_trajectory(path: str | Path) -> dict[str, np.ndarray]:
    """Read a trajectory CSV; requires the ``k,mean_sq_dist`` prefix and at
    least two rows."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["k", "mean_sq_dist"]:
            raise SchemaError(
                f"{path}: expected header starting 'k,mean_sq_dist', got {header!r}"
            )
        rows = [row for row in reader if row]
    if len(rows) < 2:
        raise SchemaError(f"{path}: need at least 2 trajectory rows, got {len(rows)}")
    try:
        data = np.array(rows, dtype=np.float64)
    except ValueError as exc:
        raise SchemaError(f"{path}: non-numeric trajectory data: {exc}") from exc
    if data.shape[1] != len(header):
        raise SchemaError(f"{path}: ragged rows")
    return {name: data[:, j] for j, name in enumerate(header)}


def read_rates(path: str | Path) -> list[dict[str, float]]:
    """Read a rates CSV; requires the exact eleven-column header and at
    least one row."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RATES_HEADER:
            raise SchemaError(
                f"{path}: expected the rates header {RATES_HEADER}, got {header!r}"
            )
        rows = [row for row in reader if row]
    if not rows:
        raise SchemaError(f"{path}: rates file has no rows")
    out = []
    for row in rows:
        if len(row) != len(header):
            raise SchemaError(f"{path}: ragged rows")
        try:
            out.append({name: float(value) for name, value in zip(header, row)})
        except ValueError as exc:
            raise SchemaError(f"{path}: non-numeric rates data: {exc}") from exc
    return out
