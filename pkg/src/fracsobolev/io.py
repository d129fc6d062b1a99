"""Deterministic CSV and text artifacts.

Floats are written with ``repr`` (shortest round-trip form), so identical
inputs give identical bytes. Any NaN or infinity aborts the write.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
import yaml

__all__ = [
    "NonFiniteError",
    "format_value",
    "write_csv",
    "write_spectrum_csv",
    "write_yaml",
    "write_json",
    "read_csv_columns",
]


class NonFiniteError(ValueError):
    """A NaN or infinity reached an artifact."""


def format_value(value, where: str = "") -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if not math.isfinite(x):
            raise NonFiniteError(f"non-finite value {x!r} in {where or 'artifact'}")
        return repr(x)
    return str(value)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for k, row in enumerate(rows):
            if len(row) != len(header):
                raise ValueError(f"{path.name}: row {k} has {len(row)} fields, expected {len(header)}")
            writer.writerow([format_value(v, f"{path.name} row {k}") for v in row])
    return path


def write_spectrum_csv(path, spectrum, true_function=None) -> Path:
    """``i, lambda_i, p_inv_i, c_i`` rows, then a ``j, d_j`` block if any.

    ``c_i`` is left empty when no true function is given.
    """
    path = Path(path)
    c = None if true_function is None else true_function.coefficients
    rows = [
        (i + 1, spectrum.eigenvalues[i], spectrum.p_inv[i], None if c is None else c[i])
        for i in range(spectrum.N)
    ]
    write_csv(path, ["i", "lambda_i", "p_inv_i", "c_i"], rows)
    if true_function is not None and true_function.null_components.size:
        with path.open("a", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([])
            writer.writerow(["j", "d_j"])
            for j, d in enumerate(true_function.null_components, start=1):
                writer.writerow([j, format_value(d, f"{path.name} null block")])
    return path


def write_yaml(path, data: dict) -> Path:
    path = Path(path)
    path.write_text(yaml.safe_dump(data, sort_keys=True, default_flow_style=False))
    return path


def write_json(path, data) -> Path:
    path = Path(path)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def read_csv_columns(path) -> dict[str, list[str]]:
    """Columns of the first header-delimited block of a CSV file."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols: dict[str, list[str]] = {h: [] for h in header}
        for row in reader:
            if not row:
                break
            for h, v in zip(header, row):
                cols[h].append(v)
    return cols
