"""Deterministic text output helpers shared by the library and the CLI."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def format_float(value: float) -> str:
    """17 significant digits, enough to round-trip any float64 exactly."""
    return f"{float(value):.17g}"


def write_csv(path, header: list[str], rows: np.ndarray) -> None:
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if rows.size and rows.shape[1] != len(header):
        raise ValueError(f"header has {len(header)} fields but rows have {rows.shape[1]}")
    lines = [",".join(header)]
    lines.extend(",".join(format_float(v) for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
