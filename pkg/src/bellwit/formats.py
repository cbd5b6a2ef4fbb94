"""JSON and CSV formats shared by the library and the command line.

Matrices are stored as ``{"d_A": int, "d_B": int, "entries": rows}`` with
complex entries written as ``[re, im]`` pairs; support sets as
``{"d_A", "d_B", "points": [[a, b], ...]}``.  Floats are rounded to 12
significant digits so that repeated runs give identical files.
"""

from __future__ import annotations

import csv
import io
import json

import numpy as np

from .bds import FourierMatrix, ProbabilityMatrix

DIGITS = 12


def fmt(v: float) -> float:
    """Round to ``DIGITS`` significant digits."""
    v = float(v)
    if v == 0 or not np.isfinite(v):
        return 0.0 if v == 0 else v
    return float(f"{v:.{DIGITS}g}")


def complex_entries(m) -> list:
    m = np.asarray(m, dtype=complex)
    return [[[fmt(z.real), fmt(z.imag)] for z in row] for row in np.atleast_2d(m)]


def parse_entries(rows) -> np.ndarray:
    """Inverse of :func:`complex_entries`; plain real numbers are accepted too."""

    def one(z):
        if isinstance(z, (list, tuple)):
            if len(z) != 2:
                raise ValueError(f"complex entry must be [re, im], got {z!r}")
            return complex(float(z[0]), float(z[1]))
        return complex(float(z))

    try:
        return np.array([[one(z) for z in row] for row in rows], dtype=complex)
    except TypeError as exc:
        raise ValueError("entries must be a list of rows") from exc


def matrix_to_json(m, dims, **extra) -> dict:
    d_A, d_B = dims
    return {"d_A": int(d_A), "d_B": int(d_B), "entries": complex_entries(m), **extra}


def matrix_from_json(obj: dict) -> tuple[tuple[int, int], np.ndarray]:
    try:
        dims = (int(obj["d_A"]), int(obj["d_B"]))
        m = parse_entries(obj["entries"])
    except KeyError as exc:
        raise ValueError(f"missing key {exc} in matrix document") from exc
    return dims, m


def probabilities_from_json(obj: dict) -> ProbabilityMatrix:
    dims, m = matrix_from_json(obj)
    if np.max(np.abs(m.imag), initial=0) > 1e-12:
        raise ValueError("probabilities must be real")
    return ProbabilityMatrix(dims, m.real)


def fourier_from_json(obj: dict) -> FourierMatrix:
    dims, m = matrix_from_json(obj)
    return FourierMatrix(dims, m)


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True)


def load_json(path: str) -> dict:
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON ({exc})") from exc


def csv_rows(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def witness_to_json(W) -> dict:
    """``{"x", "y", "w", "matrix"}`` for a witness operator."""
    return {
        "d_A": W.dims.d_A,
        "d_B": W.dims.d_B,
        "x": fmt(W.x),
        "y": fmt(W.y),
        "w": complex_entries(W.w),
        "matrix": complex_entries(W.matrix_form),
    }
