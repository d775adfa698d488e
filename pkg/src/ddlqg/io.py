"""CSV / JSON readers and writers with bit-stable number formatting."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

FLOAT_FMT = "%.17g"


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return FLOAT_FMT % float(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Header plus one line per row, 17 significant digits, ``\\n`` endings."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Inverse of ``write_csv``: header and a float array (rows x columns)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in r] for r in reader]
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return header, data


def _names(prefix: str, n: int) -> list[str]:
    return [f"{prefix}{i + 1}" for i in range(n)]


def trajectory_header(n_x: int, n_u: int, n_y: int) -> list[str]:
    return ["t"] + _names("x", n_x) + _names("u", n_u) + _names("y", n_y)


def write_trajectory_csv(data, path) -> None:
    """Offline record as ``t,x..,u..,y..`` with one row per sample t = 0..T-1."""
    rows = ([t] + list(data.X0[:, t]) + list(data.U0[:, t]) + list(data.Y0[:, t])
            for t in range(data.T))
    write_csv(path, trajectory_header(data.n_x, data.n_u, data.n_y), rows)


def trace_header(n_x: int, n_u: int) -> list[str]:
    return ["t"] + _names("x", n_x) + _names("xhat", n_x) + _names("u", n_u) + ["errnorm"]


def write_trace_csv(trace, path) -> None:
    """Closed-loop record as ``t,x..,xhat..,u..,errnorm``, one row per step."""
    n_x, n_u = trace.x.shape[0], trace.u.shape[0]
    en = trace.err_norm
    rows = ([t] + list(trace.x[:, t]) + list(trace.xhat[:, t]) + list(trace.u[:, t]) + [en[t]]
            for t in range(trace.steps))
    write_csv(path, trace_header(n_x, n_u), rows)


def write_estimate_csv(times, estimates: np.ndarray, path, prefix: str = "xhat") -> None:
    """Estimate series (n x N) as ``t,xhat1..``."""
    estimates = np.atleast_2d(estimates)
    rows = ([t] + list(estimates[:, k]) for k, t in enumerate(times))
    write_csv(path, ["t"] + _names(prefix, estimates.shape[0]), rows)


def to_jsonable(obj):
    """Recursively convert numpy containers and scalars for ``json.dump``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(to_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
