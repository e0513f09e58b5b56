"""Plain-text output formats: field snapshots and the ledger CSV.

All floating-point values are written with ``repr``, the shortest decimal
string that round-trips to the same double, independent of locale.  A
snapshot written, read back, and written again is byte-identical.
"""

from __future__ import annotations

import os

import numpy as np

from .diagnostics import LEDGER_COLUMNS, Ledger
from .grid import Grid
from .state import State

__all__ = [
    "format_float",
    "write_snapshot",
    "read_snapshot",
    "write_ledger_csv",
    "read_ledger_csv",
]

SNAPSHOT_MAGIC = "# pfsim snapshot v1"


def format_float(x: float) -> str:
    return repr(float(x))


def write_snapshot(path, state: State, t: float = 0.0):
    """Write grid metadata followed by psi then theta, row-major, one value
    per line at full round-trip precision."""
    g = state.grid
    lines = [
        SNAPSHOT_MAGIC,
        f"dim={g.dim}",
        "cells=" + ",".join(str(c) for c in g.cells),
        "lengths=" + ",".join(format_float(l) for l in g.lengths),
        f"t={format_float(t)}",
        "psi",
    ]
    lines.extend(format_float(v) for v in state.psi)
    lines.append("theta")
    lines.extend(format_float(v) for v in state.theta)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_snapshot(path) -> tuple[State, float]:
    with open(path) as fh:
        lines = [line.rstrip("\n") for line in fh]
    if not lines or lines[0] != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: not a snapshot file")
    header = {}
    i = 1
    while i < len(lines) and "=" in lines[i]:
        key, _, value = lines[i].partition("=")
        header[key] = value
        i += 1
    try:
        cells = tuple(int(c) for c in header["cells"].split(","))
        lengths = tuple(float(l) for l in header["lengths"].split(","))
        t = float(header["t"])
    except (KeyError, ValueError) as err:
        raise ValueError(f"{path}: malformed snapshot header ({err})") from err
    grid = Grid(cells, lengths)
    n = grid.n_cells
    if lines[i] != "psi":
        raise ValueError(f"{path}: expected 'psi' block at line {i + 1}")
    psi = np.array([float(v) for v in lines[i + 1:i + 1 + n]])
    j = i + 1 + n
    if j >= len(lines) or lines[j] != "theta":
        raise ValueError(f"{path}: expected 'theta' block at line {j + 1}")
    theta = np.array([float(v) for v in lines[j + 1:j + 1 + n]])
    if psi.size != n or theta.size != n:
        raise ValueError(f"{path}: truncated snapshot")
    return State(psi, theta, grid), t


def write_ledger_csv(path, ledger: Ledger):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(LEDGER_COLUMNS) + "\n")
        for row in ledger.rows:
            cells = [str(row["newton_iters"]) if name == "newton_iters"
                     else format_float(row[name]) for name in LEDGER_COLUMNS]
            fh.write(",".join(cells) + "\n")


def read_ledger_csv(path) -> dict[str, np.ndarray]:
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split(",")
        if tuple(header) != LEDGER_COLUMNS:
            raise ValueError(f"{path}: unexpected ledger header {header}")
        data = [[] for _ in header]
        for line in fh:
            for slot, value in zip(data, line.rstrip("\n").split(",")):
                slot.append(float(value))
    return {name: np.array(col) for name, col in zip(header, data)}


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
