"""File formats: field snapshots, radial mean-field states, thermo tables and
ensemble snapshots. See docs/formats.md."""

from __future__ import annotations

import csv
import json
import math

import numpy as np

from .core import FlowDiagnostics, VorticityField
from .grid import Grid


def _finite(x):
    x = float(x)
    return x if math.isfinite(x) else None


def write_field_snapshot(path, omega: VorticityField, time: float,
                         diag: FlowDiagnostics | None = None) -> None:
    header = {"L": omega.grid.L, "n": omega.grid.n, "time": float(time)}
    if diag is not None:
        header["diagnostics"] = {k: _finite(v) for k, v in diag.as_dict().items()}
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        fh.write(np.ascontiguousarray(omega.values, dtype="<f8").tobytes())


def read_field_snapshot(path) -> tuple[VorticityField, dict]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        n = int(header["n"])
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != n * n:
        raise ValueError(f"{path}: expected {n * n} values after header, found {data.size}")
    grid = Grid(float(header["L"]), n)
    return VorticityField(grid, data.reshape(n, n).astype(float)), header


def write_radial_state(path, state) -> None:
    header = {
        "a": state.a, "b": state.b, "Z": state.Z, "E": state.E, "I": state.I,
        "S": state.S, "F": state.F, "points": int(state.r.size),
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        fh.write("r,omega,psi\n")
        for r, w, p in zip(state.r, state.omega, state.psi):
            fh.write(f"{r:.17g},{w:.17g},{p:.17g}\n")


def read_radial_state(path):
    with open(path) as fh:
        header = json.loads(fh.readline())
        fh.readline()
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return header, data[:, 0], data[:, 1], data[:, 2]


def write_thermo_table(path, points) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["a", "b", "F", "E", "I", "S"])
        for p in points:
            writer.writerow([format(float(v), ".17g") for v in (p.a, p.b, p.F, p.E, p.I, p.S)])


def write_ensemble(path, e) -> None:
    header = {"N": e.N, "delta": e.delta, "seed": e.seed, "t": e.t, "step": e.step_index}
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        fh.write("x,y\n")
        for x, y in e.positions:
            fh.write(f"{x:.17g},{y:.17g}\n")


def read_ensemble(path):
    from .particles import VortexEnsemble

    with open(path) as fh:
        header = json.loads(fh.readline())
        fh.readline()
        pos = np.loadtxt(fh, delimiter=",", ndmin=2)
    return VortexEnsemble(pos, float(header["delta"]), int(header["seed"]),
                          np.arange(pos.shape[0]), int(header.get("step", 0)),
                          float(header["t"]))
