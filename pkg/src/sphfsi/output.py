"""Run outputs: CSV snapshots, time series, legacy-VTK points, manifest."""

from __future__ import annotations

import os

import numpy as np

from . import kinds

PARTICLE_SCHEMA = "sphfsi-particles-v1"
SOLID_SCHEMA = "sphfsi-solid-v1"
TIMESERIES_SCHEMA = "sphfsi-timeseries-v1"
PROFILE_SCHEMA = "sphfsi-profile-v1"


def _fmt(x):
    return repr(float(x))


def write_particles_csv(path, state):
    cols = ["id", "kind", "x", "y", "vx", "vy", "rho", "p"]
    if state.dim == 3:
        cols = ["id", "kind", "x", "y", "z", "vx", "vy", "vz", "rho", "p"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {PARTICLE_SCHEMA}\n")
        fh.write(",".join(cols) + "\n")
        for i in range(state.n):
            row = [str(int(state.ids[i])), kinds.NAMES[int(state.kind[i])]]
            row += [_fmt(v) for v in state.pos[i]]
            row += [_fmt(v) for v in state.vel[i]]
            row += [_fmt(state.rho[i]), _fmt(state.p[i])]
            fh.write(",".join(row) + "\n")


def write_solid_csv(path, node_positions, displacements, velocities):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {SOLID_SCHEMA}\n")
        fh.write("id,x,y,dx,dy,vx,vy\n")
        for i in range(len(node_positions)):
            row = [str(i)]
            row += [_fmt(v) for v in node_positions[i]]
            row += [_fmt(v) for v in displacements[i]]
            row += [_fmt(v) for v in velocities[i]]
            fh.write(",".join(row) + "\n")


def write_profile_csv(path, columns, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {PROFILE_SCHEMA}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_vtk_points(path, state):
    """Legacy ASCII VTK point cloud with density, pressure and velocity."""
    n = state.n
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("sphfsi particle snapshot\n")
        fh.write("ASCII\n")
        fh.write("DATASET POLYDATA\n")
        fh.write(f"POINTS {n} double\n")
        for i in range(n):
            x = state.pos[i]
            z = x[2] if state.dim == 3 else 0.0
            fh.write(f"{x[0]!r} {x[1]!r} {z!r}\n")
        fh.write(f"VERTICES {n} {2 * n}\n")
        for i in range(n):
            fh.write(f"1 {i}\n")
        fh.write(f"POINT_DATA {n}\n")
        fh.write("SCALARS density double 1\nLOOKUP_TABLE default\n")
        for i in range(n):
            fh.write(f"{state.rho[i]!r}\n")
        fh.write("SCALARS pressure double 1\nLOOKUP_TABLE default\n")
        for i in range(n):
            fh.write(f"{state.p[i]!r}\n")
        fh.write("SCALARS kind int 1\nLOOKUP_TABLE default\n")
        for i in range(n):
            fh.write(f"{int(state.kind[i])}\n")
        fh.write("VECTORS velocity double\n")
        for i in range(n):
            u = state.vel[i]
            w = u[2] if state.dim == 3 else 0.0
            fh.write(f"{u[0]!r} {u[1]!r} {w!r}\n")


class TimeSeriesWriter:
    """Append-only CSV of probe columns, one row per output step."""

    def __init__(self, path, columns):
        self.path = path
        self.columns = list(columns)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# {TIMESERIES_SCHEMA}\n")
            fh.write(",".join(["t"] + self.columns) + "\n")

    def append(self, t, values):
        row = [_fmt(t)] + [_fmt(values[c]) for c in self.columns]
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(",".join(row) + "\n")


def read_timeseries(path):
    """Load a time-series CSV into a dict of column -> array."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()
                 and not ln.startswith("#")]
    header = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    if data.size == 0:
        data = np.empty((0, len(header)))
    return {name: data[:, k] for k, name in enumerate(header)}


def write_manifest(path, cfg, backend_name, version):
    cfg.override("meta", "version", version)
    cfg.override("meta", "backend", backend_name)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(cfg.to_text())


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
