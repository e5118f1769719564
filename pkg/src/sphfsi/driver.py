"""Time-loop driver: steps the (coupled) solvers and writes outputs."""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .backend import BACKEND_NAME
from .errors import SphFsiError
from .output import (TimeSeriesWriter, ensure_dir, write_manifest,
                     write_particles_csv, write_solid_csv, write_vtk_points)

log = logging.getLogger(__name__)


@dataclass
class Simulation:
    """One configured scenario ready to run.

    ``prescribed_motions`` maps interface patches to kinematics callbacks
    ``t -> (disp, vel, acc)`` applied before each step; coupled patches are
    driven by the partitioned coupler instead.
    """

    name: str
    cfg: object
    fluid: object
    dt: float
    t_end: float
    coupler: object = None
    prescribed_motions: list = field(default_factory=list)
    probes: dict = field(default_factory=dict)
    finalizers: list = field(default_factory=list)
    solid_views: list = field(default_factory=list)   # (name, adapter)
    step_count: int = 0

    def apply_prescribed(self, t):
        for patch, motion in self.prescribed_motions:
            disp, vel, acc = motion(t)
            patch.set_kinematics(disp, vel, acc)

    def prime(self):
        self.apply_prescribed(0.0)
        if not self.fluid._primed:
            self.fluid.prime()

    def step(self):
        """Advance one time step (coupled or fluid-only)."""
        t_new = self.fluid.t + self.dt
        self.apply_prescribed(t_new)
        if self.coupler is not None:
            iters = self.coupler.step(self.dt)
        else:
            self.fluid.step(self.dt)
            iters = 1
        self.step_count += 1
        return iters

    def sample_probes(self):
        return {name: fn(self) for name, fn in self.probes.items()}

    def run(self, output_dir=None, progress=False):
        """Run to ``t_end``; returns the output directory (or None)."""
        out = None
        writer = None
        snap_idx = 0
        interval = self.cfg.get("run", "output_interval") if self.cfg else None
        vtk = bool(self.cfg.get("run", "vtk")) if self.cfg else False
        if output_dir is not None:
            out = ensure_dir(output_dir)
            write_manifest(os.path.join(out, "manifest.cfg"), self.cfg,
                           BACKEND_NAME, __version__)
        self.prime()
        if interval is None:
            interval = max(self.t_end / 50.0, self.dt)
        every = max(1, int(round(interval / self.dt)))
        n_steps = int(round(self.t_end / self.dt))

        if out is not None:
            writer = TimeSeriesWriter(
                os.path.join(out, "timeseries.csv"),
                list(self.probes) + ["coupling_iters"])
            self._write_snapshot(out, snap_idx, vtk)
            snap_idx += 1

        last_good = self.fluid.state.copy()
        t_wall = time.time()
        try:
            for n in range(1, n_steps + 1):
                iters = self.step()
                last_good = self.fluid.state.copy()
                if n % every == 0 or n == n_steps:
                    values = self.sample_probes()
                    values["coupling_iters"] = iters
                    if writer is not None:
                        writer.append(self.fluid.t, values)
                        self._write_snapshot(out, snap_idx, vtk)
                        snap_idx += 1
                    if progress:
                        rate = n / max(time.time() - t_wall, 1e-9)
                        log.info("%s: t=%.5g/%g (%.1f steps/s)", self.name,
                                 self.fluid.t, self.t_end, rate)
        except SphFsiError:
            if out is not None:
                write_particles_csv(os.path.join(out, "particles_abort.csv"),
                                    last_good)
            raise
        for fin in self.finalizers:
            fin(self, out)
        return out

    def _write_snapshot(self, out, idx, vtk):
        path = os.path.join(out, f"particles_{idx:06d}.csv")
        write_particles_csv(path, self.fluid.state)
        if vtk:
            write_vtk_points(os.path.join(out, f"particles_{idx:06d}.vtk"),
                             self.fluid.state)
        for name, adapter in self.solid_views:
            nodes = adapter.model.mesh.nodes if hasattr(adapter, "model") \
                else adapter.ref
            d = adapter.d.reshape(-1, 2) if hasattr(adapter, "d") \
                else adapter.predictor().reshape(-1, 2)
            v = adapter.v.reshape(-1, 2) if hasattr(adapter, "v") \
                else np.zeros_like(d)
            write_solid_csv(os.path.join(out, f"{name}_{idx:06d}.csv"),
                            nodes, d, v)
