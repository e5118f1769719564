"""Non-interface boundary models.

Rigid walls are fixed (or rigidly moving) layers of boundary particles whose
pressure, density and ghost velocity are extrapolated from the neighboring
fluid through a local force balance.  Open boundaries are inflow/outflow
slabs of particles kept filled at the lattice spacing.  Periodic axes wrap
coordinates and use minimum-image distances in the neighbor search.
"""

from __future__ import annotations

import numpy as np

from . import kinds
from .errors import SeedingError
from .fluid import FluidModel, ParticleState, eos_density, lattice
from .kernels import SmoothingKernel
from .neighbors import Domain, NeighborGrid


def periodic_wrap(positions, domain: Domain) -> np.ndarray:
    """Map coordinates on periodic axes into [lo, hi)."""
    return domain.wrap(np.atleast_2d(positions))


def wall_band(surface, axis, outward, span_lo, span_hi, dx, n_layers=3):
    """Boundary-particle block behind a flat wall.

    The wall surface lies at coordinate ``surface`` on ``axis``; particles
    sit ``(k + 1/2) dx`` behind it in the ``outward`` direction (away from
    the fluid), mirroring the fluid lattice.  Three layers give the quintic
    kernel full support.
    """
    span_lo = np.asarray(span_lo, dtype=np.float64)
    span_hi = np.asarray(span_hi, dtype=np.float64)
    tang = lattice(span_lo, span_hi, dx)
    blocks = []
    for layer in range(n_layers):
        coord = surface + outward * (layer + 0.5) * dx
        block = np.empty((len(tang), tang.shape[1] + 1))
        block[:, axis] = coord
        other = [a for a in range(tang.shape[1] + 1) if a != axis]
        for k, a in enumerate(other):
            block[:, a] = tang[:, k]
        blocks.append(block)
    return np.vstack(blocks)


def wall_extrapolate(k, state: ParticleState, grid: NeighborGrid,
                     kernel: SmoothingKernel, model: FluidModel, body_force):
    """Extrapolated (pressure, density, ghost velocity) of wall particle ``k``.

    Pressure follows from a local force balance over the fluid neighbors;
    the ghost velocity ``2 u_w - <u>_f`` enforces no slip in the viscous
    term.  Wall particles without fluid neighbors are inert.
    """
    cols, dxs, dist = grid.neighbors(k)
    fluid = state.kind[cols] == kinds.FLUID
    cols, dxs, dist = cols[fluid], dxs[fluid], dist[fluid]
    u_w = state.vel[k]
    if len(cols) == 0:
        return 0.0, model.rho0, u_w.copy()
    w = kernel.evaluate(dist)
    sw = w.sum()
    sp = float(np.dot(w, state.p[cols]))
    srx = (w[:, None] * state.rho[cols, None] * dxs).sum(axis=0)
    su = (w[:, None] * state.vel[cols]).sum(axis=0)
    b = np.asarray(body_force, dtype=np.float64)
    p_k = (sp + np.dot(b - state.acc[k], srx)) / sw
    rho_k = float(eos_density(p_k, model))
    u_ghost = 2.0 * u_w - su / sw
    return float(p_k), rho_k, u_ghost


def wall_extrapolate_all(state: ParticleState, grid: NeighborGrid,
                         kernel: SmoothingKernel, model: FluidModel,
                         body_force):
    """Vectorized :func:`wall_extrapolate` over all wall particles.

    Writes pressure/density into the state and the ghost velocity into
    ``vel_visc``.
    """
    wall = state.mask(kinds.WALL)
    if not np.any(wall):
        return
    pairs = grid.pairs
    sel = wall[pairs.rows] & (state.kind[pairs.cols] == kinds.FLUID)
    r, c = pairs.rows[sel], pairs.cols[sel]
    w = kernel.evaluate(pairs.dist[sel])
    n = state.n
    sw = np.bincount(r, weights=w, minlength=n)
    sp = np.bincount(r, weights=w * state.p[c], minlength=n)
    b = np.asarray(body_force, dtype=np.float64)
    bal = np.zeros(n)
    su = np.zeros((n, state.dim))
    rel = b[None, :] - state.acc
    for ax in range(state.dim):
        sx = np.bincount(r, weights=w * state.rho[c] * pairs.dx[sel][:, ax],
                         minlength=n)
        bal += rel[:, ax] * sx
        su[:, ax] = np.bincount(r, weights=w * state.vel[c, ax], minlength=n)

    active = wall & (sw > 0.0)
    state.p[wall] = 0.0
    state.p[active] = (sp[active] + bal[active]) / sw[active]
    state.rho[wall] = model.rho0
    state.rho[active] = eos_density(state.p[active], model)
    state.vel_visc[wall] = state.vel[wall]
    state.vel_visc[active] = (2.0 * state.vel[active]
                              - su[active] / sw[active, None])


class OpenBoundary:
    """Inflow and outflow slabs along one axis (flow toward +axis).

    Inflow particles carry exactly the prescribed velocity profile and are
    advected with it; crossing the interior border promotes them to fluid and
    respawns a replacement one zone depth upstream.  Fluid crossing the
    outflow plane becomes an outflow particle with zero prescribed pressure,
    integrated like fluid otherwise, and is removed past the far edge.
    """

    def __init__(self, axis, inflow_plane, outflow_plane, depth, profile,
                 span_lo, span_hi, dx, rho0):
        self.axis = axis
        self.inflow_plane = inflow_plane
        self.outflow_plane = outflow_plane
        self.depth = depth
        self.profile = profile          # callable (positions, t) -> (Q, dim)
        self.span_lo = np.asarray(span_lo, dtype=np.float64)
        self.span_hi = np.asarray(span_hi, dtype=np.float64)
        self.dx = dx
        self.rho0 = rho0

    def _slab(self, lo_coord, hi_coord):
        lo = np.empty(len(self.span_lo) + 1)
        hi = np.empty_like(lo)
        other = [a for a in range(len(lo)) if a != self.axis]
        lo[self.axis], hi[self.axis] = lo_coord, hi_coord
        for k, a in enumerate(other):
            lo[a], hi[a] = self.span_lo[k], self.span_hi[k]
        return lattice(lo, hi, self.dx)

    def seed(self, state: ParticleState, mass, eta, t=0.0, fill_outflow=True):
        """Populate both zones on the initial lattice."""
        pos = self._slab(self.inflow_plane - self.depth, self.inflow_plane)
        ids = state.add(kinds.INFLOW, pos, vel=np.zeros(state.dim), mass=mass,
                        rho=self.rho0, eta=eta)
        self.set_inflow_motion(state, t)
        if fill_outflow:
            pos = self._slab(self.outflow_plane, self.outflow_plane + self.depth)
            state.add(kinds.OUTFLOW, pos, vel=np.zeros(state.dim), mass=mass,
                      rho=self.rho0, eta=eta)
        return ids

    def set_inflow_motion(self, state: ParticleState, t):
        sel = state.mask(kinds.INFLOW)
        if np.any(sel):
            v = self.profile(state.pos[sel], t)
            state.vel[sel] = v
            state.vel_adv[sel] = v
            state.vel_visc[sel] = v

    def retag_and_reseed(self, state: ParticleState, t):
        ax = self.axis
        inflow = state.mask(kinds.INFLOW)
        promote = inflow & (state.pos[:, ax] >= self.inflow_plane)
        if np.any(promote):
            state.kind[promote] = kinds.FLUID
            respawn = state.pos[promote].copy()
            respawn[:, ax] -= self.depth
            if np.any(respawn[:, ax] < self.inflow_plane - self.depth - 0.5 * self.dx) \
                    or np.any(respawn[:, ax] >= self.inflow_plane):
                raise SeedingError(
                    "respawned inflow particle falls outside the inflow zone; "
                    "zone depth and inflow velocity are inconsistent")
            vel = self.profile(respawn, t)
            state.add(kinds.INFLOW, respawn, vel=vel,
                      mass=float(state.m[promote][0]), rho=self.rho0,
                      eta=float(state.eta[promote][0]))
            state.generation += 1

        fluid = state.mask(kinds.FLUID)
        demote = fluid & (state.pos[:, ax] > self.outflow_plane)
        if np.any(demote):
            state.kind[demote] = kinds.OUTFLOW
            state.generation += 1
        outflow = state.mask(kinds.OUTFLOW)
        back = outflow & (state.pos[:, ax] <= self.outflow_plane)
        if np.any(back):
            state.kind[back] = kinds.FLUID
            state.generation += 1
        gone = state.mask(kinds.OUTFLOW) \
            & (state.pos[:, ax] > self.outflow_plane + self.depth)
        if np.any(gone):
            state.remove(gone)

    def apply_fields(self, state: ParticleState, grid: NeighborGrid,
                     kernel: SmoothingKernel, model: FluidModel):
        """Inflow pressure extrapolation and outflow pressure pinning."""
        outflow = state.mask(kinds.OUTFLOW)
        state.p[outflow] = 0.0
        state.rho[outflow] = model.rho0

        inflow = state.mask(kinds.INFLOW)
        if not np.any(inflow):
            return
        pairs = grid.pairs
        sel = inflow[pairs.rows] & (state.kind[pairs.cols] == kinds.FLUID)
        r, c = pairs.rows[sel], pairs.cols[sel]
        vw = state.volume()[c] * kernel.evaluate(pairs.dist[sel])
        den = np.bincount(r, weights=vw, minlength=state.n)
        num = np.bincount(r, weights=vw * state.p[c], minlength=state.n)
        state.p[inflow] = 0.0
        covered = inflow & (den > 0.0)
        state.p[covered] = num[covered] / den[covered]
        state.rho[inflow] = eos_density(state.p[inflow], model)
