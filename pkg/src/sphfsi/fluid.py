"""Weakly compressible SPH: field evaluation and time integration.

Particles carry mass, density, pressure and two velocities: the physical
velocity ``u`` and the transport (advection) velocity that drifts the
particle and is pushed apart by a constant background pressure to suppress
tensile instability.  Density comes from kernel summation, pressure from the
linear equation of state ``p = c^2 (rho - rho0)``, and time integration is
explicit velocity-Verlet in kick-drift-kick form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import backend, kinds, neighbors
from .errors import CoincidentParticlesError, NonphysicalStateError, NoSupportError
from .kernels import SmoothingKernel


@dataclass
class FluidModel:
    """Material and numerical parameters of the weakly compressible fluid."""

    rho0: float
    sound_speed: float
    viscosity: float = 0.0          # kinematic
    background_pressure: float = 0.0
    body_force: object = None       # vector or callable t -> vector

    def __post_init__(self):
        if self.rho0 <= 0.0 or self.sound_speed <= 0.0:
            raise ValueError("reference density and sound speed must be positive")
        if self.background_pressure < 0.0:
            raise ValueError("background pressure must be non-negative")

    @property
    def reference_pressure(self) -> float:
        return self.rho0 * self.sound_speed ** 2

    @property
    def dynamic_viscosity(self) -> float:
        return self.rho0 * self.viscosity

    def body_at(self, t: float, dim: int) -> np.ndarray:
        if self.body_force is None:
            return np.zeros(dim)
        if callable(self.body_force):
            return np.asarray(self.body_force(t), dtype=np.float64)
        return np.asarray(self.body_force, dtype=np.float64)


class ParticleState:
    """Structure-of-arrays particle storage.

    Per-kind conventions: ``vel`` is the physical velocity for fluid and
    outflow particles and the prescribed velocity for wall and inflow
    particles; ``vel_visc`` holds the velocity seen by viscous interactions
    (the no-slip ghost value for walls, ``vel`` otherwise); ``acc`` of wall
    particles stores their prescribed acceleration.  Masses never change over
    a particle's lifetime.
    """

    _VEC = ("pos", "vel", "vel_adv", "vel_visc", "acc", "acc_adv")
    _SCA = ("rho", "p", "m", "eta")

    def __init__(self, dim: int):
        self.dim = dim
        self.ids = np.empty(0, dtype=np.int64)
        self.kind = np.empty(0, dtype=np.int8)
        for name in self._VEC:
            setattr(self, name, np.empty((0, dim)))
        for name in self._SCA:
            setattr(self, name, np.empty(0))
        self.generation = 0
        self._next_id = 0

    def __len__(self):
        return len(self.ids)

    @property
    def n(self) -> int:
        return len(self.ids)

    def volume(self) -> np.ndarray:
        return self.m / self.rho

    def mask(self, *which) -> np.ndarray:
        out = np.zeros(self.n, dtype=bool)
        for k in which:
            out |= self.kind == k
        return out

    def add(self, kind, pos, vel=None, mass=None, rho=None, eta=0.0):
        """Append particles of one kind; returns their ids."""
        pos = np.atleast_2d(np.asarray(pos, dtype=np.float64))
        count = len(pos)
        ids = np.arange(self._next_id, self._next_id + count, dtype=np.int64)
        self._next_id += count
        vel = np.zeros_like(pos) if vel is None else np.atleast_2d(
            np.broadcast_to(np.asarray(vel, dtype=np.float64), pos.shape)).copy()
        rho = np.full(count, 1.0 if rho is None else rho, dtype=np.float64)
        m = np.full(count, 0.0 if mass is None else mass, dtype=np.float64)

        self.ids = np.concatenate([self.ids, ids])
        self.kind = np.concatenate([self.kind, np.full(count, kind, dtype=np.int8)])
        self.pos = np.vstack([self.pos, pos])
        self.vel = np.vstack([self.vel, vel])
        self.vel_adv = np.vstack([self.vel_adv, vel])
        self.vel_visc = np.vstack([self.vel_visc, vel])
        self.acc = np.vstack([self.acc, np.zeros_like(pos)])
        self.acc_adv = np.vstack([self.acc_adv, np.zeros_like(pos)])
        self.rho = np.concatenate([self.rho, rho])
        self.p = np.concatenate([self.p, np.zeros(count)])
        self.m = np.concatenate([self.m, m])
        self.eta = np.concatenate([self.eta, np.full(count, eta, dtype=np.float64)])
        self.generation += 1
        return ids

    def remove(self, index_mask):
        keep = ~np.asarray(index_mask, dtype=bool)
        self.ids = self.ids[keep]
        self.kind = self.kind[keep]
        for name in self._VEC:
            setattr(self, name, getattr(self, name)[keep])
        for name in self._SCA:
            setattr(self, name, getattr(self, name)[keep])
        self.generation += 1

    def copy(self) -> "ParticleState":
        out = ParticleState(self.dim)
        out.ids = self.ids.copy()
        out.kind = self.kind.copy()
        for name in self._VEC + self._SCA:
            setattr(out, name, getattr(self, name).copy())
        out.generation = self.generation
        out._next_id = self._next_id
        return out

    def equal_bits(self, other: "ParticleState") -> bool:
        if self.n != other.n or self._next_id != other._next_id:
            return False
        arrays = ("ids", "kind") + self._VEC + self._SCA
        return all(np.array_equal(getattr(self, a), getattr(other, a))
                   for a in arrays)


def lattice(lo, hi, dx, predicate=None) -> np.ndarray:
    """Regular grid of cell centers with spacing ``dx`` filling [lo, hi].

    Particle ``i`` of the returned lattice occupies an effective volume of
    ``dx**dim``; the matching mass is ``rho0 * dx**dim``.
    """
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    axes = []
    for a in range(len(lo)):
        count = max(1, int(round((hi[a] - lo[a]) / dx)))
        axes.append(lo[a] + (np.arange(count) + 0.5) * dx)
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    if predicate is not None:
        pts = pts[predicate(pts)]
    return pts


# ---------------------------------------------------------------------------
# field operations


def eos_pressure(rho, model: FluidModel):
    """p = c^2 (rho - rho0); zero at the reference density."""
    return model.sound_speed ** 2 * (np.asarray(rho) - model.rho0)


def eos_density(p, model: FluidModel):
    """Inverse equation of state, rho = p / c^2 + rho0."""
    p = np.asarray(p)
    if np.any(p <= -model.reference_pressure):
        raise NonphysicalStateError(
            f"pressure {p.min() if p.ndim else float(p)} <= -p0 "
            f"({-model.reference_pressure}) implies non-positive density")
    return p / model.sound_speed ** 2 + model.rho0


def density_summation(i, state: ParticleState, grid, kernel: SmoothingKernel,
                      extra_contributions=()):
    """Density of particle ``i`` from kernel summation.

    ``extra_contributions`` holds kernel values of virtual boundary
    particles restoring full support near an interface.
    """
    grid.check_current(state.generation)
    _, _, dist = grid.neighbors(i)
    total = kernel.self_value() + float(np.sum(kernel.evaluate(dist)))
    total += float(np.sum(extra_contributions))
    rho = state.m[i] * total
    if not math.isfinite(rho):
        raise NonphysicalStateError(f"non-finite density for particle {i}")
    return rho


def pair_acceleration(i, j, state: ParticleState, kernel: SmoothingKernel,
                      dx=None):
    """Acceleration contribution of neighbor ``j`` on particle ``i``.

    Pressure uses the density-weighted inter-particle average, viscosity the
    harmonic mean of the dynamic viscosities; the resulting particle forces
    are pairwise anti-symmetric, ``m_i a_ij = -m_j a_ji``.
    """
    if dx is None:
        dx = state.pos[i] - state.pos[j]
    r = float(np.linalg.norm(dx))
    if r == 0.0:
        raise CoincidentParticlesError(f"particles {i} and {j} coincide")
    e = dx / r
    dwdr = kernel.evaluate_derivative(r)
    vi, vj = state.m[i] / state.rho[i], state.m[j] / state.rho[j]
    v2 = vi * vi + vj * vj
    p_t = ((state.rho[j] * state.p[i] + state.rho[i] * state.p[j])
           / (state.rho[i] + state.rho[j]))
    eta_sum = state.eta[i] + state.eta[j]
    eta_t = 2.0 * state.eta[i] * state.eta[j] / eta_sum if eta_sum > 0 else 0.0
    u_ij = state.vel[i] - state.vel[j]
    return v2 / state.m[i] * (-p_t * dwdr * e + eta_t * dwdr / r * u_ij)


def transport_velocity_terms(i, j, state: ParticleState, p_b,
                             kernel: SmoothingKernel, dx=None):
    """Background-pressure and advection-stress corrections for pair (i, j).

    Returns ``(advection_correction, momentum_correction)``: the first
    advances the transport velocity, the second augments the momentum
    equation with 1/2 (A_i + A_j) . grad W where A = rho u (u_adv - u).
    Both vanish on particle distributions satisfying partition of unity with
    matching velocities.
    """
    if dx is None:
        dx = state.pos[i] - state.pos[j]
    r = float(np.linalg.norm(dx))
    if r == 0.0:
        raise CoincidentParticlesError(f"particles {i} and {j} coincide")
    e = dx / r
    dwdr = kernel.evaluate_derivative(r)
    vi, vj = state.m[i] / state.rho[i], state.m[j] / state.rho[j]
    v2 = vi * vi + vj * vj
    adv = -p_b / state.m[i] * v2 * dwdr * e
    a_i = state.rho[i] * state.vel[i] * np.dot(state.vel_adv[i] - state.vel[i], e)
    a_j = state.rho[j] * state.vel[j] * np.dot(state.vel_adv[j] - state.vel[j], e)
    mom = v2 / state.m[i] * dwdr * 0.5 * (a_i + a_j)
    return adv, mom


def virtual_pair_acceleration(i, state: ParticleState, kernel: SmoothingKernel,
                              r_k, p_k, rho_k, u_k, vol_k):
    """Acceleration of fluid particle ``i`` due to one virtual particle.

    Same structure as :func:`pair_acceleration` with the harmonic-mean
    viscosity replaced by the fluid particle's own dynamic viscosity.
    """
    dx = state.pos[i] - np.asarray(r_k, dtype=np.float64)
    r = float(np.linalg.norm(dx))
    if r == 0.0:
        raise CoincidentParticlesError(f"particle {i} coincides with a virtual")
    e = dx / r
    dwdr = kernel.evaluate_derivative(r)
    vi = state.m[i] / state.rho[i]
    v2 = vi * vi + vol_k * vol_k
    p_t = (rho_k * state.p[i] + state.rho[i] * p_k) / (state.rho[i] + rho_k)
    u_ik = state.vel[i] - np.asarray(u_k, dtype=np.float64)
    return v2 / state.m[i] * (-p_t * dwdr * e + state.eta[i] * dwdr / r * u_ik)


def total_acceleration(i, state: ParticleState, grid, model: FluidModel,
                       kernel: SmoothingKernel, t=0.0, virtual_sets=()):
    """Momentum-equation acceleration of particle ``i``.

    Sums the contributions of all neighbors, all supplied virtual particle
    sets (tuples of per-virtual position/pressure/density/velocity/volume
    arrays) and the body force, added exactly once.
    """
    grid.check_current(state.generation)
    cols, dxs, _ = grid.neighbors(i)
    a = np.zeros(state.dim)
    for j, dx in zip(cols, dxs):
        a += pair_acceleration(i, int(j), state, kernel, dx=dx)
        _, mom = transport_velocity_terms(
            i, int(j), state, model.background_pressure, kernel, dx=dx)
        a += mom
    for vs in virtual_sets:
        r_k, p_k, rho_k, u_k, vol_k = vs
        for idx in range(len(p_k)):
            a += virtual_pair_acceleration(
                i, state, kernel, r_k[idx], p_k[idx], rho_k[idx], u_k[idx],
                vol_k[idx])
    return a + model.body_at(t, state.dim)


def kick(u, a, dt_half):
    """Half-step velocity update u' = u + dt/2 a."""
    return u + dt_half * a


def drift(r, u_adv, dt):
    """Position update r' = r + dt u; advects with the transport velocity
    where the transport-velocity formulation is active."""
    return r + dt * u_adv


def step_limit(h, c, u_max, nu=0.0, b_max=0.0):
    """Largest stable time step: min of the acoustic CFL, viscous and body
    force bounds; bounds with zero denominator are skipped."""
    if h <= 0.0 or c <= 0.0:
        raise ValueError("h and c must be positive")
    bound = 0.25 * h / (c + abs(u_max))
    if nu > 0.0:
        bound = min(bound, 0.125 * h * h / nu)
    if b_max > 0.0:
        bound = min(bound, 0.25 * math.sqrt(h / abs(b_max)))
    return bound


def shepard_interpolate(x, values, volumes, positions, grid,
                        kernel: SmoothingKernel, include=None):
    """Shepard-filtered field value(s) at point(s) ``x``.

    ``values`` may be per-particle scalars or vectors; ``include`` optionally
    masks the contributing particles.  Raises :class:`NoSupportError` if any
    query point has no contributor within the support radius.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    table = grid.query_points(pts)
    w = kernel.evaluate(table.dist)
    if include is not None:
        w = w * include[table.cols]
    vw = volumes[table.cols] * w
    den = np.bincount(table.rows, weights=vw, minlength=len(pts))
    if np.any(den <= 0.0):
        raise NoSupportError("interpolation point has no kernel support")
    vals = np.asarray(values, dtype=np.float64)
    if vals.ndim == 1:
        num = np.bincount(table.rows, weights=vw * vals[table.cols],
                          minlength=len(pts))
        out = num / den
    else:
        out = np.empty((len(pts), vals.shape[1]))
        for ax in range(vals.shape[1]):
            num = np.bincount(table.rows, weights=vw * vals[table.cols, ax],
                              minlength=len(pts))
            out[:, ax] = num / den
    return out[0] if single else out


# ---------------------------------------------------------------------------
# time-stepping pipeline


class FluidSolver:
    """Kick-drift-kick pipeline over a particle state.

    Per step: half kick of velocity and transport velocity, drift with the
    transport velocity, periodic wrap, open-boundary retagging, then a full
    field evaluation (grid rebuild, density summation with interface
    contributions, equation of state, wall/open-boundary extrapolation,
    interface virtual particles, momentum evaluation) and the closing kick.
    """

    def __init__(self, state: ParticleState, model: FluidModel,
                 kernel: SmoothingKernel, domain: neighbors.Domain,
                 open_boundary=None, interface_system=None,
                 escape_margin=None, backend_name=None):
        self.state = state
        self.model = model
        self.kernel = kernel
        self.domain = domain
        self.open_boundary = open_boundary
        self.interface = interface_system
        self.escape_margin = escape_margin
        self.backend_name = backend_name
        self._backend = backend.get_backend(backend_name)
        self.t = 0.0
        self.grid = None
        self._grid_generation = -1
        self.interface_forces = None
        self._primed = False

    # -- state management ---------------------------------------------------

    def snapshot(self):
        return (self.t, self.state.copy(), self._primed)

    def restore(self, snap):
        self.t, state, self._primed = snap
        self.state = state.copy()
        self.grid = None
        self._grid_generation = -1

    # -- evaluation ---------------------------------------------------------

    def _ensure_grid(self):
        if self.grid is None or self._grid_generation != self.state.generation:
            self.grid = neighbors.rebuild(
                self.state.pos, self.kernel.support_radius, self.domain,
                generation=self.state.generation,
                escape_margin=self.escape_margin,
                backend_name=self.backend_name)
            self._grid_generation = self.state.generation
        return self.grid

    def prime(self):
        """Initial field evaluation so the first kick has accelerations."""
        self.evaluate(self.t)
        self._primed = True

    def evaluate(self, t):
        from . import boundaries  # local import, no cycle at module load

        s = self.state
        grid = self._ensure_grid()
        pairs = grid.pairs

        ws = None
        if self.interface is not None:
            ws = self.interface.geometry_pass(s, grid, self.kernel)

        ksum = self._backend.kernel_sums(pairs.indptr, pairs.rows, pairs.dist,
                                         self.kernel.h, self.kernel.dim)
        fluid = s.mask(kinds.FLUID)
        total = ksum + self.kernel.self_value()
        if ws is not None:
            total = total + ws.density_kernel_sums(s.n)
        s.rho[fluid] = s.m[fluid] * total[fluid]
        if np.any(~np.isfinite(s.rho[fluid])):
            raise NonphysicalStateError("non-finite density encountered")
        s.p[fluid] = eos_pressure(s.rho[fluid], self.model)

        b = self.model.body_at(t, s.dim)
        s.vel_visc[:] = s.vel
        boundaries.wall_extrapolate_all(s, grid, self.kernel, self.model, b)
        if self.open_boundary is not None:
            self.open_boundary.apply_fields(s, grid, self.kernel, self.model)

        iface_acc = iface_adv = None
        if ws is not None:
            iface_acc, iface_adv, self.interface_forces = \
                self.interface.dynamics_pass(ws, s, self.model, self.kernel, t)
        elif self.interface is not None:
            from .interface import InterfaceForces
            self.interface_forces = InterfaceForces.empty(
                self.interface.patches, s.dim)
        else:
            self.interface_forces = None

        vol = s.volume()
        acc, acc_adv = self._backend.momentum(
            pairs.indptr, pairs.rows, pairs.cols, pairs.dx, pairs.dist,
            s.vel, s.vel_adv, s.vel_visc, s.rho, s.p, vol, s.m, s.eta,
            s.kind, self.kernel.h, self.kernel.dim,
            self.model.background_pressure)

        movers = s.mask(kinds.FLUID, kinds.OUTFLOW)
        if iface_acc is not None:
            acc += iface_acc
            acc_adv += iface_adv
        s.acc[movers] = acc[movers] + b
        s.acc_adv[movers] = acc_adv[movers]

    # -- stepping -----------------------------------------------------------

    def step(self, dt):
        if not self._primed:
            raise RuntimeError("call prime() before stepping")
        s = self.state
        movers = s.mask(kinds.FLUID, kinds.OUTFLOW)
        half = 0.5 * dt

        s.vel[movers] = kick(s.vel[movers], s.acc[movers], half)
        s.vel_adv[movers] = s.vel[movers] + half * s.acc_adv[movers]
        if self.open_boundary is not None:
            self.open_boundary.set_inflow_motion(s, self.t + half)

        s.pos[movers] = drift(s.pos[movers], s.vel_adv[movers], dt)
        inflow = s.mask(kinds.INFLOW)
        if np.any(inflow):
            s.pos[inflow] = drift(s.pos[inflow], s.vel[inflow], dt)
        s.pos = self.domain.wrap(s.pos)
        s.generation += 1

        if self.open_boundary is not None:
            self.open_boundary.retag_and_reseed(s, self.t + dt)

        self.evaluate(self.t + dt)

        movers = s.mask(kinds.FLUID, kinds.OUTFLOW)
        s.vel[movers] = kick(s.vel[movers], s.acc[movers], half)
        self.t += dt
