"""Virtual boundary particles behind closest-point projections.

Every fluid particle close to the interface gets its own transient set of
virtual boundary particles, arranged in regular layers behind its closest
projection point onto the interface and sliding along with it.  The virtuals
carry pressure, density and velocity extrapolated from the fluid field and
the interface kinematics; their interaction forces restore full kernel
support near arbitrarily deforming boundaries, and their reaction is
assembled into nodal interface forces.

Interfaces are either chains of 2-node line elements (conforming clones of
the structure surface) or analytic surfaces (plane, circle) with closed-form
projection.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kinds
from .errors import NonphysicalStateError, ProjectionFailureError
from .fluid import FluidModel, ParticleState, virtual_pair_acceleration
from .kernels import SmoothingKernel

log = logging.getLogger(__name__)

INTERIOR = "interior"
CONVEX = "convex-shared"
CONCAVE = "concave-multi"

# below this fraction of the layer spacing the projection direction is
# degenerate and the previous step's direction (or the element normal) is used
DEGENERATE_FRACTION = 1e-3


def perp(v):
    """90-degree counter-clockwise rotation in 2D."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 1:
        return np.array([-v[1], v[0]])
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


class InterfaceMesh:
    """Chain of first-order line elements with nodal kinematics.

    Elements are directed so the fluid lies on their left; shape functions
    over the iso-parametric coordinate xi in [-1, 1] are (1 -+ xi)/2.
    Node positions are reference coordinates plus displacement.
    """

    def __init__(self, ref_nodes, elems):
        self.ref_nodes = np.atleast_2d(np.asarray(ref_nodes, dtype=np.float64))
        self.elems = np.atleast_2d(np.asarray(elems, dtype=np.int64))
        n = len(self.ref_nodes)
        self.disp = np.zeros_like(self.ref_nodes)
        self.vel = np.zeros_like(self.ref_nodes)
        self.acc = np.zeros_like(self.ref_nodes)
        if self.elems.size and (self.elems.min() < 0 or self.elems.max() >= n):
            raise ValueError("element connectivity out of range")

    @property
    def n_nodes(self):
        return len(self.ref_nodes)

    @property
    def n_elems(self):
        return len(self.elems)

    def nodes(self):
        """Current node positions."""
        return self.ref_nodes + self.disp

    def set_kinematics(self, disp=None, vel=None, acc=None):
        if disp is not None:
            self.disp[:] = disp
        if vel is not None:
            self.vel[:] = vel
        if acc is not None:
            self.acc[:] = acc

    def element_nodes(self, e):
        x = self.nodes()
        return x[self.elems[e, 0]], x[self.elems[e, 1]]

    def fluid_normal(self, e):
        """Unit normal of element ``e`` pointing into the fluid."""
        a, b = self.element_nodes(e)
        t = b - a
        return perp(t / np.linalg.norm(t))

    @staticmethod
    def shape_functions(xi):
        xi = np.asarray(xi, dtype=np.float64)
        return np.stack([(1.0 - xi) / 2.0, (1.0 + xi) / 2.0], axis=-1)


class AnalyticPlane:
    """Infinite plane interface with prescribed rigid kinematics."""

    def __init__(self, point, normal_into_fluid, velocity=None,
                 acceleration=None):
        self.point = np.asarray(point, dtype=np.float64)
        n = np.asarray(normal_into_fluid, dtype=np.float64)
        self.normal = n / np.linalg.norm(n)
        self.velocity = np.zeros_like(self.point) if velocity is None \
            else np.asarray(velocity, dtype=np.float64)
        self.acceleration = np.zeros_like(self.point) if acceleration is None \
            else np.asarray(acceleration, dtype=np.float64)

    def project_points(self, pts):
        d = (pts - self.point[None, :]) @ self.normal
        points = pts - d[:, None] * self.normal[None, :]
        return points, np.abs(d)

    def kinematics(self, points):
        q = len(points)
        return (np.broadcast_to(self.velocity, (q, len(self.point))).copy(),
                np.broadcast_to(self.acceleration, (q, len(self.point))).copy())

    def fallback_normal(self, pts):
        return np.broadcast_to(self.normal, pts.shape).copy()


class AnalyticCircle:
    """Rigid circle rotating about its fixed center (2D cylinder surface)."""

    def __init__(self, center, radius, omega=0.0, fluid_side="outside"):
        if fluid_side not in ("outside", "inside"):
            raise ValueError("fluid_side must be 'outside' or 'inside'")
        self.center = np.asarray(center, dtype=np.float64)
        self.radius = float(radius)
        self.omega = float(omega)
        self.fluid_side = fluid_side

    def project_points(self, pts):
        rel = pts - self.center[None, :]
        d = np.linalg.norm(rel, axis=1)
        safe = np.where(d > 0.0, d, 1.0)
        points = self.center[None, :] + self.radius * rel / safe[:, None]
        return points, np.abs(d - self.radius)

    def kinematics(self, points):
        rel = points - self.center[None, :]
        vel = self.omega * perp(rel)
        acc = -self.omega ** 2 * rel
        return vel, acc

    def fallback_normal(self, pts):
        rel = pts - self.center[None, :]
        d = np.linalg.norm(rel, axis=1)
        n = rel / np.where(d > 0.0, d, 1.0)[:, None]
        return n if self.fluid_side == "outside" else -n


@dataclass
class ProjectionResult:
    """Closest-point projection of one fluid particle onto one patch."""

    patch: object
    elem: int | None
    xi: float | None
    point: np.ndarray
    distance: float
    e_r: np.ndarray
    tag: str = INTERIOR


def project(r_i, mesh: InterfaceMesh, elem: int, max_distance=None):
    """Closest point on a line element; clamped to the element ends.

    Returns ``None`` when ``max_distance`` is given and exceeded.  The unit
    vector ``e_r`` points from the particle to the projection point; for a
    particle exactly on the element it is left zero (the caller resolves the
    degeneracy).
    """
    r_i = np.asarray(r_i, dtype=np.float64)
    a, b = mesh.element_nodes(elem)
    ab = b - a
    t = float(np.dot(r_i - a, ab) / np.dot(ab, ab))
    t = min(1.0, max(0.0, t))
    if t == 0.0:
        point = a.copy()
    elif t == 1.0:
        point = b.copy()
    else:
        point = a + t * ab
    d = float(np.linalg.norm(point - r_i))
    if max_distance is not None and d >= max_distance:
        return None
    e_r = (point - r_i) / d if d > 0.0 else np.zeros_like(point)
    tag = INTERIOR if 0.0 < t < 1.0 else CONVEX
    return ProjectionResult(mesh, elem, 2.0 * t - 1.0, point, d, e_r, tag)


def project_to_quad(r_i, nodes, max_iter=50, tol=1e-12):
    """Closest point on a 3D bilinear quad via damped Newton.

    ``nodes`` is (4, 3) in counter-clockwise order; the iso-parametric
    coordinates are clamped to [-1, 1]^2.  Raises
    :class:`ProjectionFailureError` on non-convergence.
    """
    r_i = np.asarray(r_i, dtype=np.float64)
    nodes = np.asarray(nodes, dtype=np.float64)

    def shape(xi, eta):
        return 0.25 * np.array([(1 - xi) * (1 - eta), (1 + xi) * (1 - eta),
                                (1 + xi) * (1 + eta), (1 - xi) * (1 + eta)])

    def dshape(xi, eta):
        dxi = 0.25 * np.array([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)])
        deta = 0.25 * np.array([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)])
        return dxi, deta

    ksi = np.zeros(2)
    scale = max(np.linalg.norm(nodes.max(0) - nodes.min(0)), 1e-300)

    def objective(k):
        x = shape(*k) @ nodes
        return x, 0.5 * float(np.dot(x - r_i, x - r_i))

    x, f = objective(ksi)
    for _ in range(max_iter):
        dxi, deta = dshape(*ksi)
        t1, t2 = dxi @ nodes, deta @ nodes
        res = x - r_i
        g = np.array([np.dot(res, t1), np.dot(res, t2)])
        # gradient projected onto the feasible box [-1, 1]^2
        pg = g.copy()
        pg[(ksi <= -1.0 + 1e-12) & (g > 0.0)] = 0.0
        pg[(ksi >= 1.0 - 1e-12) & (g < 0.0)] = 0.0
        if np.linalg.norm(pg) < tol * scale * scale:
            return ksi, x, float(np.linalg.norm(x - r_i))
        hess = np.array([[np.dot(t1, t1), np.dot(t1, t2)],
                         [np.dot(t2, t1), np.dot(t2, t2)]])
        step = np.linalg.solve(hess, -g)
        lam = 1.0
        cand, x_new, f_new = ksi, x, f
        while lam > 1e-10:
            cand = np.clip(ksi + lam * step, -1.0, 1.0)
            x_new, f_new = objective(cand)
            if f_new < f:
                break
            lam *= 0.5
        if np.allclose(cand, ksi, atol=1e-15):
            return ksi, x, float(np.linalg.norm(x - r_i))
        ksi, x, f = cand, x_new, f_new
    raise ProjectionFailureError(
        f"quad projection did not converge within {max_iter} iterations")


def classify_corner(r_i, mesh: InterfaceMesh, e1: int, e2: int):
    """Corner treatment at two adjacent elements.

    A convex wedge yields the single shared-node projection; a concave wedge
    keeps both per-element projections; a flat junction degenerates to one
    interior projection.  Returns ``(tag, projections)``.
    """
    p1 = project(r_i, mesh, e1)
    p2 = project(r_i, mesh, e2)
    if np.allclose(p1.point, p2.point, rtol=0.0, atol=1e-12):
        a1, b1 = mesh.element_nodes(e1)
        a2, b2 = mesh.element_nodes(e2)
        t1 = (b1 - a1) / np.linalg.norm(b1 - a1)
        t2 = (b2 - a2) / np.linalg.norm(b2 - a2)
        cross = t1[0] * t2[1] - t1[1] * t2[0]
        if abs(cross) < 1e-12:
            p1.tag = INTERIOR
            return INTERIOR, [p1]
        p1.tag = CONVEX
        return CONVEX, [p1]
    keep = [p for p in (p1, p2)]
    best = min(p.distance for p in keep)
    keep = [p for p in keep
            if p.tag == INTERIOR or p.distance <= best * (1.0 + 1e-12)]
    if len(keep) == 2:
        for p in keep:
            p.tag = CONCAVE
        return CONCAVE, keep
    keep[0].tag = INTERIOR if keep[0].tag == INTERIOR else CONVEX
    return keep[0].tag, keep


@dataclass
class VirtualParticleSet:
    """Layered virtual particles behind one projection point."""

    projection: ProjectionResult
    basis: np.ndarray        # rows e_r, e_s (, e_t)
    positions: np.ndarray    # (K, dim)


def orthonormal_basis(e_r):
    """Orthonormal frame with first vector ``e_r`` (2D or 3D)."""
    e_r = np.asarray(e_r, dtype=np.float64)
    if len(e_r) == 2:
        return np.stack([e_r, perp(e_r)])
    helper = np.zeros(3)
    helper[np.argmin(np.abs(e_r))] = 1.0
    e_s = np.cross(helper, e_r)
    e_s /= np.linalg.norm(e_s)
    e_t = np.cross(e_r, e_s)
    return np.stack([e_r, e_s, e_t])


def layer_offsets(q, dim):
    """Integer layer indices (m_r, m_s[, m_t]) of a virtual set.

    ``q = floor(r_c / dx)`` layers behind the projection point, each a
    (2q - 1)-wide patch per tangential direction.
    """
    m_r = np.arange(q)
    m_s = np.arange(-(q - 1), q)
    if dim == 2:
        grid = np.stack(np.meshgrid(m_r, m_s, indexing="ij"), axis=-1)
    else:
        grid = np.stack(np.meshgrid(m_r, m_s, m_s, indexing="ij"), axis=-1)
    return grid.reshape(-1, dim - 1 + 1)


def build_virtual_set(projection: ProjectionResult, dx, q) -> VirtualParticleSet:
    """Place the virtual particles of one projection.

    The first layer sits ``dx/2`` behind the projection point along ``e_r``,
    further layers follow at spacing ``dx``; tangential offsets are integer
    multiples of ``dx`` along the remaining basis vectors.
    """
    dim = len(projection.point)
    basis = orthonormal_basis(projection.e_r)
    offs = layer_offsets(q, dim).astype(np.float64)
    offs[:, 0] += 0.5
    positions = projection.point[None, :] + dx * offs @ basis
    return VirtualParticleSet(projection, basis, positions)


def interpolate_interface_kinematics(projection: ProjectionResult):
    """Velocity and acceleration of the interface at the projection point."""
    patch = projection.patch
    if isinstance(patch, InterfaceMesh):
        n = InterfaceMesh.shape_functions(projection.xi)
        ids = patch.elems[projection.elem]
        return n @ patch.vel[ids], n @ patch.acc[ids]
    vel, acc = patch.kinematics(projection.point[None, :])
    return vel[0], acc[0]


@dataclass
class ExtrapolationState:
    """Kernel-weighted fluid statistics around one projection point."""

    r_f: np.ndarray
    p_f: float
    grad_p: np.ndarray
    u_f: np.ndarray
    du_dir: np.ndarray      # smoothed directional velocity derivative


def extrapolation_state(projection: ProjectionResult, state: ParticleState,
                        grid, kernel: SmoothingKernel, body_force, a_c):
    """Shared extrapolation quantities of one projection point.

    Evaluated once per projection point and reused by all its virtual
    particles: the kernel-averaged fluid centroid, pressure and velocity, the
    pressure gradient from a local inviscid force balance, and the
    directional velocity derivative that ties the fluid velocity to the
    interface velocity.
    """
    table = grid.query_points(projection.point[None, :])
    cols = table.cols
    fluid = state.kind[cols] == kinds.FLUID
    cols, dist = cols[fluid], table.dist[fluid]
    if len(cols) == 0:
        raise NonphysicalStateError(
            "projection point has no fluid neighbor inside the support")
    w = kernel.evaluate(dist)
    sw = w.sum()
    r_f = (w[:, None] * state.pos[cols]).sum(axis=0) / sw
    p_f = float(np.dot(w, state.p[cols]) / sw)
    u_f = (w[:, None] * state.vel[cols]).sum(axis=0) / sw
    rho_f = float(np.dot(w, state.rho[cols]) / sw)
    b = np.asarray(body_force, dtype=np.float64)
    grad_p = rho_f * (b - np.asarray(a_c, dtype=np.float64))

    u_c, _ = interpolate_interface_kinematics(projection)
    den = float(np.dot(projection.point - r_f, projection.e_r))
    if abs(den) < 1e-10 * kernel.h:
        log.warning("degenerate directional-derivative denominator at %s",
                    projection.point)
        du_dir = np.zeros(state.dim)
    else:
        du_dir = (u_c - u_f) / den
    return ExtrapolationState(r_f, p_f, grad_p, u_f, du_dir)


def extrapolate_virtuals(vset: VirtualParticleSet, estate: ExtrapolationState,
                         model: FluidModel, m_i):
    """Pressure, density, velocity and volume of each virtual particle.

    First-order Taylor expansions around the averaged fluid centroid; the
    density follows from the equation of state, the volume uses the
    interacting fluid particle's mass (virtuals carry no mass of their own).
    """
    rel = vset.positions - estate.r_f[None, :]
    p_k = estate.p_f + rel @ estate.grad_p
    rho_k = p_k / model.sound_speed ** 2 + model.rho0
    if np.any(rho_k <= 0.0):
        raise NonphysicalStateError(
            "extrapolated virtual-particle density is non-positive; "
            "the run has likely blown up")
    s = rel @ vset.projection.e_r
    u_k = estate.u_f[None, :] + s[:, None] * estate.du_dir[None, :]
    vol_k = m_i / rho_k
    return p_k, rho_k, u_k, vol_k


def fluid_virtual_acceleration(i, state: ParticleState,
                               kernel: SmoothingKernel, r_k, p_k, rho_k, u_k,
                               vol_k):
    """Acceleration of fluid particle ``i`` due to one virtual particle."""
    return virtual_pair_acceleration(i, state, kernel, r_k, p_k, rho_k, u_k,
                                     vol_k)


def interface_point_force(m_i, accelerations):
    """Reaction force on the interface at one projection point.

    The exact negative of the momentum the virtual set imparts on its fluid
    particle, guaranteeing conservation of linear momentum.
    """
    acc = np.atleast_2d(np.asarray(accelerations, dtype=np.float64))
    return -m_i * acc.sum(axis=0)


def assemble_nodal_forces(mesh: InterfaceMesh, elems, xis, forces):
    """Distribute point forces to element nodes via the shape functions."""
    out = np.zeros((mesh.n_nodes, mesh.ref_nodes.shape[1]))
    elems = np.asarray(elems, dtype=np.int64)
    forces = np.atleast_2d(np.asarray(forces, dtype=np.float64))
    n = InterfaceMesh.shape_functions(np.asarray(xis, dtype=np.float64))
    n = np.atleast_2d(n)
    for local in range(2):
        node_ids = mesh.elems[elems, local]
        w = n[:, local][:, None] * forces
        for ax in range(out.shape[1]):
            np.add.at(out[:, ax], node_ids, w[:, ax])
    return out


# ---------------------------------------------------------------------------
# vectorized per-step pipeline

_TAGS = {0: INTERIOR, 1: CONVEX, 2: CONCAVE}


def _ragged_expand(starts, counts):
    """Concatenate ranges start[k] .. start[k]+count[k] (int64)."""
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    owner = np.repeat(np.arange(len(counts), dtype=np.int64), counts)
    nz = counts > 0
    cum_before = np.zeros(int(nz.sum()), dtype=np.int64)
    cum_before[1:] = np.cumsum(counts[nz])[:-1]
    idx = np.repeat(starts[nz] - cum_before, counts[nz]) + np.arange(total)
    return owner, idx


@dataclass
class InterfaceWorkspace:
    """Per-evaluation geometry of all fluid-interface interactions."""

    owner: np.ndarray          # particle row per projection
    patch: np.ndarray          # patch index per projection
    elem: np.ndarray           # element id (-1 for analytic patches)
    xi: np.ndarray
    point: np.ndarray          # (P, dim) projection points
    dist: np.ndarray
    e_r: np.ndarray            # (P, dim) unit particle -> projection point
    tag: np.ndarray            # 0 interior / 1 convex / 2 concave
    virt_pos: np.ndarray       # (P, K, dim)
    virt_dist: np.ndarray      # (P, K) distance to the owning particle
    virt_mask: np.ndarray      # (P, K) inside the support radius
    uniq_index: np.ndarray     # projection -> unique projection point
    uniq_table: object         # neighbor query of the unique points
    n_unique: int

    @property
    def n_proj(self):
        return len(self.owner)

    def density_kernel_sums(self, n):
        """Per-particle sum of virtual-particle kernel values."""
        out = np.zeros(n)
        if self.n_proj == 0:
            return out
        from .kernels import quintic_value
        w = quintic_value(self.virt_dist, self._h, self._dim) * self.virt_mask
        np.add.at(out, self.owner, w.sum(axis=1))
        return out


class InterfaceSystem:
    """All interface patches seen by the fluid, evaluated together.

    ``geometry_pass`` finds, per fluid particle near the interface, the
    surviving closest-point projections and their virtual particle layers;
    ``dynamics_pass`` extrapolates virtual fields, accumulates the
    acceleration contributions on the fluid, and assembles the reaction
    forces on the interface nodes.
    """

    def __init__(self, patches, dx):
        self.patches = list(patches)
        self.dx = float(dx)
        self._prev_er = {}

    # -- geometry ------------------------------------------------------------

    def _mesh_candidates(self, mesh, patch_idx, state, grid, rcut, owners_pos,
                         owner_rows):
        """Candidate (owner, element) pairs via cell rasterization."""
        lo, cell_size, ncells, periodic = grid.cell_geometry
        nodes = mesh.nodes()
        a = nodes[mesh.elems[:, 0]]
        b = nodes[mesh.elems[:, 1]]
        bb_lo = np.minimum(a, b) - rcut
        bb_hi = np.maximum(a, b) + rcut
        c_lo = np.floor((bb_lo - lo[None, :]) / cell_size[None, :]).astype(np.int64)
        c_hi = np.floor((bb_hi - lo[None, :]) / cell_size[None, :]).astype(np.int64)
        for ax in range(2):
            if periodic[ax]:
                width = c_hi[:, ax] - c_lo[:, ax]
                full = width >= ncells[ax] - 1
                c_lo[full, ax] = 0
                c_hi[full, ax] = ncells[ax] - 1
            else:
                np.clip(c_lo[:, ax], 0, ncells[ax] - 1, out=c_lo[:, ax])
                np.clip(c_hi[:, ax], 0, ncells[ax] - 1, out=c_hi[:, ax])
        nx = c_hi[:, 0] - c_lo[:, 0] + 1
        ny = c_hi[:, 1] - c_lo[:, 1] + 1
        elem_of_rect, ix = _ragged_expand(c_lo[:, 0], nx)
        # expand y per (elem, ix) rectangle column
        col_elem, iy = _ragged_expand(c_lo[elem_of_rect, 1], ny[elem_of_rect])
        exs = ix[col_elem]
        eys = iy
        if periodic[0]:
            exs = exs % ncells[0]
        if periodic[1]:
            eys = eys % ncells[1]
        cell_ids = exs * ncells[1] + eys
        elem_ids = elem_of_rect[col_elem]
        order = np.argsort(cell_ids, kind="stable")
        cell_ids, elem_ids = cell_ids[order], elem_ids[order]
        total = int(np.prod(ncells))
        counts = np.bincount(cell_ids, minlength=total)
        indptr = np.zeros(total + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])

        pcells = grid.cell_linear(owners_pos)
        starts = indptr[pcells]
        ccounts = indptr[pcells + 1] - starts
        prow, slot = _ragged_expand(starts, ccounts)
        return owner_rows[prow], elem_ids[slot]

    def geometry_pass(self, state: ParticleState, grid,
                      kernel: SmoothingKernel, positions=None, owners=None):
        """Project near-interface particles and place their virtual layers.

        By default operates on the fluid particles of ``state``; probe
        callers may pass explicit ``positions`` (with ``owners`` indexing
        them) to build virtual support for arbitrary points.
        """
        rcut = kernel.support_radius
        if positions is None:
            owner_rows = np.flatnonzero(state.kind == kinds.FLUID)
            positions = state.pos
            pos_of = state.pos
            owner_pos = state.pos[owner_rows]
            ids = state.ids
        else:
            positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
            owner_rows = np.arange(len(positions), dtype=np.int64)
            pos_of = positions
            owner_pos = positions
            ids = None

        own_all, elem_all, patch_all = [], [], []
        pt_all, t_all = [], []
        for pidx, patch in enumerate(self.patches):
            if isinstance(patch, InterfaceMesh):
                own, elem = self._mesh_candidates(
                    patch, pidx, state, grid, rcut, owner_pos, owner_rows)
                if len(own) == 0:
                    continue
                nodes = patch.nodes()
                a = nodes[patch.elems[elem, 0]]
                b = nodes[patch.elems[elem, 1]]
                ab = b - a
                denom = np.einsum("ij,ij->i", ab, ab)
                t = np.einsum("ij,ij->i", pos_of[own] - a, ab) / denom
                np.clip(t, 0.0, 1.0, out=t)
                point = a + t[:, None] * ab
                point[t == 0.0] = a[t == 0.0]
                point[t == 1.0] = b[t == 1.0]
            else:
                own = owner_rows
                point, _ = patch.project_points(pos_of[own])
                t = np.full(len(own), 0.5)
                elem = np.full(len(own), -1, dtype=np.int64)
            d = np.linalg.norm(point - pos_of[own], axis=1)
            keep = d < rcut
            own_all.append(own[keep])
            elem_all.append(elem[keep])
            patch_all.append(np.full(int(keep.sum()), pidx, dtype=np.int64))
            pt_all.append(point[keep])
            t_all.append(t[keep])

        if not own_all or sum(len(o) for o in own_all) == 0:
            return None
        own = np.concatenate(own_all)
        elem = np.concatenate(elem_all)
        patch = np.concatenate(patch_all)
        point = np.vstack(pt_all)
        t = np.concatenate(t_all)
        dist = np.linalg.norm(point - pos_of[own], axis=1)

        # keep interior projections; clamped-end projections survive only if
        # they are (one of) the particle's closest points, which realizes the
        # convex-corner rule without explicit mesh topology
        clamped = (t == 0.0) | (t == 1.0)
        order = np.lexsort((elem, patch, dist, own))
        own, elem, patch = own[order], elem[order], patch[order]
        point, t, dist, clamped = point[order], t[order], dist[order], clamped[order]
        first = np.ones(len(own), dtype=bool)
        first[1:] = own[1:] != own[:-1]
        group = np.cumsum(first) - 1
        dmin = dist[first][group]
        keep = ~clamped | (dist <= dmin + 1e-9 * rcut)
        own, elem, patch = own[keep], elem[keep], patch[keep]
        point, t, dist, clamped = point[keep], t[keep], dist[keep], clamped[keep]

        # drop duplicate projection points of the same particle (shared node
        # hit from both adjacent elements)
        key = np.empty((len(own), 3), dtype=np.int64)
        key[:, 0] = own
        key[:, 1:] = point.view(np.int64).reshape(len(own), -1)
        _, uniq_first = np.unique(key, axis=0, return_index=True)
        sel = np.zeros(len(own), dtype=bool)
        sel[uniq_first] = True
        own, elem, patch = own[sel], elem[sel], patch[sel]
        point, t, dist, clamped = point[sel], t[sel], dist[sel], clamped[sel]

        counts = np.bincount(own, minlength=len(pos_of))
        tag = np.where(clamped, 1, 0)
        tag[counts[own] > 1] = 2

        # projection direction, with the degenerate on-surface fallback
        e_r = np.zeros_like(point)
        ok = dist > DEGENERATE_FRACTION * self.dx
        e_r[ok] = (point[ok] - pos_of[own[ok]]) / dist[ok, None]
        if np.any(~ok):
            for k in np.flatnonzero(~ok):
                pid = int(ids[own[k]]) if ids is not None else None
                prev = self._prev_er.get(pid) if pid is not None else None
                if prev is not None:
                    e_r[k] = prev
                elif elem[k] >= 0:
                    e_r[k] = -self.patches[patch[k]].fluid_normal(elem[k])
                else:
                    e_r[k] = -self.patches[patch[k]].fallback_normal(
                        pos_of[own[k]][None, :])[0]
        if ids is not None:
            for k in range(len(own)):
                self._prev_er[int(ids[own[k]])] = e_r[k]

        q = int(np.floor(rcut / self.dx + 1e-9))
        offs = layer_offsets(q, point.shape[1]).astype(np.float64)
        offs[:, 0] += 0.5
        e_s = perp(e_r)
        virt = (point[:, None, :]
                + self.dx * offs[None, :, 0, None] * e_r[:, None, :]
                + self.dx * offs[None, :, 1, None] * e_s[:, None, :])
        rel = virt - pos_of[own][:, None, :]
        vd = np.linalg.norm(rel, axis=2)
        vmask = vd < rcut

        upoint, uniq_index = np.unique(
            point.view(np.int64).reshape(len(own), -1), axis=0,
            return_inverse=True)
        uniq_points = upoint.view(np.float64).reshape(-1, point.shape[1])
        table = grid.query_points(uniq_points)

        ws = InterfaceWorkspace(own, patch, elem, 2.0 * t - 1.0, point, dist,
                                e_r, tag, virt, vd, vmask,
                                uniq_index.ravel(), table, len(uniq_points))
        ws._h = kernel.h
        ws._dim = kernel.dim
        return ws

    # -- dynamics ------------------------------------------------------------

    def _kinematics(self, ws):
        """Interface velocity/acceleration at every projection point."""
        u_c = np.zeros_like(ws.point)
        a_c = np.zeros_like(ws.point)
        for pidx, patch in enumerate(self.patches):
            sel = ws.patch == pidx
            if not np.any(sel):
                continue
            if isinstance(patch, InterfaceMesh):
                n = InterfaceMesh.shape_functions(ws.xi[sel])
                conn = patch.elems[ws.elem[sel]]
                u_c[sel] = (n[:, 0, None] * patch.vel[conn[:, 0]]
                            + n[:, 1, None] * patch.vel[conn[:, 1]])
                a_c[sel] = (n[:, 0, None] * patch.acc[conn[:, 0]]
                            + n[:, 1, None] * patch.acc[conn[:, 1]])
            else:
                u_c[sel], a_c[sel] = patch.kinematics(ws.point[sel])
        return u_c, a_c

    def extrapolation_sums(self, ws, state: ParticleState):
        """Kernel-weighted fluid sums at the unique projection points."""
        from .kernels import quintic_value
        table = ws.uniq_table
        fl = state.kind[table.cols] == kinds.FLUID
        rows = table.rows[fl]
        cols = table.cols[fl]
        w = quintic_value(table.dist[fl], ws._h, ws._dim)
        nu = ws.n_unique
        sw = np.bincount(rows, weights=w, minlength=nu)
        if np.any(sw <= 0.0):
            raise NonphysicalStateError(
                "projection point without fluid support in its kernel range")
        dim = state.dim
        r_f = np.empty((nu, dim))
        u_f = np.empty((nu, dim))
        for ax in range(dim):
            r_f[:, ax] = np.bincount(rows, weights=w * state.pos[cols, ax],
                                     minlength=nu) / sw
            u_f[:, ax] = np.bincount(rows, weights=w * state.vel[cols, ax],
                                     minlength=nu) / sw
        p_f = np.bincount(rows, weights=w * state.p[cols], minlength=nu) / sw
        rho_f = np.bincount(rows, weights=w * state.rho[cols], minlength=nu) / sw
        return r_f, u_f, p_f, rho_f

    def virtual_fields(self, ws, state, model: FluidModel, t, mass_of_owner):
        """Extrapolated (p, rho, u, volume) of every virtual particle."""
        r_fu, u_fu, p_fu, rho_fu = self.extrapolation_sums(ws, state)
        idx = ws.uniq_index
        r_f, u_f, p_f, rho_f = r_fu[idx], u_fu[idx], p_fu[idx], rho_fu[idx]

        u_c, a_c = self._kinematics(ws)
        b = model.body_at(t, ws.point.shape[1])
        grad_p = rho_f[:, None] * (b[None, :] - a_c)

        den = np.einsum("ij,ij->i", ws.point - r_f, ws.e_r)
        bad = np.abs(den) < 1e-10 * ws._h
        if np.any(bad):
            log.warning("%d degenerate directional-derivative denominators",
                        int(bad.sum()))
        du = np.zeros_like(u_c)
        du[~bad] = (u_c[~bad] - u_f[~bad]) / den[~bad, None]

        rel = ws.virt_pos - r_f[:, None, :]
        p_k = p_f[:, None] + np.einsum("pkd,pd->pk", rel, grad_p)
        rho_k = p_k / model.sound_speed ** 2 + model.rho0
        if np.any(rho_k[ws.virt_mask] <= 0.0):
            raise NonphysicalStateError(
                "extrapolated virtual-particle density is non-positive; "
                "the run has likely blown up")
        s = np.einsum("pkd,pd->pk", rel, ws.e_r)
        u_k = u_f[:, None, :] + s[..., None] * du[:, None, :]
        vol_k = mass_of_owner[:, None] / rho_k
        return p_k, rho_k, u_k, vol_k

    def dynamics_pass(self, ws, state: ParticleState, model: FluidModel,
                      kernel: SmoothingKernel, t):
        """Virtual-particle forces on the fluid and their interface reaction.

        Returns per-particle acceleration and transport-velocity acceleration
        arrays plus an :class:`InterfaceForces` report.
        """
        from .kernels import quintic_derivative

        own = ws.owner
        m_i = state.m[own]
        p_k, rho_k, u_k, vol_k = self.virtual_fields(ws, state, model, t, m_i)

        dxv = state.pos[own][:, None, :] - ws.virt_pos
        d = np.where(ws.virt_mask, ws.virt_dist, 1.0)
        dwdr = quintic_derivative(ws.virt_dist, kernel.h, kernel.dim)
        dwdr = np.where(ws.virt_mask, dwdr, 0.0)
        e = dxv / d[..., None]

        rho_i = state.rho[own]
        vol_i = (m_i / rho_i)
        v2 = vol_i[:, None] ** 2 + vol_k ** 2
        p_t = ((rho_k * state.p[own][:, None] + rho_i[:, None] * p_k)
               / (rho_i[:, None] + rho_k))
        inv_m = 1.0 / m_i

        a_ik = (-(v2 * p_t * dwdr) * inv_m[:, None])[..., None] * e
        visc = (v2 * state.eta[own][:, None] * dwdr / d * inv_m[:, None])
        a_ik += visc[..., None] * (state.vel[own][:, None, :] - u_k)
        adv_ik = (-(model.background_pressure * v2 * dwdr)
                  * inv_m[:, None])[..., None] * e

        acc = np.zeros_like(state.pos)
        acc_adv = np.zeros_like(state.pos)
        a_sum = a_ik.sum(axis=1)
        adv_sum = adv_ik.sum(axis=1)
        for ax in range(state.dim):
            np.add.at(acc[:, ax], own, a_sum[:, ax])
            np.add.at(acc_adv[:, ax], own, adv_sum[:, ax])

        point_forces = -m_i[:, None] * a_sum
        forces = InterfaceForces(self.patches, ws, point_forces)
        return acc, acc_adv, forces

    def virtual_support(self, points, state: ParticleState, grid,
                        kernel: SmoothingKernel, model: FluidModel, t, mass):
        """Virtual-particle support for arbitrary probe points.

        Returns ``(positions, p, u, volume, owner)`` of the virtual particles
        each probe point would see, for boundary-corrected interpolation.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        ws = self.geometry_pass(state, grid, kernel, positions=pts)
        if ws is None:
            empty = np.empty((0, pts.shape[1]))
            return empty, np.empty(0), empty.copy(), np.empty(0), \
                np.empty(0, dtype=np.int64)
        m_i = np.full(ws.n_proj, mass)
        p_k, rho_k, u_k, vol_k = self.virtual_fields(ws, state, model, t, m_i)
        sel = ws.virt_mask.ravel()
        flat_owner = np.repeat(ws.owner, ws.virt_pos.shape[1])
        return (ws.virt_pos.reshape(-1, pts.shape[1])[sel], p_k.ravel()[sel],
                u_k.reshape(-1, pts.shape[1])[sel], vol_k.ravel()[sel],
                flat_owner[sel])


class InterfaceForces:
    """Reaction forces of one evaluation, by patch."""

    def __init__(self, patches, ws, point_forces):
        self.patches = patches
        self.point_forces = point_forces
        self._ws = ws

    @classmethod
    def empty(cls, patches, dim):
        return cls(patches, None, np.empty((0, dim)))

    def nodal(self, patch_index):
        """Nodal force vector on a mesh patch (shape-function distribution)."""
        patch = self.patches[patch_index]
        if not isinstance(patch, InterfaceMesh):
            raise TypeError("nodal forces require a mesh patch")
        if self._ws is None:
            return np.zeros((patch.n_nodes, patch.ref_nodes.shape[1]))
        sel = (self._ws.patch == patch_index) & (self._ws.elem >= 0)
        return assemble_nodal_forces(patch, self._ws.elem[sel],
                                     self._ws.xi[sel], self.point_forces[sel])

    def total(self, patch_index):
        """Resultant force on one patch."""
        if self._ws is None:
            return self.point_forces.sum(axis=0)
        sel = self._ws.patch == patch_index
        return self.point_forces[sel].sum(axis=0)

    def total_all(self):
        return self.point_forces.sum(axis=0)
