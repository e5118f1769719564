"""Dirichlet-Neumann partitioned fixed-point coupling.

Per time step: predict the interface displacements, then iterate { one fluid
step against the prescribed interface motion -> interface forces -> one
structural solve from the converged previous state -> new interface
displacements } until the displacement increment criterion

    |delta d| / (dt sqrt(n_dof)) < eps

is met (strict).  The fluid state is restored to the step-start snapshot
before every re-evaluation, so fixed-point iterations never accumulate fluid
time integration.  A fixed relaxation factor may be applied to the interface
displacements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CouplingDivergenceError
from .interface import InterfaceMesh
from .solid import FeModel, GeneralizedAlphaSolver, RigidBody


def check_convergence(delta_d, dt, n_dof, eps):
    """Interface-displacement increment criterion (strictly below eps)."""
    if dt <= 0.0 or n_dof < 1:
        raise ValueError("dt must be positive and n_dof >= 1")
    norm = float(np.linalg.norm(np.asarray(delta_d, dtype=np.float64)))
    return norm / (dt * math.sqrt(n_dof)) < eps


def predict_and_relax(d_converged, d_new=None, omega=1.0):
    """Constant predictor / fixed under-relaxation of the interface iterate.

    With only ``d_converged`` given, returns the predictor (the converged
    displacements of the previous step).  Otherwise returns
    ``d_old + omega (d_new - d_old)``.
    """
    if not 0.0 < omega <= 1.0:
        raise ValueError("relaxation factor must lie in (0, 1]")
    d_converged = np.asarray(d_converged, dtype=np.float64)
    if d_new is None:
        return d_converged.copy()
    return d_converged + omega * (np.asarray(d_new) - d_converged)


class FeAdapter:
    """Binds an interface mesh to (a trace of) a finite-element model.

    ``node_map[k]`` is the solid node carrying interface node ``k``; the
    interface mesh is a conforming clone of the structural surface there.
    """

    def __init__(self, model: FeModel, mesh: InterfaceMesh, node_map,
                 rho_inf=0.8, f_ext_base=None, newton_max_iter=25):
        self.model = model
        self.mesh = mesh
        self.node_map = np.asarray(node_map, dtype=np.int64)
        self.solver = GeneralizedAlphaSolver(model, rho_inf=rho_inf,
                                             max_iter=newton_max_iter)
        dofs = np.empty(2 * len(self.node_map), dtype=np.int64)
        dofs[0::2] = 2 * self.node_map
        dofs[1::2] = 2 * self.node_map + 1
        self.iface_dofs = dofs
        self.d = np.zeros(model.ndof)
        self.v = np.zeros(model.ndof)
        self.a = np.zeros(model.ndof)
        self.f_ext_base = model.external_body_force() if f_ext_base is None \
            else np.asarray(f_ext_base, dtype=np.float64)
        self.f_old = self.f_ext_base.copy()
        self._candidate = None
        self.last_newton_iters = 0

    def initialize(self):
        self.a = self.solver.initial_acceleration(self.d, self.v, self.f_old)

    @property
    def n_dof(self):
        return len(self.iface_dofs)

    def trace(self, vec):
        return vec[self.iface_dofs]

    def predictor(self):
        return self.trace(self.d)

    def apply_mesh(self, d_fs, dt, first_iterate):
        """Prescribe mesh kinematics for the fluid from an interface iterate.

        The first iterate (the constant predictor) keeps the converged
        velocities and accelerations; later iterates use Newmark-consistent
        rates.
        """
        dn, vn, an = self.trace(self.d), self.trace(self.v), self.trace(self.a)
        if first_iterate:
            v1, a1 = vn, an
        else:
            beta, gamma = self.solver.beta, self.solver.gamma
            a1 = (d_fs - dn - dt * vn) / (beta * dt * dt) \
                - (0.5 - beta) / beta * an
            v1 = vn + dt * ((1.0 - gamma) * an + gamma * a1)
        n = len(self.node_map)
        self.mesh.set_kinematics(d_fs.reshape(n, 2), v1.reshape(n, 2),
                                 a1.reshape(n, 2))

    def solve(self, nodal_forces, dt):
        """One structural solve from the converged state; not committed."""
        f_ext = self.f_ext_base.copy()
        np.add.at(f_ext, self.iface_dofs, nodal_forces.ravel())
        d, v, a = self.solver.step(self.d, self.v, self.a, f_ext, self.f_old,
                                   dt)
        self._candidate = (d, v, a, f_ext)
        return self.trace(d)

    def commit(self):
        self.d, self.v, self.a, self.f_old = self._candidate
        self._candidate = None


class RigidAdapter:
    """Binds an interface mesh to a rigid body (Newton-Euler update)."""

    def __init__(self, body: RigidBody, mesh: InterfaceMesh):
        self.body = body
        self.mesh = mesh
        self.ref = mesh.ref_nodes.copy()
        self._candidate = None
        self._mesh_state_body = body

    def initialize(self):
        pass

    @property
    def n_dof(self):
        return 2 * len(self.ref)

    def predictor(self):
        pos, _, _ = self.body.node_kinematics(self.ref)
        return (pos - self.ref).ravel()

    def apply_mesh(self, d_fs, dt, first_iterate):
        body = self._mesh_state_body if not first_iterate else self.body
        pos, vel, acc = body.node_kinematics(self.ref)
        n = len(self.ref)
        self.mesh.set_kinematics(d_fs.reshape(n, 2), vel, acc)

    def solve(self, nodal_forces, dt):
        import copy

        force = nodal_forces.sum(axis=0)
        x = self.mesh.nodes()
        rel = x - self.body.pos[None, :]
        torque = float(np.sum(rel[:, 0] * nodal_forces[:, 1]
                              - rel[:, 1] * nodal_forces[:, 0]))
        cand = copy.deepcopy(self.body)
        cand.step(force, torque, dt)
        self._candidate = cand
        self._mesh_state_body = cand
        pos, _, _ = cand.node_kinematics(self.ref)
        return (pos - self.ref).ravel()

    def commit(self):
        self.body.__dict__.update(self._candidate.__dict__)
        self._candidate = None
        self._mesh_state_body = self.body


@dataclass
class CouplingBinding:
    patch_index: int
    adapter: object


class PartitionedCoupler:
    """Iterative fixed-point driver for one fluid solver and its structures."""

    def __init__(self, fluid_solver, bindings, eps=1e-8, omega=1.0,
                 max_iter=100):
        self.fluid = fluid_solver
        self.bindings = list(bindings)
        self.eps = eps
        self.omega = omega
        self.max_iter = max_iter
        self.iteration_counts = []
        self._splits = np.cumsum([b.adapter.n_dof for b in self.bindings])[:-1]

    def _concat(self, parts):
        return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts])

    def step(self, dt):
        """Advance the coupled system by one synchronous time step."""
        if not self.bindings:
            self.fluid.step(dt)
            self.iteration_counts.append(1)
            return 1

        snap = self.fluid.snapshot()
        d_old = self._concat([b.adapter.predictor() for b in self.bindings])
        n_dof = len(d_old)
        history = []
        for it in range(1, self.max_iter + 1):
            self.fluid.restore(snap)
            for part, b in zip(np.split(d_old, self._splits), self.bindings):
                b.adapter.apply_mesh(part, dt, first_iterate=(it == 1))
            self.fluid.step(dt)
            forces = self.fluid.interface_forces
            d_new = self._concat([
                b.adapter.solve(forces.nodal(b.patch_index), dt)
                for b in self.bindings])
            delta = d_new - d_old
            history.append(float(np.linalg.norm(delta))
                           / (dt * math.sqrt(n_dof)))
            if check_convergence(delta, dt, n_dof, self.eps):
                break
            d_old = predict_and_relax(d_old, d_new, self.omega)
        else:
            raise CouplingDivergenceError(
                f"no convergence in {self.max_iter} coupling iterations "
                f"(residuals {history[:3]} ... {history[-3:]})", history)
        for b in self.bindings:
            b.adapter.commit()
        self.iteration_counts.append(it)
        return it
