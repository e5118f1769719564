"""Nonlinear finite-element structural dynamics.

Total-Lagrangian 4-node bilinear quads in 2D plane strain with a Saint
Venant-Kirchhoff material, integrated in time by the generalized-alpha
scheme (Chung-Hulbert parameters from the spectral radius) and solved with
Newton-Raphson.  A true rigid-body mode is available for quasi-rigid parts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvertedElementError, NewtonDivergenceError

# 2x2 Gauss quadrature on [-1, 1]^2
_GP = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]) / math.sqrt(3.0)
_GW = np.ones(4)


@dataclass(frozen=True)
class SvkMaterial:
    """Saint Venant-Kirchhoff material: S = lambda tr(E) I + 2 mu E."""

    youngs: float
    poisson: float
    density: float

    def __post_init__(self):
        if self.youngs <= 0.0:
            raise ValueError("Young's modulus must be positive")
        if not -1.0 < self.poisson < 0.5:
            raise ValueError("Poisson ratio must lie in (-1, 0.5)")

    @property
    def lame_lambda(self) -> float:
        return (self.youngs * self.poisson
                / ((1.0 + self.poisson) * (1.0 - 2.0 * self.poisson)))

    @property
    def shear_mu(self) -> float:
        return self.youngs / (2.0 * (1.0 + self.poisson))


def svk_stress(E, material: SvkMaterial):
    """Second Piola-Kirchhoff stress of a Green-Lagrange strain tensor."""
    E = np.asarray(E, dtype=np.float64)
    lam, mu = material.lame_lambda, material.shear_mu
    return lam * np.trace(E) * np.eye(len(E)) + 2.0 * mu * E


def strain_energy_density(E, material: SvkMaterial):
    """Psi(E) = lambda/2 tr(E)^2 + mu tr(E^2)."""
    E = np.asarray(E, dtype=np.float64)
    lam, mu = material.lame_lambda, material.shear_mu
    return 0.5 * lam * np.trace(E) ** 2 + mu * np.trace(E @ E)


def _shape_gradients(xi, eta):
    # dN/dxi for the bilinear quad, nodes CCW from (-1,-1)
    return 0.25 * np.array([
        [-(1 - eta), -(1 - xi)],
        [(1 - eta), -(1 + xi)],
        [(1 + eta), (1 + xi)],
        [-(1 + eta), (1 - xi)],
    ])


def shape_values(xi, eta):
    return 0.25 * np.array([(1 - xi) * (1 - eta), (1 + xi) * (1 - eta),
                            (1 + xi) * (1 + eta), (1 - xi) * (1 + eta)])


class QuadMesh:
    """Reference configuration: nodes (M, 2) and CCW element connectivity."""

    def __init__(self, nodes, elems):
        self.nodes = np.atleast_2d(np.asarray(nodes, dtype=np.float64))
        self.elems = np.atleast_2d(np.asarray(elems, dtype=np.int64))

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elems(self):
        return len(self.elems)

    @classmethod
    def rectangle(cls, lo, hi, nx, ny):
        xs = np.linspace(lo[0], hi[0], nx + 1)
        ys = np.linspace(lo[1], hi[1], ny + 1)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        nodes = np.stack([X.ravel(), Y.ravel()], axis=-1)

        def nid(i, j):
            return i * (ny + 1) + j

        elems = [[nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)]
                 for i in range(nx) for j in range(ny)]
        return cls(nodes, np.array(elems))

    @classmethod
    def annulus(cls, center, r_in, r_out, n_theta, n_r):
        radii = np.linspace(r_in, r_out, n_r + 1)
        theta = np.linspace(0.0, 2.0 * math.pi, n_theta, endpoint=False)
        nodes = []
        for r in radii:
            for th in theta:
                nodes.append([center[0] + r * math.cos(th),
                              center[1] + r * math.sin(th)])

        def nid(ir, it):
            return ir * n_theta + (it % n_theta)

        elems = [[nid(ir, it), nid(ir, it + 1), nid(ir + 1, it + 1), nid(ir + 1, it)]
                 for ir in range(n_r) for it in range(n_theta)]
        return cls(np.array(nodes), np.array(elems))


def deformation_measures(mesh: QuadMesh, elem, displacements, gauss_point):
    """Deformation gradient and Green-Lagrange strain at one Gauss point.

    ``F = I + grad0(d)``; raises :class:`InvertedElementError` when the
    element turns inside out (det F <= 0).
    """
    conn = mesh.elems[elem]
    X = mesh.nodes[conn]
    d = np.asarray(displacements, dtype=np.float64).reshape(-1, 2)[conn]
    dN = _shape_gradients(*gauss_point)
    J = X.T @ dN
    detJ = np.linalg.det(J)
    if detJ <= 0.0:
        raise InvertedElementError(f"element {elem} reference Jacobian <= 0")
    dNdX = dN @ np.linalg.inv(J)
    F = np.eye(2) + d.T @ dNdX
    if np.linalg.det(F) <= 0.0:
        raise InvertedElementError(f"element {elem} inverted (det F <= 0)")
    E = 0.5 * (F.T @ F - np.eye(2))
    return F, E


class FeModel:
    """Assembled plane-strain model with Dirichlet data and external loads.

    Displacements are stored flattened, ``[x0, y0, x1, y1, ...]``.
    """

    def __init__(self, mesh: QuadMesh, material: SvkMaterial, dirichlet=(),
                 body_force=None, lumped_mass=False):
        self.mesh = mesh
        self.material = material
        self.ndof = 2 * mesh.n_nodes
        fixed = np.zeros(self.ndof, dtype=bool)
        for dof in dirichlet:
            fixed[dof] = True
        self.fixed = fixed
        self.free = ~fixed
        self.body_force = np.zeros(2) if body_force is None \
            else np.asarray(body_force, dtype=np.float64)
        self.lumped_mass = lumped_mass
        self._precompute()
        self._mass = None

    def _precompute(self):
        mesh = self.mesh
        X = mesh.nodes[mesh.elems]                     # (E, 4, 2)
        self._dNdX = np.empty((mesh.n_elems, 4, 4, 2))  # (E, gp, node, comp)
        self._wdet = np.empty((mesh.n_elems, 4))
        for g, (gp, gw) in enumerate(zip(_GP, _GW)):
            dN = _shape_gradients(*gp)                 # (4, 2)
            J = np.einsum("enk,nj->ekj", X, dN)        # (E, 2, 2)
            detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
            if np.any(detJ <= 0.0):
                raise InvertedElementError("non-positive reference Jacobian")
            inv = np.empty_like(J)
            inv[:, 0, 0] = J[:, 1, 1]
            inv[:, 1, 1] = J[:, 0, 0]
            inv[:, 0, 1] = -J[:, 0, 1]
            inv[:, 1, 0] = -J[:, 1, 0]
            inv /= detJ[:, None, None]
            self._dNdX[:, g] = np.einsum("nj,ejk->enk", dN, inv)
            self._wdet[:, g] = gw * detJ
        conn = mesh.elems
        edof = np.empty((mesh.n_elems, 8), dtype=np.int64)
        edof[:, 0::2] = 2 * conn
        edof[:, 1::2] = 2 * conn + 1
        self._edof = edof
        self._Krows = np.repeat(edof, 8, axis=1).ravel()
        self._Kcols = np.tile(edof, (1, 8)).ravel()

    # -- element fields ------------------------------------------------------

    def _kinematics(self, d):
        de = d.reshape(-1, 2)[self.mesh.elems]          # (E, 4, 2)
        F = np.einsum("eni,egnj->egij", de, self._dNdX)
        F[:, :, 0, 0] += 1.0
        F[:, :, 1, 1] += 1.0
        detF = (F[:, :, 0, 0] * F[:, :, 1, 1] - F[:, :, 0, 1] * F[:, :, 1, 0])
        if np.any(detF <= 0.0):
            raise InvertedElementError("element inverted during solve")
        E = 0.5 * (np.einsum("egki,egkj->egij", F, F))
        E[:, :, 0, 0] -= 0.5
        E[:, :, 1, 1] -= 0.5
        return F, E

    def strain_energy(self, d):
        _, E = self._kinematics(d)
        lam, mu = self.material.lame_lambda, self.material.shear_mu
        trE = E[:, :, 0, 0] + E[:, :, 1, 1]
        trE2 = np.einsum("egij,egji->eg", E, E)
        psi = 0.5 * lam * trE ** 2 + mu * trE2
        return float(np.sum(psi * self._wdet))

    def internal_force_and_tangent(self, d, need_tangent=True):
        """Assembled internal force vector and (optionally) tangent matrix."""
        lam, mu = self.material.lame_lambda, self.material.shear_mu
        F, E = self._kinematics(d)
        trE = E[:, :, 0, 0] + E[:, :, 1, 1]
        S = 2.0 * mu * E
        S[:, :, 0, 0] += lam * trE
        S[:, :, 1, 1] += lam * trE
        P = np.einsum("egij,egjk->egik", F, S)
        fe = np.einsum("egik,egnk,eg->eni", P, self._dNdX, self._wdet)
        f_int = np.zeros(self.ndof)
        np.add.at(f_int, self._edof.reshape(-1, 4, 2)[:, :, 0], fe[:, :, 0])
        np.add.at(f_int, self._edof.reshape(-1, 4, 2)[:, :, 1], fe[:, :, 1])
        if not need_tangent:
            return f_int, None

        # material part: dNdX_aJ [lam F_IJ F_KL + mu F_IL F_KJ
        #                         + mu (F F^T)_IK delta_JL] dNdX_bL
        B = np.einsum("egnj,egij->egni", self._dNdX, F)   # (E,g,node,i)
        kmat = (lam * np.einsum("egai,egbk,eg->eaibk", B, B, self._wdet)
                + mu * np.einsum("egak,egbi,eg->eaibk", B, B, self._wdet))
        G = np.einsum("egaj,egbj->egab", self._dNdX, self._dNdX)
        FFt = np.einsum("egij,egkj->egik", F, F)
        kmat += mu * np.einsum("egab,egik,eg->eaibk", G, FFt, self._wdet)
        # geometric part: delta_ik dN_aJ S_JL dN_bL
        geo = np.einsum("egaj,egjl,egbl,eg->eab", self._dNdX, S, self._dNdX,
                        self._wdet)
        kmat[:, :, 0, :, 0] += geo
        kmat[:, :, 1, :, 1] += geo
        K = sp.coo_matrix(
            (kmat.reshape(-1, 8, 8).ravel(), (self._Krows, self._Kcols)),
            shape=(self.ndof, self.ndof)).tocsr()
        return f_int, K

    def mass_matrix(self):
        """Consistent (or lumped) mass matrix, reference density."""
        if self._mass is not None:
            return self._mass
        rho = self.material.density
        me = np.zeros((self.mesh.n_elems, 4, 4))
        for g, gp in enumerate(_GP):
            N = shape_values(*gp)
            me += rho * self._wdet[:, g, None, None] * np.outer(N, N)[None]
        if self.lumped_mass:
            me = np.eye(4)[None] * me.sum(axis=2)[:, :, None]
        rows, cols, vals = [], [], []
        conn = self.mesh.elems
        for i in range(4):
            for j in range(4):
                for c in range(2):
                    rows.append(2 * conn[:, i] + c)
                    cols.append(2 * conn[:, j] + c)
                    vals.append(me[:, i, j])
        M = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.ndof, self.ndof)).tocsr()
        self._mass = M
        return M

    def external_body_force(self):
        """Consistent nodal load of the constant body force (per unit mass)."""
        rho = self.material.density
        f = np.zeros(self.ndof)
        for g, gp in enumerate(_GP):
            N = shape_values(*gp)
            w = rho * self._wdet[:, g]
            for a in range(4):
                np.add.at(f, self._edof[:, 2 * a], w * N[a] * self.body_force[0])
                np.add.at(f, self._edof[:, 2 * a + 1], w * N[a] * self.body_force[1])
        return f


def newton_solve(residual_and_tangent, x0, tol, max_iter=25):
    """Newton-Raphson on R(x) = 0 with an exact tangent.

    ``residual_and_tangent(x) -> (R, K)`` with sparse or dense ``K``.
    Returns ``(x, iterations, residual_norms)``; an already-converged guess
    returns after the initial check.  Raises :class:`NewtonDivergenceError`
    with the residual trace on failure.
    """
    x = np.array(x0, dtype=np.float64)
    history = []
    for it in range(max_iter + 1):
        r, K = residual_and_tangent(x)
        norm = float(np.linalg.norm(r))
        history.append(norm)
        if not math.isfinite(norm):
            raise NewtonDivergenceError(
                f"non-finite residual at iteration {it}", history)
        if norm < tol:
            return x, it, history
        if it == max_iter:
            break
        if sp.issparse(K):
            dx = spla.spsolve(K.tocsc(), -r)
        else:
            dx = np.linalg.solve(K, -r)
        x = x + dx
    raise NewtonDivergenceError(
        f"Newton did not reach tol={tol:g} in {max_iter} iterations "
        f"(last residual {history[-1]:g})", history)


def alpha_parameters(rho_inf):
    """Chung-Hulbert generalized-alpha parameters from the spectral radius."""
    if not 0.0 <= rho_inf <= 1.0:
        raise ValueError("spectral radius must lie in [0, 1]")
    am = (2.0 * rho_inf - 1.0) / (rho_inf + 1.0)
    af = rho_inf / (rho_inf + 1.0)
    beta = 0.25 * (1.0 - am + af) ** 2
    gamma = 0.5 - am + af
    return am, af, beta, gamma


class GeneralizedAlphaSolver:
    """Implicit structural time stepping with Newton-Raphson.

    Works on any model exposing ``ndof``, ``free``/``fixed`` masks,
    ``mass_matrix()`` and ``internal_force_and_tangent(d)``.  Newton
    tolerance is relative to the first residual norm of the step with an
    absolute floor.
    """

    def __init__(self, model, rho_inf=0.8, rel_tol=1e-8, abs_floor=1e-12,
                 max_iter=25):
        self.model = model
        self.rho_inf = rho_inf
        self.alpha_m, self.alpha_f, self.beta, self.gamma = \
            alpha_parameters(rho_inf)
        self.rel_tol = rel_tol
        self.abs_floor = abs_floor
        self.max_iter = max_iter

    def initial_acceleration(self, d, v, f_ext):
        """a0 = M^-1 (f_ext - f_int(d)) on the free dofs."""
        M = self.model.mass_matrix()
        f_int, _ = self.model.internal_force_and_tangent(d, need_tangent=False)
        a = np.zeros_like(d)
        fr = self.model.free
        rhs = (f_ext - f_int)[fr]
        a[fr] = spla.spsolve(M[fr][:, fr].tocsc(), rhs)
        return a

    def step(self, d_n, v_n, a_n, f_ext_new, f_ext_old, dt, prescribed=None):
        """Advance one time step; returns (d, v, a) at n+1."""
        am, af, beta, gamma = self.alpha_m, self.alpha_f, self.beta, self.gamma
        model = self.model
        M = model.mass_matrix()
        fr = model.free
        fx = model.fixed

        d_new = d_n.copy()
        if prescribed is not None:
            d_new[fx] = prescribed

        f_mid = (1.0 - af) * f_ext_new + af * f_ext_old

        def newmark_acc(d):
            return (d - d_n - dt * v_n) / (beta * dt * dt) \
                - (0.5 - beta) / beta * a_n

        def res_tan(d_free):
            d = d_new.copy()
            d[fr] = d_free
            a1 = newmark_acc(d)
            a_mid = (1.0 - am) * a1 + am * a_n
            d_mid = (1.0 - af) * d + af * d_n
            f_int, K = model.internal_force_and_tangent(d_mid)
            r = M @ a_mid + f_int - f_mid
            Keff = ((1.0 - am) / (beta * dt * dt) * M
                    + (1.0 - af) * K)
            return r[fr], Keff[fr][:, fr]

        r0, _ = res_tan(d_new[fr])
        tol = max(self.rel_tol * float(np.linalg.norm(r0)), self.abs_floor)
        try:
            d_free, _, _ = newton_solve(res_tan, d_new[fr], tol, self.max_iter)
        except NewtonDivergenceError as exc:
            raise NewtonDivergenceError(
                f"structural step failed: {exc}", exc.residual_history) from exc
        d_new[fr] = d_free
        a_new = newmark_acc(d_new)
        v_new = v_n + dt * ((1.0 - gamma) * a_n + gamma * a_new)
        if prescribed is not None:
            # fixed dofs follow their prescribed motion exactly
            a_new[fx] = 0.0
            v_new[fx] = 0.0
        return d_new, v_new, a_new


def solve_static(model, f_ext, d0=None, rel_tol=1e-10, max_iter=50):
    """Static equilibrium f_int(d) = f_ext (testing / initialization aid)."""
    d = np.zeros(model.ndof) if d0 is None else np.array(d0, dtype=np.float64)
    fr = model.free

    def res_tan(d_free):
        dd = d.copy()
        dd[fr] = d_free
        f_int, K = model.internal_force_and_tangent(dd)
        return (f_int - f_ext)[fr], K[fr][:, fr]

    r0, _ = res_tan(d[fr])
    tol = max(rel_tol * float(np.linalg.norm(r0)), 1e-14)
    d_free, iters, hist = newton_solve(res_tan, d[fr], tol, max_iter)
    d[fr] = d_free
    return d, iters, hist


class RigidBody:
    """Planar rigid body advanced by Newton-Euler with generalized-alpha.

    Tracks centroid position/velocity/acceleration and orientation; attached
    surface nodes follow rigidly.
    """

    def __init__(self, mass, inertia, centroid, rho_inf=0.8):
        self.mass = float(mass)
        self.inertia = float(inertia)
        self.centroid_ref = np.asarray(centroid, dtype=np.float64)
        self.pos = self.centroid_ref.copy()
        self.angle = 0.0
        self.vel = np.zeros(2)
        self.omega = 0.0
        self.acc = np.zeros(2)
        self.alpha_rot = 0.0
        self.am, self.af, self.beta, self.gamma = alpha_parameters(rho_inf)
        self._f_old = np.zeros(3)

    def initialize_forces(self, force, torque):
        """Consistent start: acceleration from the initial loads."""
        self.acc = np.asarray(force, dtype=np.float64) / self.mass
        self.alpha_rot = float(torque) / self.inertia
        self._f_old = np.array([force[0], force[1], torque], dtype=np.float64)

    def _gen_alpha_1d(self, d, v, a, f_new, f_old, m, dt):
        am, af, beta, gamma = self.am, self.af, self.beta, self.gamma
        f_mid = (1.0 - af) * f_new + af * f_old
        a_new = (f_mid / m - am * a) / (1.0 - am)
        d_new = d + dt * v + dt * dt * ((0.5 - beta) * a + beta * a_new)
        v_new = v + dt * ((1.0 - gamma) * a + gamma * a_new)
        return d_new, v_new, a_new

    def step(self, force, torque, dt):
        """Advance centroid and orientation under a resultant force/torque."""
        f_new = np.array([force[0], force[1], torque], dtype=np.float64)
        state = []
        for k, m in ((0, self.mass), (1, self.mass)):
            state.append(self._gen_alpha_1d(
                self.pos[k], self.vel[k], self.acc[k], f_new[k],
                self._f_old[k], m, dt))
        rot = self._gen_alpha_1d(self.angle, self.omega, self.alpha_rot,
                                 torque, self._f_old[2], self.inertia, dt)
        self.pos = np.array([state[0][0], state[1][0]])
        self.vel = np.array([state[0][1], state[1][1]])
        self.acc = np.array([state[0][2], state[1][2]])
        self.angle, self.omega, self.alpha_rot = rot
        self._f_old = f_new

    def node_kinematics(self, ref_points):
        """(positions, velocities, accelerations) of rigidly attached points."""
        ref = np.atleast_2d(np.asarray(ref_points, dtype=np.float64))
        rel0 = ref - self.centroid_ref[None, :]
        c, s = math.cos(self.angle), math.sin(self.angle)
        R = np.array([[c, -s], [s, c]])
        rel = rel0 @ R.T
        pos = self.pos[None, :] + rel
        perp = np.stack([-rel[:, 1], rel[:, 0]], axis=-1)
        vel = self.vel[None, :] + self.omega * perp
        acc = (self.acc[None, :] + self.alpha_rot * perp
               - self.omega ** 2 * rel)
        return pos, vel, acc


def rigid_body_mode(body: RigidBody, force, torque, dt):
    """Newton-Euler update of a rigid structural part."""
    body.step(np.asarray(force, dtype=np.float64), float(torque), dt)
    return body
