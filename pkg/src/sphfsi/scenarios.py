"""Built-in benchmark scenarios.

Each preset reproduces its published geometry, material and discretization
parameters; the particle spacing scales with ``[scenario] resolution_scale``
or an explicit ``[fluid] dx``.
"""

from __future__ import annotations

import math

import numpy as np

from . import kinds
from .boundaries import OpenBoundary, wall_band
from .config import ScenarioConfig, parse_text
from .coupling import CouplingBinding, FeAdapter, PartitionedCoupler, RigidAdapter
from .driver import Simulation
from .fluid import FluidModel, FluidSolver, ParticleState, lattice, step_limit
from .interface import AnalyticCircle, InterfaceMesh, InterfaceSystem
from .kernels import SmoothingKernel
from .neighbors import Domain
from .probes import (angular_velocity_profile, line_profile, probe_drag_lift,
                     probe_enclosed_volume)
from .solid import FeModel, QuadMesh, RigidBody, SvkMaterial


def cosine_ramp(t, t_ramp):
    """Smooth start 1/2 (1 - cos(pi t / t_ramp)) capped at one."""
    if t >= t_ramp:
        return 1.0
    return 0.5 * (1.0 - math.cos(math.pi * t / t_ramp))


def circle_mesh(center, radius, n_elems, start=0.0, sweep=-2.0 * math.pi):
    """Circle (or arc) of line elements; clockwise sweep puts the fluid
    outside under the left-of-element convention."""
    closed = abs(abs(sweep) - 2.0 * math.pi) < 1e-12
    n_nodes = n_elems if closed else n_elems + 1
    theta = start + sweep * np.arange(n_nodes) / n_elems
    nodes = np.stack([center[0] + radius * np.cos(theta),
                      center[1] + radius * np.sin(theta)], axis=-1)
    elems = [[k, (k + 1) % n_nodes] for k in range(n_elems)]
    return InterfaceMesh(nodes, elems)


def _model(cfg, **defaults):
    get = lambda key, d: cfg.get("fluid", key, d)
    body = get("body_force", defaults.get("body_force"))
    return FluidModel(
        rho0=get("rho0", defaults.get("rho0", 1.0)),
        sound_speed=get("sound_speed", defaults["sound_speed"]),
        viscosity=get("viscosity", defaults.get("viscosity", 0.0)),
        background_pressure=get("background_pressure",
                                defaults.get("background_pressure", 0.0)),
        body_force=None if body is None else np.asarray(body))


def _dx(cfg, paper_dx):
    dx = cfg.get("fluid", "dx")
    if dx is None:
        dx = paper_dx * cfg.get("scenario", "resolution_scale", 1.0)
    return dx


def _dt(cfg, h, model, u_est, b_max=0.0):
    dt = cfg.get("run", "dt")
    if dt is None:
        dt = step_limit(h, model.sound_speed, u_est, model.viscosity, b_max)
    return dt


def _add_fluid(state, pts, model, dx):
    state.add(kinds.FLUID, pts, mass=model.rho0 * dx ** 2, rho=model.rho0,
              eta=model.dynamic_viscosity)


def _coupling(cfg):
    return (cfg.get("coupling", "tolerance", 1e-8),
            cfg.get("coupling", "relaxation", 1.0),
            cfg.get("coupling", "max_iterations", 100))


# ---------------------------------------------------------------------------


def build_hydrostatic(cfg: ScenarioConfig) -> Simulation:
    """Fluid at rest between two parallel plates under a body force.

    The static pressure profile is linear, p(q) = rho b q, with the
    coordinate q across the gap and p = 0 at the center.
    """
    gap = 0.2
    dx = _dx(cfg, 5.0e-3)
    model = _model(cfg, sound_speed=1.0, viscosity=1.0e-2,
                   background_pressure=1.0, body_force=(0.0, 0.1))
    width = 10 * dx
    kern = SmoothingKernel(h=dx, dim=2)

    state = ParticleState(dim=2)
    _add_fluid(state, lattice([0.0, -gap / 2], [width, gap / 2], dx),
               model, dx)

    # one surface element per plate, spanning beyond the periodic width
    bottom = InterfaceMesh([[-width, -gap / 2], [2 * width, -gap / 2]], [[0, 1]])
    top = InterfaceMesh([[2 * width, gap / 2], [-width, gap / 2]], [[0, 1]])
    system = InterfaceSystem([bottom, top], dx)

    dom = Domain.create([0.0, -gap / 2 - 3 * dx], [width, gap / 2 + 3 * dx],
                        [True, False])
    fluid = FluidSolver(state, model, kern, dom, interface_system=system)
    b = np.linalg.norm(model.body_at(0.0, 2))
    dt = _dt(cfg, dx, model, u_est=0.0, b_max=b)

    def profile_rows(sim):
        ys = -gap / 2 + (np.arange(int(round(gap / dx))) + 0.5) * dx
        pts = np.stack([np.full_like(ys, width / 2), ys], axis=-1)
        p = line_profile(pts, sim.fluid.state.p, sim.fluid.state,
                         sim.fluid._ensure_grid(), kern,
                         interface_system=system, model=model, t=sim.fluid.t)
        return ys, p

    def probe_linf(sim):
        ys, p = profile_rows(sim)
        analytic = model.rho0 * model.body_at(0.0, 2)[1] * ys
        return float(np.max(np.abs(p - analytic)))

    def probe_crossing(sim):
        return float(np.abs(sim.fluid.state.pos[:, 1]).max() - gap / 2)

    def finalize(sim, out):
        if out is None:
            return
        from .output import write_profile_csv
        ys, p = profile_rows(sim)
        analytic = model.rho0 * model.body_at(0.0, 2)[1] * ys
        write_profile_csv(f"{out}/profile_pressure.csv",
                          ["q", "p", "p_analytic"],
                          np.stack([ys, p, analytic], axis=-1))

    sim = Simulation(
        name="hydrostatic", cfg=cfg, fluid=fluid, dt=dt,
        t_end=cfg.get("run", "t_end", 10.0),
        probes={"p_linf_error": probe_linf, "wall_overlap": probe_crossing},
        finalizers=[finalize])
    sim.profile_rows = profile_rows
    return sim


def build_taylor_couette(cfg: ScenarioConfig) -> Simulation:
    """Laminar flow in the gap between two coaxial cylinders.

    Inner cylinder at rest, outer rotating; surfaces are analytic
    parameterizations with exact projection.
    """
    r1, r2 = 1.0, 2.0
    omega2 = 2.0
    dx = _dx(cfg, 0.1)   # half the published resolution by default
    model = _model(cfg, sound_speed=40.0, viscosity=1.0,
                   background_pressure=1600.0)
    kern = SmoothingKernel(h=dx, dim=2)

    def annulus(pts):
        r = np.linalg.norm(pts, axis=1)
        return (r >= r1 + 0.45 * dx) & (r <= r2 - 0.45 * dx)

    state = ParticleState(dim=2)
    _add_fluid(state, lattice([-r2, -r2], [r2, r2], dx, predicate=annulus),
               model, dx)

    inner = AnalyticCircle([0.0, 0.0], r1, omega=0.0, fluid_side="outside")
    outer = AnalyticCircle([0.0, 0.0], r2, omega=omega2, fluid_side="inside")
    system = InterfaceSystem([inner, outer], dx)

    dom = Domain.create([-r2 - 3 * dx, -r2 - 3 * dx],
                        [r2 + 3 * dx, r2 + 3 * dx])
    fluid = FluidSolver(state, model, kern, dom, interface_system=system)
    dt = _dt(cfg, dx, model, u_est=omega2 * r2)

    def probe_ke(sim):
        s = sim.fluid.state
        return float(0.5 * np.sum(s.m * np.einsum("ij,ij->i", s.vel, s.vel)))

    def sample_profile(sim, radii=None):
        if radii is None:
            radii = np.arange(r1 + dx, r2 - 0.5 * dx, 0.5 * dx)
        mean, std = angular_velocity_profile(
            radii, 48, [0.0, 0.0], sim.fluid.state, sim.fluid._ensure_grid(),
            kern)
        return radii, mean, std

    def finalize(sim, out):
        if out is None:
            return
        from .output import write_profile_csv
        radii, mean, std = sample_profile(sim)
        analytic = (8.0 / 3.0) * (radii - 1.0 / radii)
        write_profile_csv(f"{out}/profile_velocity.csv",
                          ["r", "u_theta", "u_theta_std", "u_analytic"],
                          np.stack([radii, mean, std, analytic], axis=-1))

    sim = Simulation(
        name="taylor_couette", cfg=cfg, fluid=fluid, dt=dt,
        t_end=cfg.get("run", "t_end", 2.0),
        probes={"kinetic_energy": probe_ke}, finalizers=[finalize])
    sim.sample_profile = sample_profile
    return sim


def build_isochoric_box(cfg: ScenarioConfig) -> Simulation:
    """Fluid-filled square box deformed isochorically into a rectangle.

    The prescribed wall motion follows F = diag(lambda, 1/lambda) with
    lambda ramping from 1 to 2; fluid volume must be preserved without
    particle leakage.
    """
    edge = 0.1
    dx = _dx(cfg, 5.0e-3)
    model = _model(cfg, sound_speed=1.0, viscosity=1.0e-2,
                   background_pressure=1.0)
    kern = SmoothingKernel(h=dx, dim=2)

    state = ParticleState(dim=2)
    _add_fluid(state, lattice([-edge / 2, -edge / 2], [edge / 2, edge / 2],
                              dx), model, dx)

    # closed counter-clockwise rectangle (fluid inside), element length ~ dx
    n_side = int(round(edge / dx))
    h = edge / 2
    corners = np.array([[-h, -h], [h, -h], [h, h], [-h, h]])
    nodes = []
    for c in range(4):
        a, b = corners[c], corners[(c + 1) % 4]
        for k in range(n_side):
            nodes.append(a + (b - a) * k / n_side)
    nodes = np.array(nodes)
    elems = [[k, (k + 1) % len(nodes)] for k in range(len(nodes))]
    box = InterfaceMesh(nodes, elems)
    system = InterfaceSystem([box], dx)

    def stretch(t):
        if t < 2.5:
            lam, lam_dot = 1.0 + 0.4 * t, 0.4
        else:
            lam, lam_dot = 2.0, 0.0
        return lam, lam_dot

    def motion(t):
        lam, lam_dot = stretch(t)
        X = box.ref_nodes
        disp = np.stack([(lam - 1.0) * X[:, 0],
                         (1.0 / lam - 1.0) * X[:, 1]], axis=-1)
        vel = np.stack([lam_dot * X[:, 0],
                        -lam_dot / lam ** 2 * X[:, 1]], axis=-1)
        acc = np.stack([np.zeros(len(X)),
                        2.0 * lam_dot ** 2 / lam ** 3 * X[:, 1]], axis=-1)
        return disp, vel, acc

    dom = Domain.create([-2.2 * edge, -2.2 * edge], [2.2 * edge, 2.2 * edge])
    fluid = FluidSolver(state, model, kern, dom, interface_system=system)
    dt = _dt(cfg, dx, model, u_est=0.4 * edge)

    def region(sim):
        lam, _ = stretch(sim.fluid.t)
        return lambda pts: ((np.abs(pts[:, 0]) <= lam * h)
                            & (np.abs(pts[:, 1]) <= h / lam))

    def probe_count(sim):
        s = sim.fluid.state
        return int(np.sum(s.mask(kinds.FLUID) & region(sim)(s.pos)))

    def probe_volume(sim):
        return probe_enclosed_volume(sim.fluid.state, region(sim))

    def probe_rho_err(sim):
        s = sim.fluid.state
        return float(abs(s.rho[s.mask(kinds.FLUID)].mean() - model.rho0)
                     / model.rho0)

    return Simulation(
        name="isochoric_box", cfg=cfg, fluid=fluid, dt=dt,
        t_end=cfg.get("run", "t_end", 10.0),
        prescribed_motions=[(box, motion)],
        probes={"enclosed_count": probe_count,
                "enclosed_volume": probe_volume,
                "mean_density_error": probe_rho_err})


def _channel_fluid(cfg, model, dx, length, height, exclude=None):
    kern = SmoothingKernel(h=dx, dim=2)
    depth = 3 * dx
    state = ParticleState(dim=2)
    pred = None
    if exclude is not None:
        pred = lambda pts: ~exclude(pts)
    _add_fluid(state, lattice([0.0, 0.0], [length, height], dx,
                              predicate=pred), model, dx)
    walls = np.vstack([
        wall_band(0.0, axis=1, outward=-1, span_lo=[-depth],
                  span_hi=[length + depth], dx=dx),
        wall_band(height, axis=1, outward=1, span_lo=[-depth],
                  span_hi=[length + depth], dx=dx)])
    state.add(kinds.WALL, walls, mass=model.rho0 * dx ** 2, rho=model.rho0,
              eta=model.dynamic_viscosity)
    dom = Domain.create([-depth - 4 * dx, -depth - 2 * dx],
                        [length + 2 * depth + 4 * dx, height + depth + 2 * dx])
    return state, kern, dom, depth


def build_flow_around_cylinder(cfg: ScenarioConfig) -> Simulation:
    """Channel flow past a fixed rigid cylinder (unsteady at Re = 100).

    The cylinder surface is a 48-element interface mesh; drag and lift
    coefficients are recorded from the assembled interface forces.
    """
    length, height, diameter = 2.2, 0.41, 0.1
    center = np.array([0.2, cfg.get("scenario", "cylinder_y", 0.2)])
    u_max = cfg.get("scenario", "u_max", 1.5)
    u_mean = 2.0 * u_max / 3.0
    dx = _dx(cfg, 2.0e-3)
    model = _model(cfg, sound_speed=12.5, viscosity=1.0e-3,
                   background_pressure=312.5)

    radius = diameter / 2

    def inside_cyl(pts):
        return np.linalg.norm(pts - center[None, :], axis=1) \
            < radius + 0.45 * dx

    state, kern, dom, depth = _channel_fluid(cfg, model, dx, length, height,
                                             exclude=inside_cyl)
    cyl = circle_mesh(center, radius, 48)
    system = InterfaceSystem([cyl], dx)

    def profile(pos, t):
        u = np.zeros_like(pos)
        u[:, 0] = (u_max * 4.0 * pos[:, 1] * (height - pos[:, 1]) / height ** 2
                   * cosine_ramp(t, 2.0))
        return u

    ob = OpenBoundary(axis=0, inflow_plane=0.0, outflow_plane=length,
                      depth=depth, profile=profile, span_lo=[0.0],
                      span_hi=[height], dx=dx, rho0=model.rho0)
    ob.seed(state, mass=model.rho0 * dx ** 2, eta=model.dynamic_viscosity)

    fluid = FluidSolver(state, model, kern, dom, open_boundary=ob,
                        interface_system=system)
    dt = _dt(cfg, dx, model, u_est=u_max)

    def probe_coeffs(sim):
        f = sim.fluid.interface_forces.total(0)
        return probe_drag_lift(f, model.rho0, u_mean, diameter)

    return Simulation(
        name="flow_around_cylinder", cfg=cfg, fluid=fluid, dt=dt,
        t_end=cfg.get("run", "t_end", 8.0),
        probes={"c_drag": lambda sim: probe_coeffs(sim)[0],
                "c_lift": lambda sim: probe_coeffs(sim)[1]})


def build_cylinder_shear_flow(cfg: ScenarioConfig) -> Simulation:
    """Rigid circular particle migrating to the centerline of a shear flow.

    Periodic channel with counter-moving walls; the quasi-rigid structure is
    integrated as a true rigid body by default (set ``[solid] rigid = false``
    for the finite-element variant with a high Young's modulus).
    """
    length, height = 0.1, 0.01
    diameter = 0.0025
    start = np.array([0.002, 0.0075])
    u_wall = 0.01
    dx = _dx(cfg, 1.0e-4)
    model = _model(cfg, sound_speed=0.25, viscosity=5.0e-6,
                   background_pressure=0.0625)
    kern = SmoothingKernel(h=dx, dim=2)
    radius = diameter / 2

    def inside_cyl(pts):
        return np.linalg.norm(pts - start[None, :], axis=1) \
            < radius + 0.45 * dx

    state = ParticleState(dim=2)
    _add_fluid(state, lattice([0.0, 0.0], [length, height], dx,
                              predicate=lambda p: ~inside_cyl(p)), model, dx)
    top = wall_band(height, axis=1, outward=1, span_lo=[0.0],
                    span_hi=[length], dx=dx)
    bot = wall_band(0.0, axis=1, outward=-1, span_lo=[0.0],
                    span_hi=[length], dx=dx)
    state.add(kinds.WALL, top, vel=[u_wall / 2, 0.0],
              mass=model.rho0 * dx ** 2, rho=model.rho0,
              eta=model.dynamic_viscosity)
    state.add(kinds.WALL, bot, vel=[-u_wall / 2, 0.0],
              mass=model.rho0 * dx ** 2, rho=model.rho0,
              eta=model.dynamic_viscosity)

    surface = circle_mesh(start, radius, 48)
    system = InterfaceSystem([surface], dx)
    dom = Domain.create([0.0, -4 * dx], [length, height + 4 * dx],
                        [True, False])
    fluid = FluidSolver(state, model, kern, dom, interface_system=system)
    dt = _dt(cfg, dx, model, u_est=u_wall)

    rho_s = cfg.get("solid", "density", 1.0)
    eps, omega, max_iter = _coupling(cfg)
    rigid = cfg.get("solid", "rigid", True)
    if rigid:
        mass = rho_s * math.pi * radius ** 2
        body = RigidBody(mass=mass, inertia=0.5 * mass * radius ** 2,
                         centroid=start,
                         rho_inf=cfg.get("solid", "rho_inf", 0.8))
        adapter = RigidAdapter(body, surface)
    else:
        mesh = QuadMesh.annulus(start, 0.25 * radius, radius, 48, 3)
        mat = SvkMaterial(youngs=cfg.get("solid", "youngs", 1.0e6),
                          poisson=cfg.get("solid", "poisson", 0.4),
                          density=rho_s)
        fe = FeModel(mesh, mat)
        outer = np.arange(3 * 48, 4 * 48)
        # conforming clone of the outer ring
        surface.ref_nodes[:] = mesh.nodes[outer[::-1]]
        adapter = FeAdapter(fe, surface, outer[::-1],
                            rho_inf=cfg.get("solid", "rho_inf", 0.8))
        adapter.initialize()
    coupler = PartitionedCoupler(fluid, [CouplingBinding(0, adapter)],
                                 eps=eps, omega=omega, max_iter=max_iter)

    def probe_y(sim):
        if rigid:
            return float(body.pos[1])
        return float(start[1] + adapter.d.reshape(-1, 2)[:, 1].mean())

    return Simulation(
        name="cylinder_shear_flow", cfg=cfg, fluid=fluid, dt=dt,
        t_end=cfg.get("run", "t_end", 60.0), coupler=coupler,
        probes={"cylinder_y": probe_y},
        solid_views=[("cylinder", adapter)])


def build_fsi2_beam(cfg: ScenarioConfig) -> Simulation:
    """Flow-induced oscillation of an elastic beam behind a rigid cylinder."""
    length, height, diameter = 2.2, 0.41, 0.1
    center = np.array([0.2, 0.2])
    beam_l, beam_h = 0.35, 0.02
    u_max = cfg.get("scenario", "u_max", 1.5)
    dx = _dx(cfg, 2.0e-3)
    model = _model(cfg, sound_speed=12.5, viscosity=1.0e-3,
                   background_pressure=1250.0)
    radius = diameter / 2
    root_x = center[0] + radius
    y0, y1 = center[1] - beam_h / 2, center[1] + beam_h / 2

    def solidish(pts):
        in_cyl = np.linalg.norm(pts - center[None, :], axis=1) \
            < radius + 0.45 * dx
        in_beam = ((pts[:, 0] > root_x - 0.45 * dx)
                   & (pts[:, 0] < root_x + beam_l + 0.45 * dx)
                   & (pts[:, 1] > y0 - 0.45 * dx)
                   & (pts[:, 1] < y1 + 0.45 * dx))
        return in_cyl | in_beam

    state, kern, dom, depth = _channel_fluid(cfg, model, dx, length, height,
                                             exclude=solidish)

    def profile(pos, t):
        u = np.zeros_like(pos)
        u[:, 0] = (u_max * 4.0 * pos[:, 1] * (height - pos[:, 1]) / height ** 2
                   * cosine_ramp(t, 2.0))
        return u

    ob = OpenBoundary(axis=0, inflow_plane=0.0, outflow_plane=length,
                      depth=depth, profile=profile, span_lo=[0.0],
                      span_hi=[height], dx=dx, rho0=model.rho0)
    ob.seed(state, mass=model.rho0 * dx ** 2, eta=model.dynamic_viscosity)

    # rigid cylinder arc, excluding the wedge where the beam attaches
    half_wedge = math.asin((beam_h / 2) / radius)
    arc = circle_mesh(center, radius, 20, start=-half_wedge,
                      sweep=-(2.0 * math.pi - 2.0 * half_wedge))

    # beam: 35 x 3 plane-strain quads, clamped at the cylinder
    nx, ny = 35, 3
    smesh = QuadMesh.rectangle([root_x, y0], [root_x + beam_l, y1], nx, ny)
    mat = SvkMaterial(youngs=cfg.get("solid", "youngs", 1.4e3),
                      poisson=cfg.get("solid", "poisson", 0.4),
                      density=cfg.get("solid", "density", 10.0))
    clamp = [d for n in range(smesh.n_nodes)
             if abs(smesh.nodes[n, 0] - root_x) < 1e-12
             for d in (2 * n, 2 * n + 1)]
    fe = FeModel(smesh, mat, dirichlet=clamp)

    def node_at(x, y):
        d = np.linalg.norm(smesh.nodes - [x, y], axis=1)
        return int(np.argmin(d))

    xs = np.linspace(root_x, root_x + beam_l, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    path = [node_at(x, y1) for x in xs]
    path += [node_at(xs[-1], y) for y in ys[::-1][1:]]
    path += [node_at(x, y0) for x in xs[::-1][1:]]
    path = np.array(path)
    wet = InterfaceMesh(smesh.nodes[path],
                        [[k, k + 1] for k in range(len(path) - 1)])

    system = InterfaceSystem([arc, wet], dx)
    fluid = FluidSolver(state, model, kern, dom, open_boundary=ob,
                        interface_system=system)
    dt = _dt(cfg, dx, model, u_est=u_max)

    adapter = FeAdapter(fe, wet, path, rho_inf=cfg.get("solid", "rho_inf", 0.8))
    adapter.initialize()
    eps, omega, max_iter = _coupling(cfg)
    coupler = PartitionedCoupler(fluid, [CouplingBinding(1, adapter)],
                                 eps=eps, omega=omega, max_iter=max_iter)

    tip_nodes = [node_at(xs[-1], ys[1]), node_at(xs[-1], ys[2])]

    def probe_tip(sim):
        return float(adapter.d.reshape(-1, 2)[tip_nodes, 1].mean())

    def probe_coeffs(sim):
        f = (sim.fluid.interface_forces.total(0)
             + sim.fluid.interface_forces.total(1))
        return probe_drag_lift(f, model.rho0, 2.0 * u_max / 3.0, diameter)

    return Simulation(
        name="fsi2_beam", cfg=cfg, fluid=fluid, dt=dt,
        t_end=cfg.get("run", "t_end", 12.0), coupler=coupler,
        probes={"tip_dy": probe_tip,
                "c_drag": lambda sim: probe_coeffs(sim)[0],
                "c_lift": lambda sim: probe_coeffs(sim)[1]},
        solid_views=[("beam", adapter)])


BUILDERS = {
    "hydrostatic": build_hydrostatic,
    "taylor_couette": build_taylor_couette,
    "flow_around_cylinder": build_flow_around_cylinder,
    "isochoric_box": build_isochoric_box,
    "cylinder_shear_flow": build_cylinder_shear_flow,
    "fsi2_beam": build_fsi2_beam,
}


def build(cfg: ScenarioConfig) -> Simulation:
    return BUILDERS[cfg.preset](cfg)


def default_config(preset: str, **overrides) -> ScenarioConfig:
    lines = ["[scenario]", f"preset = {preset}", "", "[run]"]
    for key, val in overrides.items():
        lines.append(f"{key} = {val}")
    return parse_text("\n".join(lines) + "\n")
