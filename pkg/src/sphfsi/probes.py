"""Derived quantities: drag/lift coefficients, enclosed volume, line profiles."""

from __future__ import annotations

import numpy as np

from . import kinds
from .kernels import quintic_value


def probe_drag_lift(total_force, rho, u_mean, diameter):
    """Drag and lift coefficients from the resultant interface force.

    ``c = 2 f / (rho u_mean^2 D)`` with the force components along x (drag)
    and y (lift).
    """
    scale = 2.0 / (rho * u_mean ** 2 * diameter)
    return scale * total_force[0], scale * total_force[1]


def probe_enclosed_volume(state, region):
    """Occupied volume sum(m_j / rho_j) of fluid particles inside a region.

    ``region`` maps positions (Q, dim) to a boolean mask.
    """
    fluid = state.mask(kinds.FLUID)
    inside = fluid & region(state.pos)
    return float(np.sum(state.m[inside] / state.rho[inside]))


def line_profile(points, values, state, grid, kernel, interface_system=None,
                 model=None, t=0.0, include_walls=True, virtual_values=None):
    """Shepard interpolation along probe points with boundary support.

    Contributions come from fluid particles, optionally wall particles (their
    extrapolated pressure continues the field across the wall) and, when an
    interface system is given, from the virtual particle support each probe
    point would carry as a fluid particle.  ``values`` is per-particle data;
    ``virtual_values`` selects the matching extrapolated virtual field
    ("pressure" or "velocity").
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    values = np.asarray(values, dtype=np.float64)
    vec = values.ndim == 2
    width = values.shape[1] if vec else 1

    table = grid.query_points(points)
    keep = state.kind[table.cols] == kinds.FLUID
    if include_walls:
        keep |= state.kind[table.cols] == kinds.WALL
    rows, cols = table.rows[keep], table.cols[keep]
    w = quintic_value(table.dist[keep], kernel.h, kernel.dim)
    vw = state.volume()[cols] * w

    num = np.zeros((len(points), width))
    den = np.bincount(rows, weights=vw, minlength=len(points))
    vals = values[:, None] if not vec else values
    for ax in range(width):
        num[:, ax] = np.bincount(rows, weights=vw * vals[cols, ax],
                                 minlength=len(points))

    if interface_system is not None:
        mass = float(np.median(state.m[state.kind == kinds.FLUID]))
        vpos, vp, vu, vvol, owner = interface_system.virtual_support(
            points, state, grid, kernel, model, t, mass)
        if len(owner):
            dist = np.linalg.norm(vpos - points[owner], axis=1)
            wv = quintic_value(dist, kernel.h, kernel.dim) * vvol
            den += np.bincount(owner, weights=wv, minlength=len(points))
            vdat = vp[:, None] if virtual_values != "velocity" else vu
            for ax in range(width):
                num[:, ax] += np.bincount(owner, weights=wv * vdat[:, ax],
                                          minlength=len(points))

    out = num / np.where(den > 0.0, den, 1.0)[:, None]
    out[den <= 0.0] = np.nan
    return out[:, 0] if not vec else out


def angular_velocity_profile(radii, n_angles, center, state, grid, kernel):
    """Mean and spread of the azimuthal velocity on circles around a center.

    Returns (mean_u_theta, std_u_theta) per radius, from plain fluid-particle
    Shepard interpolation at ``n_angles`` sample points per circle.
    """
    theta = np.linspace(0.0, 2.0 * np.pi, n_angles, endpoint=False)
    means = np.empty(len(radii))
    stds = np.empty(len(radii))
    vel = line_profile  # reuse the interpolator per ring
    for k, r in enumerate(radii):
        pts = np.stack([center[0] + r * np.cos(theta),
                        center[1] + r * np.sin(theta)], axis=-1)
        u = line_profile(pts, state.vel, state, grid, kernel,
                         include_walls=False)
        t_hat = np.stack([-np.sin(theta), np.cos(theta)], axis=-1)
        u_theta = np.einsum("ij,ij->i", u, t_hat)
        ok = np.isfinite(u_theta)
        means[k] = u_theta[ok].mean()
        stds[k] = u_theta[ok].std()
    return means, stds
