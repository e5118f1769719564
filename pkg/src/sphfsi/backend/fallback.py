"""Pure-NumPy implementation of the hot pair loops.

Mirrors the API of the compiled ``sphfsi._core`` extension: uniform-grid
fixed-radius neighbor search plus the fused density / momentum evaluations
over the resulting pair table.  Everything is vectorized over pairs; per-pair
accumulation into particles uses ``np.bincount`` which sums in pair order
(rows ascending, columns ascending within a row), keeping results
deterministic.
"""

import numpy as np

# quintic spline pieces, duplicated from sphfsi.kernels to keep the backend
# modules free of package-internal imports (the Cython core inlines the same)
_SIGMA_1D = 1.0 / 120.0
_SIGMA_2D = 7.0 / (478.0 * np.pi)
_SIGMA_3D = 1.0 / (120.0 * np.pi)


def _sigma(h, dim):
    if dim == 1:
        return _SIGMA_1D / h
    if dim == 2:
        return _SIGMA_2D / (h * h)
    return _SIGMA_3D / (h * h * h)


def _w(dist, h, dim):
    q = dist / h
    q3 = np.clip(3.0 - q, 0.0, None)
    q2 = np.clip(2.0 - q, 0.0, None)
    q1 = np.clip(1.0 - q, 0.0, None)
    return _sigma(h, dim) * (q3 ** 5 - 6.0 * q2 ** 5 + 15.0 * q1 ** 5)


def _dwdr(dist, h, dim):
    q = dist / h
    q3 = np.clip(3.0 - q, 0.0, None)
    q2 = np.clip(2.0 - q, 0.0, None)
    q1 = np.clip(1.0 - q, 0.0, None)
    return _sigma(h, dim) / h * (-5.0 * q3 ** 4 + 30.0 * q2 ** 4 - 75.0 * q1 ** 4)


def bin_particles(pos, lo, cell_size, ncells):
    """Sort particles into grid cells.

    Returns ``(order, cell_start)`` where ``order`` lists particle indices
    sorted by linear cell id and ``cell_start`` is the CSR prefix over cells.
    """
    npart, dim = pos.shape
    coords = np.floor((pos - lo[None, :]) / cell_size[None, :]).astype(np.int64)
    np.clip(coords, 0, ncells[None, :] - 1, out=coords)
    linear = coords[:, 0]
    for ax in range(1, dim):
        linear = linear * ncells[ax] + coords[:, ax]
    order = np.argsort(linear, kind="stable")
    total = int(np.prod(ncells))
    counts = np.bincount(linear, minlength=total)
    cell_start = np.zeros(total + 1, dtype=np.int64)
    np.cumsum(counts, out=cell_start[1:])
    return order.astype(np.int64), cell_start


def find_pairs(qpos, pos, order, cell_start, lo, cell_size, ncells, periodic,
               extent, rcut, exclude_self):
    """Fixed-radius neighbor query of ``qpos`` against binned ``pos``.

    Returns ``(indptr, rows, cols, dx, dist)`` with strictly ``dist < rcut``,
    ``dx = qpos[row] - pos[col]`` under the minimum-image convention on
    periodic axes, and columns ascending within each row.  With
    ``exclude_self`` the pair ``row == col`` is dropped (callers pass
    ``qpos is pos`` in that case).
    """
    nq, dim = qpos.shape
    base = np.floor((qpos - lo[None, :]) / cell_size[None, :]).astype(np.int64)

    rows_acc, cols_acc = [], []
    offsets = np.stack(np.meshgrid(*([np.arange(-1, 2)] * dim), indexing="ij"),
                       axis=-1).reshape(-1, dim)
    for off in offsets:
        cell = base + off[None, :]
        valid = np.ones(nq, dtype=bool)
        for ax in range(dim):
            if periodic[ax]:
                cell[:, ax] %= ncells[ax]
            else:
                valid &= (cell[:, ax] >= 0) & (cell[:, ax] < ncells[ax])
        linear = cell[:, 0].copy()
        for ax in range(1, dim):
            linear = linear * ncells[ax] + cell[:, ax]
        linear[~valid] = 0
        start = cell_start[linear]
        stop = cell_start[linear + 1]
        counts = np.where(valid, stop - start, 0)
        total = int(counts.sum())
        if total == 0:
            continue
        rows = np.repeat(np.arange(nq, dtype=np.int64), counts)
        # ragged arange: for each row the slots start[row] .. start[row]+count[row]
        nz = counts > 0
        cum_before = np.zeros(int(nz.sum()), dtype=np.int64)
        cum_before[1:] = np.cumsum(counts[nz])[:-1]
        idx = np.repeat(start[nz] - cum_before, counts[nz]) + np.arange(total)
        rows_acc.append(rows)
        cols_acc.append(order[idx])

    if rows_acc:
        rows = np.concatenate(rows_acc)
        cols = np.concatenate(cols_acc)
    else:
        rows = np.empty(0, dtype=np.int64)
        cols = np.empty(0, dtype=np.int64)

    dx = qpos[rows] - pos[cols]
    for ax in range(dim):
        if periodic[ax]:
            dx[:, ax] -= extent[ax] * np.rint(dx[:, ax] / extent[ax])
    dist = np.sqrt(np.einsum("ij,ij->i", dx, dx))
    keep = dist < rcut
    if exclude_self:
        keep &= rows != cols
    rows, cols, dx, dist = rows[keep], cols[keep], dx[keep], dist[keep]

    sorter = np.lexsort((cols, rows))
    rows, cols, dx, dist = rows[sorter], cols[sorter], dx[sorter], dist[sorter]
    counts = np.bincount(rows, minlength=nq)
    indptr = np.zeros(nq + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, rows, cols, np.ascontiguousarray(dx), dist


def kernel_sums(indptr, rows, dist, h, dim):
    """Per-row sums of kernel values over a pair table (no self term)."""
    return np.bincount(rows, weights=_w(dist, h, dim), minlength=len(indptr) - 1)


def momentum(indptr, rows, cols, dx, dist, vel, vel_adv, vel_visc, rho, p,
             vol, m, eta, kind, h, dim, p_b):
    """Fused momentum evaluation over a particle-particle pair table.

    Computes per-particle acceleration and the background-pressure
    acceleration that advances the transport velocity.  Targets are fluid
    (kind 0) and outflow (kind 3) particles; wall neighbors (kind 1) use the
    ghost velocity in ``vel_visc`` and are excluded from the transport-
    velocity stress term; inflow neighbors (kind 2) are ignored for outflow
    targets.
    """
    n = len(rho)
    acc = np.zeros((n, dim))
    acc_adv = np.zeros((n, dim))
    if len(rows) == 0:
        return acc, acc_adv

    ki = kind[rows]
    kj = kind[cols]
    sel = ((ki == 0) | (ki == 3)) & ~((ki == 3) & (kj == 2))
    r, c = rows[sel], cols[sel]
    dxs, d = dx[sel], dist[sel]
    kjs = kj[sel]

    dwdr = _dwdr(d, h, dim)
    e = dxs / d[:, None]
    v2 = vol[r] ** 2 + vol[c] ** 2
    inv_m = 1.0 / m[r]

    # pressure: density-weighted inter-particle average
    p_t = (rho[c] * p[r] + rho[r] * p[c]) / (rho[r] + rho[c])
    term = (-inv_m * v2 * p_t * dwdr)[:, None] * e

    # viscous: harmonic-mean dynamic viscosity, ghost velocity at walls
    eta_sum = eta[r] + eta[c]
    eta_t = np.divide(2.0 * eta[r] * eta[c], eta_sum,
                      out=np.zeros_like(eta_sum), where=eta_sum > 0.0)
    term += (inv_m * v2 * eta_t * dwdr / d)[:, None] * (vel[r] - vel_visc[c])

    # transport-velocity stress, fluid-like pairs only
    ts = kjs != 1
    if np.any(ts):
        ai = rho[r[ts], None] * vel[r[ts]]
        aj = rho[c[ts], None] * vel[c[ts]]
        di = vel_adv[r[ts]] - vel[r[ts]]
        dj = vel_adv[c[ts]] - vel[c[ts]]
        proj = 0.5 * (ai * np.einsum("ij,ij->i", di, e[ts])[:, None]
                      + aj * np.einsum("ij,ij->i", dj, e[ts])[:, None])
        term[ts] += (inv_m[ts] * v2[ts] * dwdr[ts])[:, None] * proj

    adv = (-p_b * inv_m * v2 * dwdr)[:, None] * e

    for ax in range(dim):
        acc[:, ax] = np.bincount(r, weights=term[:, ax], minlength=n)
        acc_adv[:, ax] = np.bincount(r, weights=adv[:, ax], minlength=n)
    return acc, acc_adv
