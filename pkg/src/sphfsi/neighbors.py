"""Uniform-grid spatial hashing for fixed-radius neighbor queries.

The grid is rebuilt from scratch every step (rebuild is O(N)); queries on a
built grid are read-only.  Neighborhood is defined by the strict inequality
``|r_i - r_j| < r_c``; since the kernel vanishes at ``r_c`` the convention is
observationally irrelevant but fixed for determinism.  Neighbor lists are
returned in ascending id order so force summations are bitwise reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import DomainEscapeError, StaleGridError


@dataclass(frozen=True)
class Domain:
    """Axis-aligned simulation box with per-axis periodicity flags."""

    lo: np.ndarray
    hi: np.ndarray
    periodic: np.ndarray

    @classmethod
    def create(cls, lo, hi, periodic=None):
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        if periodic is None:
            periodic = np.zeros(len(lo), dtype=bool)
        else:
            periodic = np.asarray(periodic, dtype=bool)
        if np.any(hi <= lo):
            raise ValueError("domain upper bounds must exceed lower bounds")
        return cls(lo, hi, periodic)

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo

    def wrap(self, pos: np.ndarray) -> np.ndarray:
        """Map coordinates on periodic axes into [lo, hi)."""
        out = np.array(pos, dtype=np.float64)
        for ax in range(self.dim):
            if self.periodic[ax]:
                span = self.hi[ax] - self.lo[ax]
                out[:, ax] = self.lo[ax] + np.mod(out[:, ax] - self.lo[ax], span)
        return out


@dataclass
class PairTable:
    """CSR table of neighbor pairs.

    ``dx = pos[row] - pos[col]`` (minimum image on periodic axes) and
    ``dist = |dx|``; columns are ascending within each row.
    """

    indptr: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    dx: np.ndarray
    dist: np.ndarray

    def row(self, i):
        a, b = self.indptr[i], self.indptr[i + 1]
        return self.cols[a:b], self.dx[a:b], self.dist[a:b]


class NeighborGrid:
    """Cell grid over a particle set; see :func:`rebuild`."""

    def __init__(self, pos, r_c, domain, generation, escape_margin, backend_mod):
        self.r_c = float(r_c)
        self.domain = domain
        self.generation = generation
        self._backend = backend_mod
        self._pos = np.ascontiguousarray(pos, dtype=np.float64)
        self.npart, self.dim = self._pos.shape

        lo = np.empty(self.dim)
        extent = np.empty(self.dim)
        for ax in range(self.dim):
            if domain.periodic[ax]:
                lo[ax] = domain.lo[ax]
                extent[ax] = domain.hi[ax] - domain.lo[ax]
            else:
                span_lo = self._pos[:, ax].min() if self.npart else 0.0
                span_hi = self._pos[:, ax].max() if self.npart else 1.0
                lo[ax] = span_lo
                extent[ax] = max(span_hi - span_lo, 1e-12)
        ncells = np.maximum(1, np.floor(extent / self.r_c)).astype(np.int64)
        self._lo = lo
        self._extent = extent
        self._ncells = ncells
        # cells never narrower than r_c so a +-1 cell scan is exhaustive
        self._cell_size = np.maximum(extent / ncells, self.r_c)
        self._periodic = np.ascontiguousarray(domain.periodic, dtype=np.uint8)
        self._escape_margin = escape_margin
        self._order, self._cell_start = backend.fallback.bin_particles(
            self._pos, self._lo, self._cell_size, self._ncells)
        self._table = None

    def _check_escape(self):
        for ax in range(self.dim):
            if self.domain.periodic[ax]:
                continue
            m = self._escape_margin
            lo, hi = self.domain.lo[ax] - m, self.domain.hi[ax] + m
            if self.npart and (self._pos[:, ax].min() < lo or self._pos[:, ax].max() > hi):
                bad = np.flatnonzero((self._pos[:, ax] < lo) | (self._pos[:, ax] > hi))
                raise DomainEscapeError(
                    f"{len(bad)} particle(s) left the domain on axis {ax} "
                    f"(first id {bad[0]}, position {self._pos[bad[0]]}); "
                    "the run has likely blown up")

    def check_current(self, generation):
        if generation != self.generation:
            raise StaleGridError(
                f"grid built for generation {self.generation}, "
                f"queried with {generation}")

    @property
    def pairs(self) -> PairTable:
        """Particle-particle pair table (self pairs excluded)."""
        if self._table is None:
            res = self._backend.find_pairs(
                self._pos, self._pos, self._order, self._cell_start,
                self._lo, self._cell_size, self._ncells, self._periodic,
                self._extent, self.r_c, True)
            self._table = self._dedup(PairTable(*res))
        return self._table

    def query_points(self, points) -> PairTable:
        """Neighbors of arbitrary query points among the particles."""
        qpos = np.ascontiguousarray(points, dtype=np.float64)
        res = self._backend.find_pairs(
            qpos, self._pos, self._order, self._cell_start,
            self._lo, self._cell_size, self._ncells, self._periodic,
            self._extent, self.r_c, False)
        return self._dedup(PairTable(*res))

    def _dedup(self, table: PairTable) -> PairTable:
        # wrapped cell neighborhoods on very small periodic boxes (< 3 cells
        # per axis) visit the same cell twice; drop the duplicate pairs
        if not np.any(self._periodic.astype(bool) & (self._ncells < 3)):
            return table
        key = table.rows * (self.npart + 1) + table.cols
        keep = np.ones(len(key), dtype=bool)
        keep[1:] = key[1:] != key[:-1]
        if np.all(keep):
            return table
        rows = table.rows[keep]
        counts = np.bincount(rows, minlength=len(table.indptr) - 1)
        indptr = np.zeros_like(table.indptr)
        np.cumsum(counts, out=indptr[1:])
        return PairTable(indptr, rows, table.cols[keep], table.dx[keep],
                         table.dist[keep])

    def neighbors(self, i, generation=None):
        """Neighbor ids, separation vectors and distances of particle ``i``."""
        if generation is not None:
            self.check_current(generation)
        return self.pairs.row(i)

    @property
    def cell_geometry(self):
        """(lo, cell_size, ncells, periodic) of the underlying cell grid."""
        return self._lo, self._cell_size, self._ncells, self._periodic.astype(bool)

    def cell_linear(self, points) -> np.ndarray:
        """Linear cell ids of arbitrary points (clipped / wrapped per axis)."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        coords = np.floor((pts - self._lo[None, :]) / self._cell_size[None, :]).astype(np.int64)
        for ax in range(self.dim):
            if self._periodic[ax]:
                coords[:, ax] %= self._ncells[ax]
            else:
                np.clip(coords[:, ax], 0, self._ncells[ax] - 1, out=coords[:, ax])
        linear = coords[:, 0]
        for ax in range(1, self.dim):
            linear = linear * self._ncells[ax] + coords[:, ax]
        return linear


def rebuild(positions, r_c, domain, generation=0, escape_margin=None,
            backend_name=None):
    """Build a :class:`NeighborGrid` for the given positions.

    Positions on periodic axes must already be wrapped into the domain.
    Particles outside the non-periodic domain bounds by more than
    ``escape_margin`` (default ``2 r_c``) raise :class:`DomainEscapeError`.
    """
    pos = np.ascontiguousarray(positions, dtype=np.float64)
    if pos.ndim != 2:
        raise ValueError("positions must be (N, dim)")
    if not np.all(np.isfinite(pos)):
        raise ValueError("positions must be finite")
    if r_c <= 0.0:
        raise ValueError("support radius must be positive")
    for ax in range(domain.dim):
        if domain.periodic[ax] and domain.extent[ax] < 2.0 * r_c:
            raise ValueError(
                f"periodic axis {ax} extent {domain.extent[ax]} < 2 r_c")
    if escape_margin is None:
        escape_margin = 2.0 * r_c
    grid = NeighborGrid(pos, r_c, domain, generation, escape_margin,
                        backend.get_backend(backend_name))
    grid._check_escape()
    return grid
