# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled pair loops: uniform-grid neighbor search and the fused
density / momentum evaluations.  Same API as sphfsi.backend.fallback.

Per-row helpers take raw pointers; passing memoryviews into prange bodies
would acquire/release them per call with atomic refcounts, which dominates
the runtime at these problem sizes.
"""

import numpy as np

cimport cython
cimport numpy as cnp

from libc.math cimport floor, sqrt, round as c_round, pi

cnp.import_array()

ctypedef cnp.int64_t i64
ctypedef cnp.uint8_t u8
ctypedef cnp.int8_t i8


cdef inline double _sigma(double h, int dim) nogil:
    if dim == 1:
        return 1.0 / (120.0 * h)
    if dim == 2:
        return 7.0 / (478.0 * pi * h * h)
    return 1.0 / (120.0 * pi * h * h * h)


cdef inline double _w(double r, double h, int dim) nogil:
    cdef double q = r / h
    cdef double f = 0.0
    cdef double t
    if q < 3.0:
        t = 3.0 - q
        f = t * t * t * t * t
        if q < 2.0:
            t = 2.0 - q
            f -= 6.0 * t * t * t * t * t
            if q < 1.0:
                t = 1.0 - q
                f += 15.0 * t * t * t * t * t
    return _sigma(h, dim) * f


cdef inline double _dwdr(double r, double h, int dim) nogil:
    cdef double q = r / h
    cdef double f = 0.0
    cdef double t
    if q < 3.0:
        t = 3.0 - q
        f = -5.0 * t * t * t * t
        if q < 2.0:
            t = 2.0 - q
            f += 30.0 * t * t * t * t
            if q < 1.0:
                t = 1.0 - q
                f -= 75.0 * t * t * t * t
    return _sigma(h, dim) / h * f


cdef i64 _row_scan(double* qpos, double* pos, i64* order, i64* cell_start,
                   double* lo, double* cell_size, i64* ncells, u8* periodic,
                   double* extent, double rcut, bint exclude_self,
                   Py_ssize_t i, int dim,
                   bint fill, i64 w0, i64* cols, double* dxv,
                   double* distv) nogil:
    """Scan the 3^dim cell neighborhood of query point i.

    With fill=False only counts matches; with fill=True writes columns,
    separation vectors and distances starting at slot w0 and returns the
    final slot (rows are later sorted ascending by column id).
    """
    cdef i64 base[3]
    cdef i64 cc[3]
    cdef i64 off[3]
    cdef double buf[3]
    cdef int ax
    cdef i64 n = 0
    cdef i64 w = w0
    cdef i64 lin, s, e, slot, j
    cdef double d2, y
    cdef bint ok
    cdef double rcut2 = rcut * rcut
    for ax in range(dim):
        base[ax] = <i64>floor((qpos[i * dim + ax] - lo[ax]) / cell_size[ax])
    off[0] = -1
    while off[0] <= 1:
        off[1] = -1
        while off[1] <= 1 or (dim < 2 and off[1] == 0):
            off[2] = -1
            while off[2] <= 1 or (dim < 3 and off[2] == 0):
                ok = True
                for ax in range(dim):
                    cc[ax] = base[ax] + off[ax]
                    if periodic[ax]:
                        cc[ax] = cc[ax] % ncells[ax]
                        if cc[ax] < 0:
                            cc[ax] += ncells[ax]
                    elif cc[ax] < 0 or cc[ax] >= ncells[ax]:
                        ok = False
                        break
                if ok:
                    lin = cc[0]
                    for ax in range(1, dim):
                        lin = lin * ncells[ax] + cc[ax]
                    s = cell_start[lin]
                    e = cell_start[lin + 1]
                    for slot in range(s, e):
                        j = order[slot]
                        if exclude_self and j == i:
                            continue
                        d2 = 0.0
                        for ax in range(dim):
                            y = qpos[i * dim + ax] - pos[j * dim + ax]
                            if periodic[ax]:
                                y = y - extent[ax] * c_round(y / extent[ax])
                            buf[ax] = y
                            d2 = d2 + y * y
                        if d2 < rcut2:
                            if fill:
                                cols[w] = j
                                for ax in range(dim):
                                    dxv[w * dim + ax] = buf[ax]
                                distv[w] = sqrt(d2)
                                w = w + 1
                            else:
                                n = n + 1
                if dim < 3:
                    break
                off[2] = off[2] + 1
            if dim < 2:
                break
            off[1] = off[1] + 1
        off[0] = off[0] + 1
    return w if fill else n


cdef void _row_sort(i64 w0, i64 w1, int dim, i64* cols, double* dxv,
                    double* distv) nogil:
    # insertion sort ascending column id (rows are short)
    cdef i64 key
    cdef double tmp
    cdef double buf[3]
    cdef Py_ssize_t a, b
    cdef int ax
    for a in range(w0 + 1, w1):
        key = cols[a]
        tmp = distv[a]
        for ax in range(dim):
            buf[ax] = dxv[a * dim + ax]
        b = a
        while b > w0 and cols[b - 1] > key:
            cols[b] = cols[b - 1]
            distv[b] = distv[b - 1]
            for ax in range(dim):
                dxv[b * dim + ax] = dxv[(b - 1) * dim + ax]
            b = b - 1
        cols[b] = key
        distv[b] = tmp
        for ax in range(dim):
            dxv[b * dim + ax] = buf[ax]


@cython.boundscheck(False)
@cython.wraparound(False)
def find_pairs(double[:, ::1] qpos, double[:, ::1] pos,
               i64[::1] order, i64[::1] cell_start,
               double[::1] lo, double[::1] cell_size, i64[::1] ncells,
               u8[::1] periodic, double[::1] extent,
               double rcut, bint exclude_self):
    cdef Py_ssize_t nq = qpos.shape[0]
    cdef int dim = <int>qpos.shape[1]
    counts_np = np.zeros(nq, dtype=np.int64)
    cdef i64[::1] counts = counts_np
    cdef Py_ssize_t i

    cdef double* qp = &qpos[0, 0] if nq else NULL
    cdef double* pp = &pos[0, 0] if pos.shape[0] else NULL
    cdef i64* op = &order[0] if order.shape[0] else NULL
    cdef i64* cs = &cell_start[0]
    cdef double* lop = &lo[0]
    cdef double* clp = &cell_size[0]
    cdef i64* ncp = &ncells[0]
    cdef u8* pep = &periodic[0]
    cdef double* exp_ = &extent[0]
    cdef i64* cnt = &counts[0] if nq else NULL

    with nogil:
        for i in range(nq):
            cnt[i] = _row_scan(qp, pp, op, cs, lop, clp, ncp, pep, exp_,
                               rcut, exclude_self, i, dim,
                               False, 0, NULL, NULL, NULL)

    indptr_np = np.zeros(nq + 1, dtype=np.int64)
    np.cumsum(counts_np, out=indptr_np[1:])
    cdef i64[::1] indptr = indptr_np
    cdef Py_ssize_t total = indptr_np[nq]

    rows_np = np.empty(total, dtype=np.int64)
    cols_np = np.empty(total, dtype=np.int64)
    dx_np = np.empty((total, dim), dtype=np.float64)
    dist_np = np.empty(total, dtype=np.float64)
    cdef i64[::1] rows = rows_np
    cdef i64[::1] cols = cols_np
    cdef double[:, ::1] dxv = dx_np
    cdef double[::1] distv = dist_np
    cdef i64* ip = &indptr[0]
    cdef i64* rp = &rows[0] if total else NULL
    cdef i64* cp = &cols[0] if total else NULL
    cdef double* dxp = &dxv[0, 0] if total else NULL
    cdef double* dp = &distv[0] if total else NULL
    cdef Py_ssize_t a

    with nogil:
        for i in range(nq):
            _row_scan(qp, pp, op, cs, lop, clp, ncp, pep, exp_,
                      rcut, exclude_self, i, dim, True, ip[i], cp, dxp, dp)
            _row_sort(ip[i], ip[i + 1], dim, cp, dxp, dp)
            for a in range(ip[i], ip[i + 1]):
                rp[a] = i

    return indptr_np, rows_np, cols_np, dx_np, dist_np


@cython.boundscheck(False)
@cython.wraparound(False)
def kernel_sums(i64[::1] indptr, i64[::1] rows, double[::1] dist,
                double h, int dim):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    out_np = np.zeros(n, dtype=np.float64)
    cdef double[::1] out = out_np
    cdef i64* ip = &indptr[0]
    cdef double* dp = &dist[0] if dist.shape[0] else NULL
    cdef double* op = &out[0] if n else NULL
    cdef Py_ssize_t i, a
    cdef double s
    with nogil:
        for i in range(n):
            s = 0.0
            for a in range(ip[i], ip[i + 1]):
                s = s + _w(dp[a], h, dim)
            op[i] = s
    return out_np


cdef void _momentum_row(i64* indptr, i64* cols, double* dx, double* dist,
                        double* vel, double* vel_adv, double* vel_visc,
                        double* rho, double* p, double* vol, double* m,
                        double* eta, i8* kind, double h, int dim, double p_b,
                        Py_ssize_t i, double* acc, double* adv) nogil:
    cdef Py_ssize_t a
    cdef i64 j
    cdef int ax, ki, kj
    cdef double v2, invm, dwdr, d, pt, et, es, coef, proj, pref
    cdef double e[3]
    cdef double acc_i[3]
    cdef double adv_i[3]

    ki = kind[i]
    if ki != 0 and ki != 3:
        return
    for ax in range(dim):
        acc_i[ax] = 0.0
        adv_i[ax] = 0.0
    invm = 1.0 / m[i]
    for a in range(indptr[i], indptr[i + 1]):
        j = cols[a]
        kj = kind[j]
        if ki == 3 and kj == 2:
            continue
        d = dist[a]
        for ax in range(dim):
            e[ax] = dx[a * dim + ax] / d
        v2 = vol[i] * vol[i] + vol[j] * vol[j]
        dwdr = _dwdr(d, h, dim)

        pt = (rho[j] * p[i] + rho[i] * p[j]) / (rho[i] + rho[j])
        coef = -invm * v2 * pt * dwdr
        for ax in range(dim):
            acc_i[ax] = acc_i[ax] + coef * e[ax]

        es = eta[i] + eta[j]
        if es > 0.0:
            et = 2.0 * eta[i] * eta[j] / es
            coef = invm * v2 * et * dwdr / d
            for ax in range(dim):
                acc_i[ax] = acc_i[ax] + coef * (vel[i * dim + ax]
                                                - vel_visc[j * dim + ax])

        if kj != 1:
            proj = 0.0
            for ax in range(dim):
                proj = proj + (vel_adv[i * dim + ax] - vel[i * dim + ax]) * e[ax]
            pref = 0.5 * rho[i] * proj
            proj = 0.0
            for ax in range(dim):
                proj = proj + (vel_adv[j * dim + ax] - vel[j * dim + ax]) * e[ax]
            proj = 0.5 * rho[j] * proj
            coef = invm * v2 * dwdr
            for ax in range(dim):
                acc_i[ax] = acc_i[ax] + coef * (pref * vel[i * dim + ax]
                                                + proj * vel[j * dim + ax])

        coef = -p_b * invm * v2 * dwdr
        for ax in range(dim):
            adv_i[ax] = adv_i[ax] + coef * e[ax]

    for ax in range(dim):
        acc[i * dim + ax] = acc_i[ax]
        adv[i * dim + ax] = adv_i[ax]


@cython.boundscheck(False)
@cython.wraparound(False)
def momentum(i64[::1] indptr, i64[::1] rows, i64[::1] cols,
             double[:, ::1] dx, double[::1] dist,
             double[:, ::1] vel, double[:, ::1] vel_adv,
             double[:, ::1] vel_visc, double[::1] rho, double[::1] p,
             double[::1] vol, double[::1] m, double[::1] eta,
             i8[::1] kind, double h, int dim, double p_b):
    """Fused momentum evaluation; see the fallback docstring for the rules."""
    cdef Py_ssize_t n = rho.shape[0]
    acc_np = np.zeros((n, dim), dtype=np.float64)
    adv_np = np.zeros((n, dim), dtype=np.float64)
    cdef double[:, ::1] acc = acc_np
    cdef double[:, ::1] adv = adv_np
    cdef Py_ssize_t i
    cdef Py_ssize_t total = cols.shape[0]

    cdef i64* ip = &indptr[0]
    cdef i64* cp = &cols[0] if total else NULL
    cdef double* dxp = &dx[0, 0] if total else NULL
    cdef double* dp = &dist[0] if total else NULL
    cdef double* velp = &vel[0, 0] if n else NULL
    cdef double* vap = &vel_adv[0, 0] if n else NULL
    cdef double* vvp = &vel_visc[0, 0] if n else NULL
    cdef double* rhop = &rho[0] if n else NULL
    cdef double* pp = &p[0] if n else NULL
    cdef double* volp = &vol[0] if n else NULL
    cdef double* mp = &m[0] if n else NULL
    cdef double* etap = &eta[0] if n else NULL
    cdef i8* kp = &kind[0] if n else NULL
    cdef double* accp = &acc[0, 0] if n else NULL
    cdef double* advp = &adv[0, 0] if n else NULL

    with nogil:
        for i in range(n):
            _momentum_row(ip, cp, dxp, dp, velp, vap, vvp, rhop, pp, volp,
                          mp, etap, kp, h, dim, p_b, i, accp, advp)
    return acc_np, adv_np
