# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled cone and distance kernels (same API as ``_pykernels``)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp, INFINITY

cnp.import_array()

ctypedef cnp.float64_t f64
ctypedef cnp.int64_t i64


cdef inline double _jdot(const f64[:] u, const f64[:] v, Py_ssize_t st, Py_ssize_t d) nogil:
    cdef double acc = u[st] * v[st]
    cdef Py_ssize_t i
    for i in range(st + 1, st + d):
        acc -= u[i] * v[i]
    return acc


cdef inline double _tdot(const f64[:] u, const f64[:] v, Py_ssize_t st, Py_ssize_t d) nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t i
    for i in range(st + 1, st + d):
        acc += u[i] * v[i]
    return acc


cdef inline double _jdet(const f64[:] u, Py_ssize_t st, Py_ssize_t d) nogil:
    # factored form avoids cancellation near the cone boundary
    cdef double t = sqrt(_tdot(u, u, st, d))
    return (u[st] - t) * (u[st] + t)


cdef void _apply_w(const f64[:] wbar, const f64[:] eta, const f64[:] v,
                   const i64[:] starts, const i64[:] dims, bint inverse,
                   f64[:] out) noexcept nogil:
    cdef Py_ssize_t k, i, st, d
    cdef double w0, v0, w1v1, coef, sc
    for k in range(starts.shape[0]):
        st = starts[k]
        d = dims[k]
        w0 = wbar[st]
        v0 = v[st]
        w1v1 = _tdot(wbar, v, st, d)
        if inverse:
            sc = 1.0 / eta[k]
            out[st] = (w0 * v0 - w1v1) * sc
            coef = -v0 + w1v1 / (1.0 + w0)
        else:
            sc = eta[k]
            out[st] = (w0 * v0 + w1v1) * sc
            coef = v0 + w1v1 / (1.0 + w0)
        for i in range(st + 1, st + d):
            out[i] = (v[i] + coef * wbar[i]) * sc


def soc_nt_scaling(const f64[:] s, const f64[:] z, const i64[:] starts, const i64[:] dims):
    cdef Py_ssize_t n = s.shape[0], nb = starts.shape[0]
    cdef cnp.ndarray[f64, ndim=1] wbar_a = np.zeros(n)
    cdef cnp.ndarray[f64, ndim=1] eta_a = np.zeros(nb)
    cdef cnp.ndarray[f64, ndim=1] lam_a = np.zeros(n)
    cdef f64[:] wbar = wbar_a
    cdef f64[:] eta = eta_a
    cdef f64[:] lam = lam_a
    cdef Py_ssize_t k, i, st, d
    cdef double sn, zn, dot, gamma
    with nogil:
        for k in range(nb):
            st = starts[k]
            d = dims[k]
            sn = sqrt(_jdet(s, st, d))
            zn = sqrt(_jdet(z, st, d))
            dot = 0.0
            for i in range(st, st + d):
                dot += (s[i] / sn) * (z[i] / zn)
            gamma = sqrt(0.5 * (1.0 + dot))
            wbar[st] = (s[st] / sn + z[st] / zn) / (2.0 * gamma)
            for i in range(st + 1, st + d):
                wbar[i] = (s[i] / sn - z[i] / zn) / (2.0 * gamma)
            eta[k] = sqrt(sn / zn)
        _apply_w(wbar, eta, z, starts, dims, False, lam)
    return wbar_a, eta_a, lam_a


def soc_apply_w(const f64[:] wbar, const f64[:] eta, const f64[:] v,
                const i64[:] starts, const i64[:] dims, bint inverse):
    cdef cnp.ndarray[f64, ndim=1] out_a = np.zeros(v.shape[0])
    cdef f64[:] out = out_a
    with nogil:
        _apply_w(wbar, eta, v, starts, dims, inverse, out)
    return out_a


def soc_jordan_prod(const f64[:] u, const f64[:] v, const i64[:] starts, const i64[:] dims):
    cdef cnp.ndarray[f64, ndim=1] out_a = np.zeros(u.shape[0])
    cdef f64[:] out = out_a
    cdef Py_ssize_t k, i, st, d
    with nogil:
        for k in range(starts.shape[0]):
            st = starts[k]
            d = dims[k]
            out[st] = u[st] * v[st] + _tdot(u, v, st, d)
            for i in range(st + 1, st + d):
                out[i] = u[st] * v[i] + v[st] * u[i]
    return out_a


def soc_jordan_div(const f64[:] u, const f64[:] v, const i64[:] starts, const i64[:] dims):
    cdef cnp.ndarray[f64, ndim=1] out_a = np.zeros(u.shape[0])
    cdef f64[:] out = out_a
    cdef Py_ssize_t k, i, st, d
    cdef double x0
    with nogil:
        for k in range(starts.shape[0]):
            st = starts[k]
            d = dims[k]
            x0 = (u[st] * v[st] - _tdot(u, v, st, d)) / _jdet(u, st, d)
            out[st] = x0
            for i in range(st + 1, st + d):
                out[i] = (v[i] - x0 * u[i]) / u[st]
    return out_a


def soc_max_step(const f64[:] x, const f64[:] dx, const i64[:] starts, const i64[:] dims):
    cdef double best = INFINITY, a, b, c, disc, sd, q, r1, r2, alpha
    cdef Py_ssize_t k, st, d
    with nogil:
        for k in range(starts.shape[0]):
            st = starts[k]
            d = dims[k]
            a = _jdot(dx, dx, st, d)
            b = _jdot(x, dx, st, d)
            c = _jdet(x, st, d)
            if c < 0.0:
                c = 0.0
            alpha = INFINITY
            if a == 0.0:
                if b < 0.0:
                    alpha = -c / (2.0 * b)
            elif a < 0.0 or (b < 0.0 and b * b - a * c >= 0.0):
                disc = b * b - a * c
                if disc < 0.0:
                    disc = 0.0
                sd = sqrt(disc)
                q = -(b + sd) if b >= 0.0 else -(b - sd)
                r1 = q / a
                r2 = c / q if q != 0.0 else INFINITY
                if r1 <= 0.0:
                    r1 = INFINITY
                if r2 <= 0.0:
                    r2 = INFINITY
                alpha = r1 if r1 < r2 else r2
            if alpha < best:
                best = alpha
    return best


def soc_inv_w_blocks(const f64[:] wbar, const f64[:] eta, const i64[:] starts, const i64[:] dims):
    cdef Py_ssize_t total = 0, k, i, j, st, d, pos
    for k in range(dims.shape[0]):
        total += dims[k] * dims[k]
    cdef cnp.ndarray[f64, ndim=1] out_a = np.zeros(total)
    cdef f64[:] out = out_a
    cdef double sc, w0, val
    pos = 0
    with nogil:
        for k in range(starts.shape[0]):
            st = starts[k]
            d = dims[k]
            sc = 1.0 / eta[k]
            w0 = wbar[st]
            for i in range(d):
                for j in range(d):
                    if i == 0 and j == 0:
                        val = w0
                    elif i == 0:
                        val = -wbar[st + j]
                    elif j == 0:
                        val = -wbar[st + i]
                    else:
                        val = wbar[st + i] * wbar[st + j] / (1.0 + w0)
                        if i == j:
                            val += 1.0
                    out[pos] = val * sc
                    pos += 1
    return out_a


def gaussian_kernel(X, Y, double gamma):
    cdef const f64[:, :] xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const f64[:, :] yv = np.ascontiguousarray(Y, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], m = yv.shape[0], p = xv.shape[1], i, j, l
    cdef cnp.ndarray[f64, ndim=2] out_a = np.empty((n, m))
    cdef f64[:, :] out = out_a
    cdef double acc, diff
    with nogil:
        for i in range(n):
            for j in range(m):
                acc = 0.0
                for l in range(p):
                    diff = yv[j, l] - xv[i, l]
                    acc += diff * diff
                out[i, j] = exp(-gamma * acc)
    return out_a


def hamming_distances(catalog, query):
    cdef const cnp.uint8_t[:, :] cv = np.ascontiguousarray(catalog, dtype=np.uint8)
    cdef const cnp.uint8_t[:] qv = np.ascontiguousarray(query, dtype=np.uint8)
    cdef Py_ssize_t k, i
    cdef cnp.ndarray[i64, ndim=1] out_a = np.zeros(cv.shape[0], dtype=np.int64)
    cdef i64[:] out = out_a
    cdef i64 acc
    with nogil:
        for k in range(cv.shape[0]):
            acc = 0
            for i in range(cv.shape[1]):
                if cv[k, i] != qv[i]:
                    acc += 1
            out[k] = acc
    return out_a
