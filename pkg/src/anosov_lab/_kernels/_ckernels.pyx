# cython: language_level=3
"""Compiled versions of the hot kernels. Signatures mirror ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, floor, fabs, nearbyint, M_PI

cnp.import_array()

cdef double TWO_PI = 2.0 * M_PI


cdef inline void _eval_one(double x0, double x1, const double[:, ::1] ks,
                           const double[:, ::1] cc, const double[:, ::1] sc,
                           int order, double* val, double* jac, double* hess) noexcept nogil:
    cdef Py_ssize_t m, a
    cdef double ph, cp, sp, k0, k1, w, w2
    for a in range(2):
        val[a] = 0.0
    for a in range(4):
        jac[a] = 0.0
    for a in range(8):
        hess[a] = 0.0
    for m in range(ks.shape[0]):
        k0 = ks[m, 0]
        k1 = ks[m, 1]
        ph = TWO_PI * (k0 * x0 + k1 * x1)
        cp = cos(ph)
        sp = sin(ph)
        for a in range(2):
            val[a] += cc[m, a] * cp + sc[m, a] * sp
            if order >= 1:
                w = TWO_PI * (-cc[m, a] * sp + sc[m, a] * cp)
                jac[2 * a] += w * k0
                jac[2 * a + 1] += w * k1
            if order >= 2:
                w2 = TWO_PI * TWO_PI * (-cc[m, a] * cp - sc[m, a] * sp)
                hess[4 * a] += w2 * k0 * k0
                hess[4 * a + 1] += w2 * k0 * k1
                hess[4 * a + 2] += w2 * k1 * k0
                hess[4 * a + 3] += w2 * k1 * k1


def trig_eval(points, ks, cos_c, sin_c, int order):
    cdef const double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef const double[:, ::1] kv = np.ascontiguousarray(ks, dtype=np.float64)
    cdef const double[:, ::1] cc = np.ascontiguousarray(cos_c, dtype=np.float64)
    cdef const double[:, ::1] sc = np.ascontiguousarray(sin_c, dtype=np.float64)
    cdef Py_ssize_t n = pts.shape[0], i, a
    val_a = np.zeros((n, 2))
    jac_a = np.zeros((n, 2, 2))
    hess_a = np.zeros((n, 2, 2, 2))
    cdef double[:, ::1] val = val_a
    cdef double[:, :, ::1] jac = jac_a
    cdef double[:, :, :, ::1] hess = hess_a
    cdef double v[2]
    cdef double j[4]
    cdef double h[8]
    with nogil:
        for i in range(n):
            _eval_one(pts[i, 0], pts[i, 1], kv, cc, sc, order, v, j, h)
            val[i, 0] = v[0]
            val[i, 1] = v[1]
            for a in range(2):
                jac[i, a, 0] = j[2 * a]
                jac[i, a, 1] = j[2 * a + 1]
                hess[i, a, 0, 0] = h[4 * a]
                hess[i, a, 0, 1] = h[4 * a + 1]
                hess[i, a, 1, 0] = h[4 * a + 2]
                hess[i, a, 1, 1] = h[4 * a + 3]
    return val_a, jac_a, hess_a


def invert_newton(points, lin, ks, cos_c, sin_c, double tol, int max_iter):
    cdef const double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef const double[:, ::1] L = np.ascontiguousarray(lin, dtype=np.float64)
    cdef const double[:, ::1] kv = np.ascontiguousarray(ks, dtype=np.float64)
    cdef const double[:, ::1] cc = np.ascontiguousarray(cos_c, dtype=np.float64)
    cdef const double[:, ::1] sc = np.ascontiguousarray(sin_c, dtype=np.float64)
    cdef Py_ssize_t n = pts.shape[0], i
    out_a = np.empty((n, 2))
    cdef double[:, ::1] out = out_a
    cdef double det = L[0, 0] * L[1, 1] - L[0, 1] * L[1, 0]
    cdef double y0, y1, r0, r1, m00, m01, m10, m11, dd, res, worst = 0.0
    cdef double v[2]
    cdef double j[4]
    cdef double h[8]
    cdef int it, it_max = 0
    with nogil:
        for i in range(n):
            y0 = (L[1, 1] * pts[i, 0] - L[0, 1] * pts[i, 1]) / det
            y1 = (-L[1, 0] * pts[i, 0] + L[0, 0] * pts[i, 1]) / det
            res = 1e300
            it = 0
            while it < max_iter:
                it += 1
                _eval_one(y0, y1, kv, cc, sc, 1, v, j, h)
                r0 = L[0, 0] * y0 + L[0, 1] * y1 + v[0] - pts[i, 0]
                r1 = L[1, 0] * y0 + L[1, 1] * y1 + v[1] - pts[i, 1]
                r0 -= nearbyint(r0)
                r1 -= nearbyint(r1)
                res = fabs(r0) if fabs(r0) > fabs(r1) else fabs(r1)
                if res <= tol:
                    break
                m00 = L[0, 0] + j[0]
                m01 = L[0, 1] + j[1]
                m10 = L[1, 0] + j[2]
                m11 = L[1, 1] + j[3]
                dd = m00 * m11 - m01 * m10
                y0 -= (m11 * r0 - m01 * r1) / dd
                y1 -= (-m10 * r0 + m00 * r1) / dd
            out[i, 0] = y0 - floor(y0)
            out[i, 1] = y1 - floor(y1)
            if res > worst:
                worst = res
            if it > it_max:
                it_max = it
    return out_a, it_max, worst


def bilinear_periodic(grid, points):
    cdef const double[:, :, ::1] gr = np.ascontiguousarray(grid, dtype=np.float64)
    cdef const double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t g = gr.shape[0], kdim = gr.shape[2], n = pts.shape[0]
    cdef Py_ssize_t i, c, i0, j0, i1, j1
    cdef double px, py, tx, ty
    out_a = np.empty((n, kdim))
    cdef double[:, ::1] out = out_a
    with nogil:
        for i in range(n):
            px = (pts[i, 0] - floor(pts[i, 0])) * g
            py = (pts[i, 1] - floor(pts[i, 1])) * g
            i0 = <Py_ssize_t>floor(px)
            j0 = <Py_ssize_t>floor(py)
            tx = px - i0
            ty = py - j0
            i0 = i0 % g
            j0 = j0 % g
            i1 = (i0 + 1) % g
            j1 = (j0 + 1) % g
            for c in range(kdim):
                out[i, c] = (gr[i0, j0, c] * (1 - tx) * (1 - ty)
                             + gr[i1, j0, c] * tx * (1 - ty)
                             + gr[i0, j1, c] * (1 - tx) * ty
                             + gr[i1, j1, c] * tx * ty)
    return out_a
