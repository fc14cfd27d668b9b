# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner-loop kernels. Mirrors ``_kernels_py`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp

cnp.import_array()

DEF CORE = 0
DEF WINDING = 1
DEF AIR = 2


def classify(x, y, rects, codes):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64).ravel()
    cdef double[:, ::1] r = np.ascontiguousarray(rects, dtype=np.float64).reshape(-1, 4)
    cdef long[::1] c = np.ascontiguousarray(codes, dtype=np.int64).ravel()
    cdef Py_ssize_t n = xv.shape[0], nr = r.shape[0], i, j
    out = np.empty(n, dtype=np.int8)
    cdef signed char[::1] o = out
    cdef double px, py
    with nogil:
        for i in range(n):
            px = xv[i]
            py = yv[i]
            o[i] = AIR
            for j in range(nr):
                if px >= r[j, 0] and px < r[j, 1] and py >= r[j, 2] and py < r[j, 3]:
                    o[i] = <signed char>c[j]
                    break
    return out.reshape(np.shape(x))


def steel_eval(s, knots, coef, e_off, double nu_low, double h_max, double b_max, double nu0):
    cdef double[::1] sv = np.ascontiguousarray(s, dtype=np.float64).ravel()
    cdef double[::1] kn = np.ascontiguousarray(knots, dtype=np.float64)
    cdef double[:, ::1] cf = np.ascontiguousarray(coef, dtype=np.float64)
    cdef double[::1] eo = np.ascontiguousarray(e_off, dtype=np.float64)
    cdef Py_ssize_t n = sv.shape[0], nk = kn.shape[0], i, lo, hi, mid
    nu_a = np.empty(n)
    dnu_a = np.empty(n)
    w_a = np.empty(n)
    cdef double[::1] nu = nu_a
    cdef double[::1] dnu = dnu_a
    cdef double[::1] w = w_a
    cdef double si, t, r, c0, c1, c2, c3
    cdef double s_min = kn[0]
    cdef double s_max = kn[nk - 1]
    cdef double k = h_max - nu0 * b_max
    cdef double r_max = sqrt(s_max)
    with nogil:
        for i in range(n):
            si = sv[i]
            if si < s_min:
                nu[i] = nu_low
                dnu[i] = 0.0
                w[i] = 0.5 * nu_low * si
            elif si >= s_max:
                r = sqrt(si)
                nu[i] = nu0 + k / r
                dnu[i] = -0.5 * k / (si * r)
                w[i] = eo[nk - 1] + 0.5 * (nu0 * (si - s_max) + 2.0 * k * (r - r_max))
            else:
                lo = 0
                hi = nk - 1
                while hi - lo > 1:
                    mid = (lo + hi) // 2
                    if kn[mid] <= si:
                        lo = mid
                    else:
                        hi = mid
                t = si - kn[lo]
                c0 = cf[lo, 0]
                c1 = cf[lo, 1]
                c2 = cf[lo, 2]
                c3 = cf[lo, 3]
                nu[i] = c0 + t * (c1 + t * (c2 + t * c3))
                dnu[i] = c1 + t * (2.0 * c2 + t * 3.0 * c3)
                w[i] = eo[lo] + 0.5 * t * (c0 + t * (c1 / 2.0 + t * (c2 / 3.0 + t * c3 / 4.0)))
    shape = np.shape(s)
    return nu_a.reshape(shape), dnu_a.reshape(shape), w_a.reshape(shape)


def element_tangent(gx, gy, a_loc, nu, dnu, area):
    cdef double[:, ::1] bx = np.ascontiguousarray(gx, dtype=np.float64)
    cdef double[:, ::1] by = np.ascontiguousarray(gy, dtype=np.float64)
    cdef double[:, ::1] al = np.ascontiguousarray(a_loc, dtype=np.float64)
    cdef double[::1] nv = np.ascontiguousarray(nu, dtype=np.float64)
    cdef double[::1] dv = np.ascontiguousarray(dnu, dtype=np.float64)
    cdef double[::1] ar = np.ascontiguousarray(area, dtype=np.float64)
    cdef Py_ssize_t ne = bx.shape[0], e, i, j
    res_a = np.empty((ne, 3))
    K_a = np.empty((ne, 3, 3))
    cdef double[:, ::1] res = res_a
    cdef double[:, :, ::1] K = K_a
    cdef double ax, ay, g[3], an, ad
    with nogil:
        for e in range(ne):
            ax = bx[e, 0] * al[e, 0] + bx[e, 1] * al[e, 1] + bx[e, 2] * al[e, 2]
            ay = by[e, 0] * al[e, 0] + by[e, 1] * al[e, 1] + by[e, 2] * al[e, 2]
            an = ar[e] * nv[e]
            ad = 2.0 * ar[e] * dv[e]
            for i in range(3):
                g[i] = bx[e, i] * ax + by[e, i] * ay
                res[e, i] = an * g[i]
            for i in range(3):
                for j in range(3):
                    K[e, i, j] = an * (bx[e, i] * bx[e, j] + by[e, i] * by[e, j]) + ad * (g[i] * g[j])
    return res_a, K_a


cdef inline double _sig(double z) nogil:
    cdef double e
    if z >= 0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


def act_forward(a):
    cdef double[:, :, ::1] A = np.ascontiguousarray(a, dtype=np.float64)
    cdef Py_ssize_t n = A.shape[1], d = A.shape[2], i, j
    out = np.empty((3, n, d))
    cdef double[:, :, ::1] O = out
    cdef double z, s, d1
    with nogil:
        for i in range(n):
            for j in range(d):
                z = A[0, i, j]
                s = _sig(z)
                d1 = s * (1.0 + z * (1.0 - s))
                O[0, i, j] = z * s
                O[1, i, j] = d1 * A[1, i, j]
                O[2, i, j] = d1 * A[2, i, j]
    return out


def act_backward(a, g):
    cdef double[:, :, ::1] A = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[:, :, ::1] G = np.ascontiguousarray(g, dtype=np.float64)
    cdef Py_ssize_t n = A.shape[1], d = A.shape[2], i, j
    out = np.empty((3, n, d))
    cdef double[:, :, ::1] O = out
    cdef double z, s, q, d1, d2
    with nogil:
        for i in range(n):
            for j in range(d):
                z = A[0, i, j]
                s = _sig(z)
                q = s * (1.0 - s)
                d1 = s + z * q
                d2 = q * (2.0 + z * (1.0 - 2.0 * s))
                O[0, i, j] = G[0, i, j] * d1 + d2 * (G[1, i, j] * A[1, i, j] + G[2, i, j] * A[2, i, j])
                O[1, i, j] = G[1, i, j] * d1
                O[2, i, j] = G[2, i, j] * d1
    return out


def gate_forward(z, u, v):
    cdef double[:, :, ::1] Z = np.ascontiguousarray(z, dtype=np.float64)
    cdef double[:, :, ::1] U = np.ascontiguousarray(u, dtype=np.float64)
    cdef double[:, :, ::1] V = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t n = Z.shape[1], d = Z.shape[2], i, j
    out = np.empty((3, n, d))
    cdef double[:, :, ::1] H = out
    cdef double zz, s, d1, s0, s1, s2, w0
    with nogil:
        for i in range(n):
            for j in range(d):
                zz = Z[0, i, j]
                s = _sig(zz)
                d1 = s * (1.0 + zz * (1.0 - s))
                s0 = zz * s
                s1 = d1 * Z[1, i, j]
                s2 = d1 * Z[2, i, j]
                w0 = V[0, i, j] - U[0, i, j]
                H[0, i, j] = U[0, i, j] + s0 * w0
                H[1, i, j] = U[1, i, j] + s1 * w0 + s0 * (V[1, i, j] - U[1, i, j])
                H[2, i, j] = U[2, i, j] + s2 * w0 + s0 * (V[2, i, j] - U[2, i, j])
    return out


def gate_backward(z, u, v, gh, gu, gv):
    cdef double[:, :, ::1] Z = np.ascontiguousarray(z, dtype=np.float64)
    cdef double[:, :, ::1] U = np.ascontiguousarray(u, dtype=np.float64)
    cdef double[:, :, ::1] V = np.ascontiguousarray(v, dtype=np.float64)
    cdef double[:, :, ::1] G = np.ascontiguousarray(gh, dtype=np.float64)
    cdef double[:, :, ::1] GU = gu
    cdef double[:, :, ::1] GV = gv
    cdef Py_ssize_t n = Z.shape[1], d = Z.shape[2], i, j
    out = np.empty((3, n, d))
    cdef double[:, :, ::1] O = out
    cdef double zz, s, q, d1, d2, s0, s1, s2, w0, w1, w2, g0, g1, g2, gs0, gs1, gs2, om
    with nogil:
        for i in range(n):
            for j in range(d):
                zz = Z[0, i, j]
                s = _sig(zz)
                q = s * (1.0 - s)
                d1 = s + zz * q
                d2 = q * (2.0 + zz * (1.0 - 2.0 * s))
                s0 = zz * s
                s1 = d1 * Z[1, i, j]
                s2 = d1 * Z[2, i, j]
                w0 = V[0, i, j] - U[0, i, j]
                w1 = V[1, i, j] - U[1, i, j]
                w2 = V[2, i, j] - U[2, i, j]
                g0 = G[0, i, j]
                g1 = G[1, i, j]
                g2 = G[2, i, j]
                gs0 = g0 * w0 + g1 * w1 + g2 * w2
                gs1 = g1 * w0
                gs2 = g2 * w0
                om = 1.0 - s0
                GU[0, i, j] += g0 * om - g1 * s1 - g2 * s2
                GV[0, i, j] += g0 * s0 + g1 * s1 + g2 * s2
                GU[1, i, j] += g1 * om
                GV[1, i, j] += g1 * s0
                GU[2, i, j] += g2 * om
                GV[2, i, j] += g2 * s0
                O[0, i, j] = gs0 * d1 + d2 * (gs1 * Z[1, i, j] + gs2 * Z[2, i, j])
                O[1, i, j] = gs1 * d1
                O[2, i, j] = gs2 * d1
    return out
