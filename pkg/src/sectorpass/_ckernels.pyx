# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the element quadrature and union-find kernels.

Signatures and semantics mirror ``sectorpass._pykernels``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expm1, fabs, M_PI

cnp.import_array()

cdef double ALPHA0 = 4.0 * M_PI


cdef inline double _f(double s, int model, double lam, bint truncated, double eps) noexcept nogil:
    cdef double out, s2
    if truncated and s <= 0.0:
        return 0.0
    s2 = s * s
    if model == 0:
        out = 0.0
    elif model == 1:
        out = -lam * expm1(-s2) * exp(ALPHA0 * s2)
        if s < 0.0:
            out = -out
        elif s == 0.0:
            out = 0.0
    else:
        out = lam * s2 * s * exp(ALPHA0 * s2)
    if eps != 0.0:
        out += eps * exp(s2)
    return out


cdef inline Py_ssize_t _locate(const double[::1] tab_s, double x, Py_ssize_t guess) noexcept nogil:
    """Largest k with tab_s[k] <= x, clipped to [0, n - 2]; hunts outward from ``guess``."""
    cdef Py_ssize_t n = tab_s.shape[0], lo, hi, mid, step = 1
    if x <= tab_s[0]:
        return 0
    if x >= tab_s[n - 1]:
        return n - 2
    if guess < 0 or guess > n - 2:
        guess = (n - 1) >> 1
    if tab_s[guess] <= x:
        if x < tab_s[guess + 1]:
            return guess
        lo = guess + 1
        hi = lo + 1
        while hi < n - 1 and tab_s[hi] <= x:
            lo = hi
            step <<= 1
            hi = lo + step
        if hi > n - 1:
            hi = n - 1
    else:
        hi = guess
        lo = hi - 1
        while lo > 0 and tab_s[lo] > x:
            hi = lo
            step <<= 1
            lo = hi - step
        if lo < 0:
            lo = 0
    # invariant: tab_s[lo] <= x < tab_s[hi]
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if tab_s[mid] <= x:
            lo = mid
        else:
            hi = mid
    return lo


cdef inline double _F(double s, int model, double lam, bint truncated, double eps,
                      const double[::1] tab_s, const double[::1] tab_F, const double[::1] tab_f,
                      bint use_table, Py_ssize_t *hint) noexcept nogil:
    cdef Py_ssize_t k
    cdef double s0, h, t, t2, t3, s2
    if truncated and s <= 0.0:
        return 0.0
    if use_table:
        # without the even perturbation F is even; the table is read at |s|
        if eps == 0.0:
            s = fabs(s)
        k = _locate(tab_s, s, hint[0])
        hint[0] = k
        s0 = tab_s[k]
        h = tab_s[k + 1] - s0
        t = (s - s0) / h
        t2 = t * t
        t3 = t2 * t
        return ((2 * t3 - 3 * t2 + 1) * tab_F[k] + (t3 - 2 * t2 + t) * h * tab_f[k]
                + (-2 * t3 + 3 * t2) * tab_F[k + 1] + (t3 - t2) * h * tab_f[k + 1])
    if model == 0:
        return 0.0
    s2 = s * s
    return lam * (s2 * exp(ALPHA0 * s2) / (8 * M_PI) - expm1(ALPHA0 * s2) / (32 * M_PI * M_PI))


def nonlinear_terms(const cnp.int64_t[:, ::1] tri, const double[::1] area, const double[::1] u,
                    const double[:, ::1] bary, const double[::1] wts, int model, double lam,
                    bint truncated, double eps, const double[::1] tab_s, const double[::1] tab_F,
                    const double[::1] tab_f, bint use_table, bint want_load):
    cdef Py_ssize_t nt = tri.shape[0], nq = wts.shape[0], t, q, hint = -1
    cdef double total = 0.0, tri_sum, s, u0, u1, u2, fw, l0, l1, l2
    cdef cnp.ndarray[double, ndim=1] load_arr = np.zeros(u.shape[0]) if want_load else np.zeros(0)
    cdef double[::1] load = load_arr
    with nogil:
        for t in range(nt):
            u0 = u[tri[t, 0]]
            u1 = u[tri[t, 1]]
            u2 = u[tri[t, 2]]
            tri_sum = 0.0
            l0 = 0.0
            l1 = 0.0
            l2 = 0.0
            for q in range(nq):
                s = bary[q, 0] * u0 + bary[q, 1] * u1 + bary[q, 2] * u2
                tri_sum += wts[q] * _F(s, model, lam, truncated, eps, tab_s, tab_F, tab_f, use_table, &hint)
                if want_load:
                    fw = wts[q] * _f(s, model, lam, truncated, eps)
                    l0 += fw * bary[q, 0]
                    l1 += fw * bary[q, 1]
                    l2 += fw * bary[q, 2]
            if want_load:
                load[tri[t, 0]] += area[t] * l0
                load[tri[t, 1]] += area[t] * l1
                load[tri[t, 2]] += area[t] * l2
            total += area[t] * tri_sum
    return total, (load_arr if want_load else None)


cdef Py_ssize_t _find(Py_ssize_t[::1] parent, Py_ssize_t a) noexcept nogil:
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


def count_components(Py_ssize_t n_items, const cnp.int64_t[:, ::1] pairs, const cnp.int8_t[::1] sign):
    cdef cnp.ndarray[Py_ssize_t, ndim=1] parent_arr = np.arange(n_items, dtype=np.intp)
    cdef Py_ssize_t[::1] parent = parent_arr
    cdef cnp.ndarray[cnp.int64_t, ndim=1] labels_arr = np.full(n_items, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] labels = labels_arr
    cdef cnp.ndarray[cnp.int64_t, ndim=1] root_label_arr = np.full(n_items, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] root_label = root_label_arr
    cdef Py_ssize_t p, a, b, ra, rb, i, r
    cdef cnp.int64_t count = 0
    with nogil:
        for p in range(pairs.shape[0]):
            a = pairs[p, 0]
            b = pairs[p, 1]
            if sign[a] != 0 and sign[a] == sign[b]:
                ra = _find(parent, a)
                rb = _find(parent, b)
                if ra != rb:
                    if ra < rb:
                        parent[rb] = ra
                    else:
                        parent[ra] = rb
        for i in range(n_items):
            if sign[i] != 0:
                r = _find(parent, i)
                if root_label[r] < 0:
                    root_label[r] = count
                    count += 1
                labels[i] = root_label[r]
    return int(count), labels_arr
