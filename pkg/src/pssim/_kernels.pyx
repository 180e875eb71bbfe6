# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled sampling kernels over :class:`pssim.tables.KernelTables`.

Uniforms come straight from the bit generator's ``next_double``, the same
stream ``Generator.random`` reads, so results match the Python paths.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer
from cython.operator cimport dereference as deref
from libc.math cimport log1p
from libc.stdint cimport int32_t, int64_t
from libcpp.unordered_map cimport unordered_map
from libcpp.vector cimport vector
from numpy.random cimport bitgen_t

import numpy as np


class KernelConsistencyError(RuntimeError):
    pass


cdef inline Py_ssize_t _first_above(const double* cdf, Py_ssize_t n, double u) noexcept nogil:
    # first index with cdf[j] > u (bisect_right), clamped to n - 1
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if cdf[mid] > u:
            hi = mid
        else:
            lo = mid + 1
    return lo if lo < n else n - 1


cdef inline Py_ssize_t _lower_bound(vector[int64_t]& v, int64_t x) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = <Py_ssize_t>v.size(), mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if v[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef inline int32_t deref_value(unordered_map[int64_t, int32_t].iterator it) noexcept nogil:
    return deref(it).second


cdef bitgen_t* _bitgen(object bit_generator) except NULL:
    return <bitgen_t*>PyCapsule_GetPointer(bit_generator.capsule, "BitGenerator")


def sketch(double M, const double[::1] range_cdf, const int64_t[::1] ball_delta,
           const int64_t[::1] ball_start, const int64_t[::1] F_keys, object bit_generator,
           long long step_cap, double t_budget):
    """Returns (sites, ks, times, residual, t_stop, truncated)."""
    cdef bitgen_t* rng = _bitgen(bit_generator)
    cdef vector[int64_t] C
    cdef vector[int64_t] ev_site
    cdef vector[int32_t] ev_k
    cdef vector[double] ev_t
    cdef Py_ssize_t ncum = range_cdf.shape[0]
    cdef Py_ssize_t i, j, n, pos
    cdef int64_t I, s
    cdef int K
    cdef double u1, u2, u3, T = 0.0, T_next
    cdef bint truncated = False
    for i in range(F_keys.shape[0]):
        C.push_back(F_keys[i])
    with bit_generator.lock:
        with nogil:
            while C.size() > 0:
                if step_cap >= 0 and <long long>ev_k.size() >= step_cap:
                    truncated = True
                    break
                u1 = rng.next_double(rng.state)
                u2 = rng.next_double(rng.state)
                u3 = rng.next_double(rng.state)
                n = <Py_ssize_t>C.size()
                j = <Py_ssize_t>(u1 * <double>n)
                if j > n - 1:
                    j = n - 1
                I = C[j]
                K = <int>_first_above(&range_cdf[0], ncum, u2) - 1
                T_next = T - log1p(-u3) / (M * <double>n)
                if T_next >= t_budget:
                    T = t_budget
                    break
                T = T_next
                if K < 0:
                    C.erase(C.begin() + j)
                else:
                    for i in range(ball_start[K], ball_start[K + 1]):
                        s = I + ball_delta[i]
                        pos = _lower_bound(C, s)
                        if pos == <Py_ssize_t>C.size() or C[pos] != s:
                            C.insert(C.begin() + pos, s)
                ev_site.push_back(I)
                ev_k.push_back(K)
                ev_t.push_back(T)
    sites = np.empty(ev_k.size(), dtype=np.int64)
    ks = np.empty(ev_k.size(), dtype=np.int32)
    times = np.empty(ev_k.size(), dtype=np.float64)
    residual = np.empty(C.size(), dtype=np.int64)
    cdef int64_t[::1] vs = sites
    cdef int32_t[::1] vk = ks
    cdef double[::1] vt = times
    cdef int64_t[::1] vr = residual
    for i in range(<Py_ssize_t>ev_k.size()):
        vs[i] = ev_site[i]
        vk[i] = ev_k[i]
        vt[i] = ev_t[i]
    for i in range(<Py_ssize_t>C.size()):
        vr[i] = C[i]
    return sites, ks, times, residual, T, bool(truncated)


def assign(int n_atoms, const double[::1] pm1_cdf, const double[::1] pk_flat, const int64_t[::1] pk_start,
           const int64_t[::1] ball_delta, const int64_t[::1] ball_start, const int64_t[::1] ev_site,
           const int32_t[::1] ev_k, const int64_t[::1] init_keys, const int32_t[::1] init_vals,
           const int64_t[::1] query, object bit_generator):
    """Returns atom indices on ``query`` (-1 where a site was never assigned)."""
    cdef bitgen_t* rng = _bitgen(bit_generator)
    cdef unordered_map[int64_t, int32_t] sigma
    cdef unordered_map[int64_t, int32_t].iterator it
    cdef Py_ssize_t width = n_atoms + 1
    cdef Py_ssize_t idx, i, j
    cdef int64_t I, base, code
    cdef int K
    cdef int err = 0
    cdef double u
    cdef const double* row
    for i in range(init_keys.shape[0]):
        sigma[init_keys[i]] = init_vals[i]
    with bit_generator.lock:
        with nogil:
            for idx in range(ev_k.shape[0] - 1, -1, -1):
                I = ev_site[idx]
                K = ev_k[idx]
                u = rng.next_double(rng.state)
                if K < 0:
                    row = &pm1_cdf[0]
                else:
                    base = pk_start[K]
                    if base < 0:
                        err = 2
                        break
                    code = 0
                    for i in range(ball_start[K], ball_start[K + 1]):
                        it = sigma.find(I + ball_delta[i])
                        if it == sigma.end():
                            err = 1
                            break
                        code = code * n_atoms + deref_value(it)
                    if err:
                        break
                    row = &pk_flat[base + code * width]
                j = _first_above(row, width, u)
                if j < n_atoms:
                    sigma[I] = <int32_t>j
    if err == 1:
        raise KernelConsistencyError("conditioning site still undetermined")
    if err == 2:
        raise KernelConsistencyError("range drawn with lambda = 0")
    out = np.empty(query.shape[0], dtype=np.int32)
    cdef int32_t[::1] vo = out
    for i in range(query.shape[0]):
        it = sigma.find(query[i])
        vo[i] = -1 if it == sigma.end() else deref_value(it)
    return out

