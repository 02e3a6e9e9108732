# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

Every function here has a drop-in twin in :mod:`hompvar._fallback` with the
same signature and the same floating point operation order.
"""
import numpy as np

from libc.math cimport fabs, pow


def ar1_filter(double a, double x0, const double[::1] noise):
    """Return ``x`` with ``x[0] = x0`` and ``x[k+1] = a*x[k] + noise[k]``."""
    cdef Py_ssize_t n = noise.shape[0]
    cdef Py_ssize_t k
    out = np.empty(n + 1, dtype=np.float64)
    cdef double[::1] o = out
    o[0] = x0
    for k in range(n):
        o[k + 1] = a * o[k] + noise[k]
    return out


def crossing_points(const double[::1] t, const double[::1] y2, const double[::1] y1):
    """Sign changes of ``y2`` with linearly interpolated times and ``y1`` values.

    A run of exact zeros between samples of opposite sign is one crossing,
    placed at the first zero of the run. Touches (same sign on both sides of
    a zero run) and leading/trailing zeros are not crossings.
    """
    cdef Py_ssize_t n = y2.shape[0]
    cdef Py_ssize_t k, last = -1
    cdef Py_ssize_t m = 0
    cdef int s, s_last = 0
    cdef double f
    times = np.empty(n, dtype=np.float64)
    vals = np.empty(n, dtype=np.float64)
    cdef double[::1] tt = times
    cdef double[::1] vv = vals
    for k in range(n):
        if y2[k] > 0.0:
            s = 1
        elif y2[k] < 0.0:
            s = -1
        else:
            continue
        if s_last != 0 and s != s_last:
            if k == last + 1:
                f = y2[last] / (y2[last] - y2[k])
                tt[m] = t[last] + f * (t[k] - t[last])
                vv[m] = y1[last] + f * (y1[k] - y1[last])
            else:
                tt[m] = t[last + 1]
                vv[m] = y1[last + 1]
            m += 1
        s_last = s
        last = k
    return times[:m].copy(), vals[:m].copy()


def pvar_dp(const double[::1] x, double p):
    """Maximal ``sum |x[a_k] - x[a_{k-1}]|**p`` over subsequences keeping both ends.

    Returns ``(value, links)`` where ``links[j]`` is the optimal predecessor
    of ``j`` (smallest index on ties). The inner scan runs backwards and stops
    once ``V[i] + D_i**p`` drops below the running best, where ``D_i`` bounds
    ``|x[j] - x[i']|`` for all ``i' <= i`` via prefix extrema; ``V`` is
    nondecreasing so the cut is exact.
    """
    cdef Py_ssize_t m = x.shape[0]
    cdef Py_ssize_t i, j
    cdef double best, c, d1, d2, bound
    V_arr = np.zeros(m, dtype=np.float64)
    lo_arr = np.empty(m, dtype=np.float64)
    hi_arr = np.empty(m, dtype=np.float64)
    links_arr = np.zeros(m, dtype=np.int64)
    cdef double[::1] V = V_arr
    cdef double[::1] lo = lo_arr
    cdef double[::1] hi = hi_arr
    cdef long long[::1] links = links_arr
    if m == 0:
        return 0.0, links_arr
    lo[0] = x[0]
    hi[0] = x[0]
    for i in range(1, m):
        lo[i] = x[i] if x[i] < lo[i - 1] else lo[i - 1]
        hi[i] = x[i] if x[i] > hi[i - 1] else hi[i - 1]
    for j in range(1, m):
        best = -1.0
        i = j - 1
        while i >= 0:
            d1 = x[j] - lo[i]
            d2 = hi[i] - x[j]
            bound = V[i] + pow(d1 if d1 > d2 else d2, p)
            if bound < best:
                break
            c = V[i] + pow(fabs(x[j] - x[i]), p)
            if c >= best:
                best = c
                links[j] = i
            i -= 1
        V[j] = best
    return V[m - 1], links_arr


def delta_select(const double[::1] crossings, double delta, double start, bint use_start):
    """Greedy thinning: keep a crossing only if it lies strictly after ``prev + delta``.

    With ``use_start`` the first reference point is ``start`` (the origin);
    otherwise the first crossing is always kept.
    """
    cdef Py_ssize_t n = crossings.shape[0]
    cdef Py_ssize_t k, m = 0
    cdef double prev
    cdef bint have_prev = use_start
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    prev = start
    for k in range(n):
        if not have_prev or crossings[k] > prev + delta:
            o[m] = crossings[k]
            m += 1
            prev = crossings[k]
            have_prev = True
    return out[:m].copy()
