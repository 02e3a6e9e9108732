"""Pure-Python/numpy versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np
from scipy.signal import lfilter


def ar1_filter(a, x0, noise):
    noise = np.asarray(noise, dtype=np.float64)
    out = np.empty(noise.size + 1)
    out[0] = x0
    if noise.size:
        out[1:], _ = lfilter([1.0], [1.0, -a], noise, zi=[a * x0])
    return out


def crossing_points(t, y2, y1):
    t = np.asarray(t, dtype=np.float64)
    y2 = np.asarray(y2, dtype=np.float64)
    y1 = np.asarray(y1, dtype=np.float64)
    nz = np.flatnonzero(y2 != 0.0)
    if nz.size < 2:
        return np.empty(0), np.empty(0)
    sgn = np.sign(y2[nz])
    flip = np.flatnonzero(sgn[1:] != sgn[:-1])
    i = nz[flip]
    k = nz[flip + 1]
    adj = k == i + 1
    f = np.where(adj, y2[i] / np.where(adj, y2[i] - y2[k], 1.0), 0.0)
    times = np.where(adj, t[i] + f * (t[k] - t[i]), t[np.minimum(i + 1, t.size - 1)])
    vals = np.where(adj, y1[i] + f * (y1[k] - y1[i]), y1[np.minimum(i + 1, y1.size - 1)])
    return times, vals


def pvar_dp(x, p):
    x = np.asarray(x, dtype=np.float64)
    m = x.size
    V = np.zeros(m)
    links = np.zeros(m, dtype=np.int64)
    for j in range(1, m):
        row = V[:j] + np.abs(x[j] - x[:j]) ** p
        # np.argmax returns the first maximum: smallest index on ties
        i = int(np.argmax(row))
        links[j] = i
        V[j] = row[i]
    return (float(V[-1]) if m else 0.0), links


def delta_select(crossings, delta, start, use_start):
    out = []
    have_prev = bool(use_start)
    prev = start
    for c in np.asarray(crossings, dtype=np.float64):
        if not have_prev or c > prev + delta:
            out.append(c)
            prev = c
            have_prev = True
    return np.asarray(out, dtype=np.float64)
