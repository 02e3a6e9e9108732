"""Total p-variation of discrete paths and zero-crossing partitions.

For a sampled path ``x_0, ..., x_n`` and ``p >= 1`` the total p-variation is

    D_p = max over index subsequences 0 = a_0 < ... < a_k = n of
          (sum |x_{a_l} - x_{a_{l-1}}|**p) ** (1/p).

Interior points that are not local extrema never help when ``p >= 1``, so the
maximization may be restricted to extrema. For the slow multiscale component
the extrema sit at the zero crossings of the fast component, which is how
paths are reduced before the dynamic program runs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import DomainError
from .pathsim import RngSeed, _as_generator, sample_crossing_gaps, simulate_z_system


@dataclass(frozen=True, eq=False)
class DiscretePath:
    """Strictly increasing times ``t`` with finite values ``x``."""

    t: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.float64)
        x = np.asarray(self.x, dtype=np.float64)
        if t.ndim != 1 or x.shape != t.shape:
            raise DomainError("t and x must be 1-d of equal length")
        if t.size < 2:
            raise DomainError("a path needs at least two points")
        if np.any(np.diff(t) <= 0):
            raise DomainError("times must be strictly increasing")
        if not np.all(np.isfinite(x)):
            raise DomainError("values must be finite")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)

    @classmethod
    def from_values(cls, x):
        x = np.asarray(x, dtype=np.float64)
        return cls(np.arange(x.size, dtype=np.float64), x)


def _values(path):
    if isinstance(path, DiscretePath):
        return path.x
    x = np.asarray(path, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise DomainError("a path needs at least two points")
    if not np.all(np.isfinite(x)):
        raise DomainError("values must be finite")
    return x


def _check_p(p):
    if not p >= 1:
        raise DomainError(f"p-variation requires p >= 1 (got p={p})")


def pvar_bruteforce(path, p, powered=False):
    """Reference p-variation: full O(n**2) DP over every index, no pruning.

    ``V(j) = max_{i<j} V(i) + |x_j - x_i|**p``; returns ``V(n)**(1/p)``
    (or ``V(n)`` itself with ``powered=True``). Kept deliberately simple: it is
    the oracle the fast path is tested against.
    """
    _check_p(p)
    x = _values(path)
    V = np.zeros(x.size)
    for j in range(1, x.size):
        V[j] = np.max(V[:j] + np.abs(x[j] - x[:j]) ** p)
    return float(V[-1]) if powered else float(V[-1] ** (1.0 / p))


def local_extrema(path):
    """Indices of strict local extrema plus both endpoints.

    A plateau counts once, at its first index. Plateaus touching an endpoint
    are represented by the endpoint.
    """
    x = _values(path)
    n = x.size
    # first index of each run of equal values
    starts = np.flatnonzero(np.r_[True, x[1:] != x[:-1]])
    if starts.size <= 2:
        return np.unique(np.r_[0, n - 1])
    v = x[starts]
    d = np.diff(v)
    turn = np.flatnonzero(d[:-1] * d[1:] < 0) + 1
    interior = starts[turn]
    return np.unique(np.r_[0, interior, n - 1])


def _pvar_power_reduced(x, p):
    value, _ = _backend.pvar_dp(np.ascontiguousarray(x, dtype=np.float64), float(p))
    return value


def pvar_extremal(path, p, powered=False, return_points=False):
    """p-variation by DP restricted to :func:`local_extrema` (compiled kernel).

    Equals :func:`pvar_bruteforce` on every discrete path. With
    ``return_points`` also returns the indices of one maximizing partition.
    """
    _check_p(p)
    x = _values(path)
    idx = local_extrema(x)
    value, links = _backend.pvar_dp(np.ascontiguousarray(x[idx]), float(p))
    out = value if powered else value ** (1.0 / p)
    if not return_points:
        return out
    pts = [idx.size - 1]
    while pts[-1] != 0:
        pts.append(int(links[pts[-1]]))
    return out, idx[np.asarray(pts[::-1])]


def zero_crossings(t, y2):
    """Linearly interpolated times at which ``y2`` changes sign.

    An exact zero sample between opposite signs is a single crossing at that
    grid time; touching zero without a sign change is not a crossing.
    """
    t = np.ascontiguousarray(t, dtype=np.float64)
    y2 = np.ascontiguousarray(y2, dtype=np.float64)
    if t.shape != y2.shape:
        raise DomainError("t and y2 must be aligned")
    times, _ = _backend.crossing_points(t, y2, y2)
    return np.asarray(times)


def crossing_candidates(path):
    """Partition points for the slow path: ``0``, every fast-component crossing, ``T``.

    Returns a :class:`DiscretePath` of times and slow values, the latter
    linearly interpolated at the crossing times.
    """
    t = path.t
    times, vals = _backend.crossing_points(t, path.y2, path.y1)
    # rounding can put an interpolated crossing on a grid point; keep times strictly increasing
    inner = (times > t[0]) & (times < t[-1])
    times, vals = times[inner], vals[inner]
    if times.size > 1:
        ok = np.r_[True, np.diff(times) > 0]
        times, vals = times[ok], vals[ok]
    return DiscretePath(np.r_[t[0], times, t[-1]], np.r_[path.y1[0], vals, path.y1[-1]])


def path_pvar(path, p, powered=False):
    """``D_p`` of the slow component of a :class:`SamplePath`.

    The maximization runs over the crossing candidates, where all extrema of
    the slow path lie. A path without crossings gives ``|Y1_T - Y1_0|``.
    """
    return pvar_extremal(crossing_candidates(path), p, powered=powered)


@dataclass(frozen=True, eq=False)
class CrossingPartition:
    """Zero crossings thinned so that consecutive kept times are more than ``delta`` apart."""

    times: np.ndarray
    delta: float
    n_crossings: int
    includes_origin: bool
    terminal_gap: float
    origin: float = 0.0
    T: float = 0.0

    def partition(self):
        """Full partition ``{origin, t_1, ..., t_N, T}``."""
        return np.r_[self.origin, self.times, self.T]


def delta_spaced(crossings, delta, T, origin=None):
    """Greedy delta-spaced selection of crossings in ``[origin, T]``.

    Without ``origin`` the first crossing is kept; with ``origin`` (the
    zero of the fast component at the start, e.g. ``0.0`` when ``Z2_0 = 0``)
    the first kept crossing is the first one after ``origin + delta``.
    ``n_crossings`` counts kept crossings only, never the endpoints.
    """
    if not delta >= 0:
        raise DomainError("delta must be >= 0")
    c = np.ascontiguousarray(crossings, dtype=np.float64)
    if np.any(np.diff(c) <= 0):
        raise DomainError("crossings must be increasing")
    c = c[c <= T]
    start = 0.0 if origin is None else float(origin)
    kept = np.asarray(_backend.delta_select(c, float(delta), start, origin is not None))
    last = kept[-1] if kept.size else start
    return CrossingPartition(kept, float(delta), int(kept.size), origin is not None, float(T - last), start, float(T))


def partition_pvar_power(path, delta=0.0):
    """Slow-path increments over the delta-spaced crossing partition ``{0, t_1, ..., t_N, T}``.

    ``np.sum(np.abs(incs)**p)`` is the fixed-partition functional; compare
    :func:`path_pvar`, which maximizes over partitions. The origin counts as a
    crossing when the fast component starts exactly at zero.
    """
    cand = crossing_candidates(path)
    inner_t, inner_x = cand.t[1:-1], cand.x[1:-1]
    part = delta_spaced(inner_t, delta, path.T, origin=0.0 if path.y2[0] == 0.0 else None)
    pts = np.searchsorted(inner_t, part.times)
    xs = np.r_[cand.x[0], inner_x[pts], cand.x[-1]]
    return np.diff(xs)


@dataclass(frozen=True)
class CrossingCountStats:
    """Scaled moments of ``N_delta(T)``: ``sqrt(delta) E N`` and ``delta E N**2``."""

    mean_scaled: float
    second_moment_scaled: float
    mean_stderr: float
    second_moment_stderr: float
    replicates: int
    method: str

    def __iter__(self):
        # unpacks as the (mean_scaled, second_moment_scaled) pair
        yield self.mean_scaled
        yield self.second_moment_scaled


def _counts_renewal(T, delta, replicates, rng, batch=4096):
    counts = np.zeros(replicates, dtype=np.int64)
    alive = np.arange(replicates)
    elapsed = np.zeros(replicates)
    while alive.size:
        k = min(batch, max(16, int(2 * (T / max(np.sqrt(delta), 1e-12)))))
        gaps = sample_crossing_gaps(delta, (alive.size, k), rng)
        s = elapsed[:, None] + np.cumsum(gaps, axis=1)
        inside = s <= T
        counts[alive] += inside.sum(axis=1)
        done = ~inside[:, -1]
        elapsed = s[:, -1]
        alive = alive[~done]
        elapsed = elapsed[~done]
    return counts


def _counts_path(T, delta, replicates, seed, dt):
    counts = np.zeros(replicates, dtype=np.int64)
    for r in range(replicates):
        path = simulate_z_system(T, dt=dt, seed=seed.generator(r), allow_coarse=True)
        part = delta_spaced(zero_crossings(path.t, path.y2), delta, path.T, origin=0.0)
        counts[r] = part.n_crossings
    return counts


def crossing_count_stats(T, delta, replicates, seed=RngSeed(0), method="renewal", dt=None):
    """Monte Carlo ``sqrt(delta) E N_delta(T)`` and ``delta E N_delta(T)**2`` for ``Z2_0 = 0``.

    ``method='renewal'`` samples the i.i.d. gaps between selected crossings
    exactly (strong Markov property at each crossing); ``method='path'``
    simulates the unit system on a grid of step ``dt`` (default ``delta/1000``)
    and thins detected crossings with :func:`delta_spaced`. A grid misses
    crossing pairs inside one step, so the path method undercounts unless
    ``dt << delta``.
    """
    if replicates < 1:
        raise DomainError("replicates must be >= 1")
    if not (T > 0 and delta > 0):
        raise DomainError("T and delta must be > 0")
    if not isinstance(seed, RngSeed):
        seed = RngSeed(int(seed))
    if method == "renewal":
        counts = _counts_renewal(T, delta, replicates, _as_generator(seed))
    elif method == "path":
        counts = _counts_path(T, delta, replicates, seed, delta / 1000 if dt is None else dt)
    else:
        raise ValueError(f"unknown method {method!r}")
    a = np.sqrt(delta) * counts
    b = delta * counts.astype(np.float64) ** 2
    se = (lambda v: float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else float("nan"))
    return CrossingCountStats(float(a.mean()), float(b.mean()), se(a), se(b), int(replicates), method)


__all__ = [
    "CrossingCountStats",
    "CrossingPartition",
    "DiscretePath",
    "crossing_candidates",
    "crossing_count_stats",
    "delta_spaced",
    "local_extrema",
    "partition_pvar_power",
    "path_pvar",
    "pvar_bruteforce",
    "pvar_extremal",
    "zero_crossings",
]
