"""Exact simulation of the multiscale OU system on a uniform grid.

The system is

    dY1 = (sigma / eps) Y2 dt
    dY2 = -(1 / eps**2) Y2 dt + (1 / eps) dW

It is linear, so ``(W_{t+h} - W_t, Y2_{t+h})`` given ``Y2_t`` is jointly
Gaussian and is sampled exactly. ``Y1`` never needs integrating: it satisfies
``Y1_t = y1_0 + sigma W_t - eps sigma (Y2_t - y2_0)`` pathwise.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import ConfigurationError, DomainError

#: default grid step is eps**2 / DEFAULT_STEPS_PER_FAST_TIME
DEFAULT_STEPS_PER_FAST_TIME = 20
#: resolution guard: dt must not exceed eps**2 / MIN_STEPS_PER_FAST_TIME
MIN_STEPS_PER_FAST_TIME = 10


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the multiscale system.

    ``sigma = 0`` is accepted (the slow path is then constant). With
    ``stationary_start`` the initial fast state is drawn from its invariant law
    ``N(0, 1/2)`` and ``y2_0`` is ignored.
    """

    sigma: float = 1.0
    epsilon: float = 0.1
    y1_0: float = 0.0
    y2_0: float = 0.0
    stationary_start: bool = False

    def __post_init__(self):
        if not self.sigma >= 0:
            raise DomainError("sigma must be >= 0")
        if not 0 < self.epsilon < 1:
            raise DomainError("epsilon must lie in (0, 1)")


@dataclass(frozen=True)
class RngSeed:
    """Seed plus stream id; ``generator(*keys)`` derives independent substreams.

    Streams come from :class:`numpy.random.SeedSequence` spawn keys, so the
    same ``(seed, stream_id, keys)`` always yields the same PCG64 stream no
    matter which process or thread asks for it.
    """

    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2**64 and 0 <= int(self.stream_id) < 2**64):
            raise DomainError("seed and stream_id must be unsigned 64-bit integers")

    def generator(self, *keys):
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id), *map(int, keys)))
        return np.random.Generator(np.random.PCG64(ss))


def _as_generator(seed):
    if isinstance(seed, RngSeed):
        return seed.generator()
    if isinstance(seed, np.random.Generator):
        return seed
    return RngSeed(int(seed)).generator()


_CSV_FLOAT_KEYS = ("dt", "sigma", "epsilon", "y1_0", "y2_0")


def _readonly(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SamplePath:
    """Gridded realization ``t_k = k dt`` of ``(Y1, Y2, W)`` (or ``(Z1, Z2, W)``)."""

    dt: float
    y1: np.ndarray
    y2: np.ndarray
    w: np.ndarray
    params: ModelParams | None = field(default=None)

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError("dt must be > 0")
        y1, y2, w = (_readonly(a) for a in (self.y1, self.y2, self.w))
        if not (y1.ndim == y2.ndim == w.ndim == 1 and y1.size == y2.size == w.size):
            raise DomainError("y1, y2 and w must be 1-d with equal length")
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "y2", y2)
        object.__setattr__(self, "w", w)

    @property
    def length(self):
        return self.y1.size

    @property
    def t(self):
        return np.arange(self.length) * self.dt

    @property
    def T(self):
        return (self.length - 1) * self.dt

    def to_csv(self, path, meta=None):
        """Write columns ``t, y1, y2, w`` after a ``#`` metadata block.

        ``meta`` adds extra ``key=value`` comment lines (seed, version, ...).
        """
        with open(path, "w", newline="") as fh:
            for k, v in (meta or {}).items():
                fh.write(f"# {k}={v}\n")
            fh.write(f"# dt={self.dt!r}\n")
            if self.params is not None:
                p = self.params
                fh.write(f"# sigma={p.sigma!r} epsilon={p.epsilon!r} y1_0={p.y1_0!r} y2_0={p.y2_0!r}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "y1", "y2", "w"])
            for row in zip(self.t, self.y1, self.y2, self.w):
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path):
        """Read a file written by :meth:`to_csv` (or any ``t, y1, y2, w`` CSV on a uniform grid)."""
        meta = {}
        rows = []
        with open(path, newline="") as fh:
            lines = []
            for line in fh:
                if line.startswith("#"):
                    for tok in line[1:].split():
                        k, _, v = tok.partition("=")
                        if k in _CSV_FLOAT_KEYS:
                            meta[k] = float(v)
                else:
                    lines.append(line)
        reader = csv.DictReader(lines)
        missing = {"t", "y1", "y2", "w"} - set(reader.fieldnames or ())
        if missing:
            raise DomainError(f"path CSV lacks columns {sorted(missing)}")
        for rec in reader:
            rows.append((float(rec["t"]), float(rec["y1"]), float(rec["y2"]), float(rec["w"])))
        if len(rows) < 2:
            raise DomainError("a path needs at least two grid points")
        arr = np.asarray(rows)
        steps = np.diff(arr[:, 0])
        dt = meta.get("dt", float(steps.mean()))
        if np.max(np.abs(steps - dt)) > 1e-9 * max(1.0, abs(arr[-1, 0])):
            raise DomainError("time column is not a uniform grid")
        params = None
        if "epsilon" in meta:
            params = ModelParams(
                sigma=meta.get("sigma", 1.0),
                epsilon=meta["epsilon"],
                y1_0=meta.get("y1_0", arr[0, 1]),
                y2_0=meta.get("y2_0", arr[0, 2]),
            )
        return cls(dt, arr[:, 1], arr[:, 2], arr[:, 3], params)


def _cholesky_factors(h, epsilon):
    """Lower Cholesky factor of ``Cov(dW, OU noise)`` for one step of size ``h``.

    With ``x = h / eps**2``: ``Var dW = h``, ``Var noise = (1 - e^{-2x})/2``,
    ``Cov = eps (1 - e^{-x})``. The Schur complement is expanded in series for
    small ``x`` where direct subtraction cancels.
    """
    x = h / epsilon**2
    l11 = math.sqrt(h)
    l21 = -math.expm1(-x) / math.sqrt(x)
    if x < 0.05:
        s = x**3 * (
            1 / 12 - x / 12 + 17 * x**2 / 360 - 7 * x**3 / 360 + 43 * x**4 / 6720 - 107 * x**5 / 60480
        )
    else:
        s = -math.expm1(-2.0 * x) / 2.0 - l21 * l21
    return l11, l21, math.sqrt(max(s, 0.0))


def exact_transition(y2, h, epsilon, gauss_pair):
    """One exact step of ``(W, Y2)``.

    Parameters
    ----------
    y2 : float or ndarray
        Current fast state.
    h : float
        Step size, ``h > 0``.
    epsilon : float
        Scale separation.
    gauss_pair : array_like, shape (2,) or (2, n)
        Independent standard normals.

    Returns
    -------
    delta_w, y2_next
    """
    if not h > 0:
        raise DomainError("h must be > 0")
    if not epsilon > 0:
        raise DomainError("epsilon must be > 0")
    g1, g2 = np.asarray(gauss_pair, dtype=np.float64)
    l11, l21, l22 = _cholesky_factors(h, epsilon)
    decay = math.exp(-h / epsilon**2)
    delta_w = l11 * g1
    y2_next = decay * np.asarray(y2, dtype=np.float64) + l21 * g1 + l22 * g2
    if np.ndim(delta_w) == 0:
        return float(delta_w), float(y2_next)
    return delta_w, y2_next


def _simulate(n, dt, epsilon, y2_0, rng):
    g = rng.standard_normal((n, 2))
    l11, l21, l22 = _cholesky_factors(dt, epsilon)
    decay = math.exp(-dt / epsilon**2)
    dw = l11 * g[:, 0]
    noise = l21 * g[:, 0] + l22 * g[:, 1]
    y2 = _backend.ar1_filter(decay, float(y2_0), np.ascontiguousarray(noise))
    w = np.empty(n + 1)
    w[0] = 0.0
    np.cumsum(dw, out=w[1:])
    return np.asarray(y2), w


def _n_steps(T, dt):
    if not dt > 0:
        raise DomainError("dt must be > 0")
    if not T >= dt * (1 - 1e-12):
        raise DomainError("T must be >= dt")
    return max(1, int(round(T / dt)))


def simulate_system(params, T, dt=None, seed=0, allow_coarse=False):
    """Simulate ``(Y1, Y2, W)`` on ``[0, n dt]`` with ``n = round(T / dt)``.

    ``dt`` defaults to ``eps**2 / 20``. A step coarser than ``eps**2 / 10``
    raises :class:`ConfigurationError` unless ``allow_coarse`` is set.
    """
    eps = params.epsilon
    if dt is None:
        dt = eps**2 / DEFAULT_STEPS_PER_FAST_TIME
    if dt > eps**2 / MIN_STEPS_PER_FAST_TIME * (1 + 1e-12) and not allow_coarse:
        raise ConfigurationError(
            f"dt={dt:g} does not resolve the fast scale eps**2={eps**2:g}; pass allow_coarse=True to override"
        )
    n = _n_steps(T, dt)
    rng = _as_generator(seed)
    y2_0 = rng.standard_normal() * math.sqrt(0.5) if params.stationary_start else params.y2_0
    y2, w = _simulate(n, dt, eps, y2_0, rng)
    y1 = params.y1_0 + params.sigma * w - eps * params.sigma * (y2 - y2_0)
    used = params if not params.stationary_start else ModelParams(
        params.sigma, eps, params.y1_0, float(y2_0), True
    )
    return SamplePath(dt, y1, y2, w, used)


def simulate_z_system(T, dt=0.05, seed=0, z2_0=0.0, allow_coarse=False):
    """Simulate the unit system ``dZ1 = Z2 dt``, ``dZ2 = -Z2 dt + dW`` with ``Z1_0 = 0``."""
    if dt > 0.1 * (1 + 1e-12) and not allow_coarse:
        raise ConfigurationError("dt must be <= 0.1 for the unit system")
    n = _n_steps(T, dt)
    z2, w = _simulate(n, dt, 1.0, z2_0, _as_generator(seed))
    z1 = w - (z2 - z2_0)
    return SamplePath(dt, z1, z2, w, None)


def sample_first_passage(z, rng):
    """Exact draws of the first zero hit of the unit OU process started at ``z``.

    Uses ``Z_t = e^{-t}(z + B((e^{2t} - 1)/2))`` and the Brownian hitting time
    ``z**2 / G**2`` of level ``|z|``.
    """
    z = np.asarray(z, dtype=np.float64)
    g = rng.standard_normal(z.shape)
    with np.errstate(divide="ignore"):
        return 0.5 * np.log1p(2.0 * z * z / (g * g))


def sample_crossing_gaps(delta, size, rng):
    """Exact draws of ``tau_delta``: first zero of ``Z2`` after ``delta`` given ``Z2_0 = 0``."""
    if not delta > 0:
        raise DomainError("delta must be > 0")
    z = rng.standard_normal(size) * math.sqrt(-math.expm1(-2.0 * delta) / 2.0)
    return delta + sample_first_passage(z, rng)
