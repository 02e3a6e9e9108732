"""Monte Carlo sweeps over scale separation and log-log exponent fits.

Each cell of a sweep has ``T = eps**alpha``; for the QV family the
subsampling step is ``delta = eps**(alpha + beta)``. Replicate ``r`` of cell
``k`` always draws from the stream ``seed.generator(k, r)``, and replicates
are aggregated chunk by chunk in a fixed order. Results therefore depend on
neither the worker count nor the scheduling.
"""
from __future__ import annotations

import csv
import hashlib
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import __version__
from .constants import constant_table
from .errors import ConfigurationError, DomainError, NumericalError
from .estimators import calibrate_epsilon, pvar_estimate_hat, pvar_estimate_tilde, qv_subsampled
from .pathsim import DEFAULT_STEPS_PER_FAST_TIME, ModelParams, RngSeed, simulate_system
from .pvar import path_pvar

FAMILIES = ("qv", "pvar-hat", "pvar-tilde")

#: refuse sweeps that would simulate more grid steps than this
DEFAULT_MAX_STEPS = 10**9

DEFAULT_CHUNK = 250


# ---------------------------------------------------------------- aggregation


@dataclass
class Moments:
    """Welford accumulator; :meth:`merge` is the parallel (Chan et al.) update."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, values):
        v = np.asarray(values, dtype=np.float64)
        if v.size == 0:
            return cls()
        mu = float(v.mean())
        return cls(int(v.size), mu, float(np.sum((v - mu) ** 2)))

    def merge(self, other):
        if other.n == 0:
            return Moments(self.n, self.mean, self.m2)
        if self.n == 0:
            return Moments(other.n, other.mean, other.m2)
        n = self.n + other.n
        d = other.mean - self.mean
        mean = self.mean + d * other.n / n
        m2 = self.m2 + other.m2 + d * d * self.n * other.n / n
        return Moments(n, mean, m2)

    @property
    def variance(self):
        return self.m2 / (self.n - 1) if self.n > 1 else math.nan

    @property
    def stderr(self):
        return math.sqrt(self.variance / self.n) if self.n > 1 else math.nan


# ---------------------------------------------------------------- config


@dataclass(frozen=True)
class SweepConfig:
    """Sweep definition.

    ``family_param`` is ``beta`` for ``qv`` and ``p`` for the p-variation
    families; ``None`` picks the optimal ``beta`` or ``p = 2 - alpha``.
    ``dt_rule`` is the number of grid steps per fast time unit ``eps**2``.
    """

    epsilon_grid: tuple
    alpha: float = 0.0
    family: str = "qv"
    family_param: float | None = None
    replicates: int = 2000
    sigma: float = 1.0
    seed: RngSeed = field(default_factory=RngSeed)
    dt_rule: int = DEFAULT_STEPS_PER_FAST_TIME
    chunk: int = DEFAULT_CHUNK
    workers: int = 1
    max_steps: int = DEFAULT_MAX_STEPS
    stationary_start: bool = False

    def __post_init__(self):
        grid = tuple(float(e) for e in np.atleast_1d(self.epsilon_grid))
        object.__setattr__(self, "epsilon_grid", grid)
        if not grid:
            raise ConfigurationError("epsilon_grid is empty")
        if any(not 0 < e < 1 for e in grid):
            raise ConfigurationError("every epsilon must lie in (0, 1)")
        if self.family not in FAMILIES:
            raise ConfigurationError(f"family must be one of {FAMILIES}")
        if self.replicates < 1:
            raise ConfigurationError("replicates must be >= 1")
        if self.dt_rule < 1 or self.chunk < 1 or self.workers < 1:
            raise ConfigurationError("dt_rule, chunk and workers must be >= 1")
        if not self.sigma >= 0:
            raise ConfigurationError("sigma must be >= 0")
        if not self.alpha >= 0:
            raise ConfigurationError("alpha must be >= 0")
        if self.family == "qv" and not self.alpha < 2:
            raise ConfigurationError("qv sweeps need alpha < 2")
        param = self.resolved_param
        if self.family != "qv":
            lo_ok = param > 1.0
            hi_ok = param <= 2.0 if self.family == "pvar-hat" else param < 2.0
            if not (lo_ok and hi_ok):
                raise ConfigurationError(f"p={param:g} outside the range allowed for {self.family}")
            if self.family == "pvar-tilde" and self.alpha <= 0:
                raise ConfigurationError("pvar-tilde needs T = eps**alpha < 1, i.e. alpha > 0")
        elif not param > 0:
            raise ConfigurationError("beta must be > 0")

    @property
    def resolved_param(self):
        if self.family_param is not None:
            return float(self.family_param)
        if self.family == "qv":
            return (4.0 - 2.0 * self.alpha) / 3.0
        return 2.0 - self.alpha

    def cell(self, epsilon):
        """``(T, delta_or_p, dt)`` for one grid point."""
        T = epsilon**self.alpha
        dt = epsilon**2 / self.dt_rule
        if self.family == "qv":
            return T, epsilon ** (self.alpha + self.resolved_param), dt
        return T, self.resolved_param, dt

    def truth(self):
        if self.family == "qv":
            return self.sigma**2
        return self.sigma**self.resolved_param

    def echo(self):
        """Canonical ``key=value`` text; its SHA-256 is the config hash."""
        items = [
            ("family", self.family),
            ("epsilon_grid", ",".join(repr(e) for e in self.epsilon_grid)),
            ("alpha", repr(float(self.alpha))),
            ("family_param", repr(self.resolved_param)),
            ("replicates", str(self.replicates)),
            ("sigma", repr(float(self.sigma))),
            ("seed", str(self.seed.seed)),
            ("stream_id", str(self.seed.stream_id)),
            ("dt_rule", str(self.dt_rule)),
            ("chunk", str(self.chunk)),
            ("max_steps", str(self.max_steps)),
            ("stationary_start", str(bool(self.stationary_start)).lower()),
        ]
        return "".join(f"{k}={v}\n" for k, v in items)


def config_hash(text):
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def predicted_rmse_slope(family, alpha, param):
    """Predicted exponent of ``rmse ~ eps**slope``.

    QV: ``min(4 - 2(alpha+beta), 2 - alpha, beta)/2``, which is ``(2-alpha)/3``
    at the optimal ``beta``. Hat family: ``(2 - alpha)/2``. Tilde family:
    ``(2-alpha)/2`` at ``p = 2 - alpha``; otherwise the bias factor
    ``eps**(p + alpha - 2)`` dominates.
    """
    if family == "qv":
        return min(4.0 - 2.0 * (alpha + param), 2.0 - alpha, param) / 2.0
    if family == "pvar-hat":
        return (2.0 - alpha) / 2.0
    gap = param + alpha - 2.0
    if abs(gap) < 1e-12:
        return (2.0 - alpha) / 2.0
    return min(gap, 0.0)


# ---------------------------------------------------------------- results


@dataclass(frozen=True)
class CellResult:
    epsilon: float
    T: float
    delta_or_p: float
    mean: float
    mse: float
    rmse: float
    mc_stderr: float
    mse_stderr: float
    replicates: int

    COLUMNS = ("epsilon", "T", "delta_or_p", "mean", "mse", "rmse", "mc_stderr", "mse_stderr", "replicates")

    def as_row(self):
        return [getattr(self, k) for k in self.COLUMNS]


@dataclass(frozen=True)
class SweepResult:
    """Per-cell rows plus the log-log fit; ``fitted_slope`` is NaN with fewer than 3 cells."""

    rows: tuple
    fitted_slope: float
    slope_stderr: float
    predicted_slope: float
    fit_on: str = "rmse"
    label: str = ""
    config_echo: str = ""

    def fit_row(self):
        return [self.label, self.fit_on, self.fitted_slope, self.slope_stderr, self.predicted_slope, len(self.rows)]


def fit_scaling_exponent(pairs):
    """Least-squares slope of ``log y`` on ``log eps`` and its standard error.

    Parameters
    ----------
    pairs : sequence of (epsilon, y)
        At least three points, all positive.
    """
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 3:
        raise DomainError("need at least three (epsilon, value) pairs")
    if np.any(~(arr > 0)):
        raise DomainError("epsilon and value must be positive")
    fit = stats.linregress(np.log(arr[:, 0]), np.log(arr[:, 1]))
    return float(fit.slope), float(fit.stderr)


def _fit_or_nan(eps, y):
    if len(eps) < 3 or not np.all(np.asarray(y) > 0):
        return math.nan, math.nan
    return fit_scaling_exponent(list(zip(eps, y)))


# ---------------------------------------------------------------- replicates


def _one_value(family, param, params, T, delta, dt, rng):
    path = simulate_system(params, T, dt=dt, seed=rng, allow_coarse=True)
    if family == "qv":
        return qv_subsampled(path, delta).value
    if family == "pvar-hat":
        return pvar_estimate_hat(path, param, epsilon=params.epsilon, constants=constant_table(param)).value
    return pvar_estimate_tilde(path, param, constants=constant_table(param)).value


def _chunk_values(job):
    kind, args, cell, r0, r1, seed = job
    out = np.empty(r1 - r0)
    for j, r in enumerate(range(r0, r1)):
        rng = seed.generator(cell, r)
        if kind == "estimate":
            out[j] = _one_value(*args, rng)
        elif kind == "dp":
            p, params, T, dt = args
            out[j] = path_pvar(simulate_system(params, T, dt=dt, seed=rng, allow_coarse=True), p)
        elif kind == "eps":
            params, T, dt, p_grid = args
            path = simulate_system(params, T, dt=dt, seed=rng, allow_coarse=True)
            out[j] = calibrate_epsilon(path, p_grid=p_grid).epsilon_hat
        else:
            raise ValueError(kind)
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"non-finite replicate value in cell {cell}")
    return out


def _run_jobs(jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [_chunk_values(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_chunk_values, jobs))


def _chunks(replicates, chunk):
    return [(r, min(r + chunk, replicates)) for r in range(0, replicates, chunk)]


def _check_budget(cells, replicates, max_steps):
    costs = [(replicates * max(1, round(T / dt)), eps) for eps, T, dt in cells]
    total = sum(c for c, _ in costs)
    if total > max_steps:
        worst, eps = max(costs)
        raise ConfigurationError(
            f"sweep needs {total:.3g} grid steps (cap {max_steps:.3g}); binding cell eps={eps:g} needs {worst:.3g}"
        )


def _aggregate(values_by_chunk, truth):
    mom = Moments()
    sq = Moments()
    for v in values_by_chunk:
        mom = mom.merge(Moments.of(v))
        sq = sq.merge(Moments.of((v - truth) ** 2))
    return mom, sq


def run_sweep(config):
    """Monte Carlo mean and MSE per ``eps`` cell and the fitted root-MSE slope."""
    cells = [(e, *config.cell(e)) for e in config.epsilon_grid]
    _check_budget([(e, T, dt) for e, T, _, dt in cells], config.replicates, config.max_steps)
    param = config.resolved_param
    truth = config.truth()
    jobs, owners = [], []
    for k, (eps, T, dod, dt) in enumerate(cells):
        params = ModelParams(config.sigma, eps, stationary_start=config.stationary_start)
        delta = dod if config.family == "qv" else None
        for r0, r1 in _chunks(config.replicates, config.chunk):
            jobs.append(("estimate", (config.family, param, params, T, delta, dt), k, r0, r1, config.seed))
            owners.append(k)
    values = _run_jobs(jobs, config.workers)
    rows = []
    for k, (eps, T, dod, _) in enumerate(cells):
        mom, sq = _aggregate([v for v, o in zip(values, owners) if o == k], truth)
        rows.append(CellResult(eps, T, dod, mom.mean, sq.mean, math.sqrt(sq.mean), mom.stderr, sq.stderr, mom.n))
    slope, se = _fit_or_nan([r.epsilon for r in rows], [r.rmse for r in rows])
    label = f"{config.family} alpha={config.alpha:g} param={param:g}"
    return SweepResult(
        tuple(rows), slope, se, predicted_rmse_slope(config.family, config.alpha, param), "rmse", label, config.echo()
    )


def run_dp_scale_probe(
    epsilon_grid, alpha, p, replicates, seed=RngSeed(0), sigma=1.0, dt_rule=DEFAULT_STEPS_PER_FAST_TIME,
    workers=1, chunk=DEFAULT_CHUNK, max_steps=DEFAULT_MAX_STEPS,
):
    """MC mean of ``D_p(Y1)`` over ``[0, eps**alpha]`` and its slope in ``eps``.

    The prediction is ``1 + (alpha - 2)/p``. Rows report the sample variance
    in the ``mse``/``rmse`` columns since there is no target value.
    """
    if not 1 < alpha < 2:
        raise ConfigurationError("the scale probe needs alpha in (1, 2)")
    if not p > 1:
        raise ConfigurationError("the scale probe needs p > 1")
    if replicates < 1:
        raise ConfigurationError("replicates must be >= 1")
    grid = [float(e) for e in np.atleast_1d(epsilon_grid)]
    if not grid or any(not 0 < e < 1 for e in grid):
        raise ConfigurationError("every epsilon must lie in (0, 1)")
    cells = [(e, e**alpha, e**2 / dt_rule) for e in grid]
    _check_budget(cells, replicates, max_steps)
    jobs, owners = [], []
    for k, (eps, T, dt) in enumerate(cells):
        for r0, r1 in _chunks(replicates, chunk):
            jobs.append(("dp", (float(p), ModelParams(sigma, eps), T, dt), k, r0, r1, seed))
            owners.append(k)
    values = _run_jobs(jobs, workers)
    rows = []
    for k, (eps, T, _) in enumerate(cells):
        mom, _ = _aggregate([v for v, o in zip(values, owners) if o == k], 0.0)
        var = mom.variance if mom.n > 1 else 0.0
        rows.append(CellResult(eps, T, float(p), mom.mean, var, math.sqrt(var), mom.stderr, math.nan, mom.n))
    slope, se = _fit_or_nan([r.epsilon for r in rows], [r.mean for r in rows])
    echo = (
        f"command=dp-scale-probe\nepsilon_grid={','.join(repr(e) for e in grid)}\nalpha={alpha!r}\np={float(p)!r}\n"
        f"replicates={replicates}\nsigma={float(sigma)!r}\nseed={seed.seed}\nstream_id={seed.stream_id}\n"
        f"dt_rule={dt_rule}\nchunk={chunk}\n"
    )
    return SweepResult(tuple(rows), slope, se, 1.0 + (alpha - 2.0) / p, "mean", f"dp alpha={alpha:g} p={p:g}", echo)


@dataclass(frozen=True)
class RecoveryRow:
    epsilon: float
    T: float
    median: float
    q25: float
    q75: float
    replicates: int

    COLUMNS = ("epsilon", "T", "median", "q25", "q75", "replicates")

    def as_row(self):
        return [getattr(self, k) for k in self.COLUMNS]


def run_eps_recovery(
    true_epsilon_grid, alpha, replicates, seed=RngSeed(0), sigma=1.0, p_grid=None,
    dt_rule=DEFAULT_STEPS_PER_FAST_TIME, workers=1, chunk=DEFAULT_CHUNK, return_samples=False,
):
    """Median and interquartile range of ``eps_hat`` from :func:`calibrate_epsilon` per true ``eps``."""
    if not 0 < alpha <= 1:
        raise ConfigurationError("eps recovery needs alpha in (0, 1] so that T = eps**alpha < 1")
    if replicates < 1:
        raise ConfigurationError("replicates must be >= 1")
    grid = [float(e) for e in np.atleast_1d(true_epsilon_grid)]
    if not grid or any(not 0 < e < 1 for e in grid):
        raise ConfigurationError("every epsilon must lie in (0, 1)")
    jobs, owners = [], []
    for k, eps in enumerate(grid):
        T = eps**alpha
        for r0, r1 in _chunks(replicates, chunk):
            jobs.append(("eps", (ModelParams(sigma, eps), T, eps**2 / dt_rule, p_grid), k, r0, r1, seed))
            owners.append(k)
    values = _run_jobs(jobs, workers)
    rows, samples = [], []
    for k, eps in enumerate(grid):
        v = np.concatenate([x for x, o in zip(values, owners) if o == k])
        q25, med, q75 = np.percentile(v, [25, 50, 75])
        rows.append(RecoveryRow(eps, eps**alpha, float(med), float(q25), float(q75), int(v.size)))
        samples.append(v)
    return (rows, samples) if return_samples else rows


# ---------------------------------------------------------------- CSV output


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(columns, rows, meta):
    """CSV with a ``#`` metadata block (version, seed, config hash, extras) then a header row."""
    buf = io.StringIO()
    buf.write(f"# hompvar version={__version__}\n")
    for k, v in meta.items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _meta(echo, seed):
    return {"seed": f"{seed.seed}", "stream_id": f"{seed.stream_id}", "config_hash": config_hash(echo)}


def write_sweep(result, out_dir, seed):
    """Write ``cells.csv``, ``fit.csv`` and ``config.echo`` into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    meta = _meta(result.config_echo, seed)
    with open(os.path.join(out_dir, "cells.csv"), "w", newline="") as fh:
        fh.write(csv_text(CellResult.COLUMNS, [r.as_row() for r in result.rows], meta))
    with open(os.path.join(out_dir, "fit.csv"), "w", newline="") as fh:
        fh.write(
            csv_text(
                ("label", "fit_on", "fitted_slope", "slope_stderr", "predicted_slope", "cells"),
                [result.fit_row()],
                meta,
            )
        )
    with open(os.path.join(out_dir, "config.echo"), "w") as fh:
        fh.write(result.config_echo)


def write_recovery(rows, out_dir, echo, seed):
    """Like :func:`write_sweep`; ``fit.csv`` holds the slope of median ``eps_hat`` against ``eps`` (ideal 1)."""
    os.makedirs(out_dir, exist_ok=True)
    meta = _meta(echo, seed)
    with open(os.path.join(out_dir, "cells.csv"), "w", newline="") as fh:
        fh.write(csv_text(RecoveryRow.COLUMNS, [r.as_row() for r in rows], meta))
    slope, se = _fit_or_nan([r.epsilon for r in rows], [r.median for r in rows])
    with open(os.path.join(out_dir, "fit.csv"), "w", newline="") as fh:
        fh.write(
            csv_text(
                ("label", "fit_on", "fitted_slope", "slope_stderr", "predicted_slope", "cells"),
                [["eps-recovery", "median", slope, se, 1.0, len(rows)]],
                meta,
            )
        )
    with open(os.path.join(out_dir, "config.echo"), "w") as fh:
        fh.write(echo)


__all__ = [
    "CellResult",
    "Moments",
    "RecoveryRow",
    "SweepConfig",
    "SweepResult",
    "config_hash",
    "csv_text",
    "fit_scaling_exponent",
    "predicted_rmse_slope",
    "run_dp_scale_probe",
    "run_eps_recovery",
    "run_sweep",
    "write_recovery",
    "write_sweep",
]
