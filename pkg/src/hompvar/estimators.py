"""Estimators of the homogenized diffusion coefficient from slow-path data.

Three families are provided:

* ``qv_subsampled``: realized quadratic variation on a grid of spacing
  ``delta``, the classical subsampling baseline, with its exact L2 error
  :func:`qv_mse_exact`.
* ``pvar_hat``: ``D_p(Y1)**p / (eps**(p-2) c_p T)``, which needs ``eps``
  unless ``p = 2``.
* ``pvar_tilde``: ``D_p(Y1)**p / c_p``, whose bias vanishes when
  ``T = eps**(2 - p)``; comparing it with the ``p = 2`` hat estimator gives
  :func:`calibrate_epsilon`.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _backend
from .constants import ConstantTable, constant_table
from .errors import DomainError, NumericalError
from .pvar import crossing_candidates, local_extrema, path_pvar

FAMILIES = ("qv_subsampled", "pvar_hat", "pvar_tilde")

#: default calibration grid 1.01, 1.02, ..., 1.99
DEFAULT_P_GRID = np.round(np.arange(101, 200) / 100.0, 2)


@dataclass(frozen=True)
class Estimate:
    """One estimator output.

    ``normalization`` is the constant the raw functional was divided by:
    ``N delta`` for QV, ``eps**(p-2) c_p T`` for the hat family and ``c_p``
    for the tilde family. Parameters that do not apply to a family are ``None``.
    """

    value: float
    family: str
    T: float
    normalization: float
    p: float | None = None
    delta: float | None = None
    epsilon_assumed: float | None = None
    raw: float = field(default=math.nan, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown estimator family {self.family!r}")
        if not math.isfinite(self.value):
            raise NumericalError(f"{self.family} produced a non-finite value")

    #: column order used by :meth:`as_row`
    COLUMNS = ("family", "value", "p", "delta", "T", "epsilon_assumed", "normalization")

    def as_row(self):
        d = asdict(self)
        return ["" if d[k] is None else d[k] for k in self.COLUMNS]


def _snap_delta(delta, dt):
    stride = int(round(delta / dt))
    if stride < 1:
        raise DomainError(f"delta={delta:g} is below the grid step dt={dt:g}")
    return stride, stride * dt


def qv_subsampled(path, delta):
    """Subsampled quadratic variation ``sum (Y1_{i delta} - Y1_{(i-1) delta})**2 / (N delta)``.

    ``delta`` is snapped to the nearest multiple of ``path.dt`` (recorded in
    the result) and ``N = floor(T / delta)``; a trailing partial interval is
    dropped.
    """
    if not delta > 0:
        raise DomainError("delta must be > 0")
    if delta > path.T * (1 + 1e-12):
        raise DomainError(f"delta={delta:g} exceeds the horizon T={path.T:g}")
    stride, snapped = _snap_delta(delta, path.dt)
    n_int = (path.length - 1) // stride
    if n_int < 1:
        raise DomainError("snapped delta leaves no complete interval")
    y = path.y1[: n_int * stride + 1 : stride]
    raw = float(np.sum(np.diff(y) ** 2))
    norm = n_int * snapped
    return Estimate(raw / norm, "qv_subsampled", path.T, norm, delta=snapped, raw=raw)


def qv_mse_exact(epsilon, delta, N):
    """Exact normalized MSE ``E(sigma2_hat - sigma**2)**2 / sigma**4`` of :func:`qv_subsampled`.

    Valid for a stationary fast component, ``Y2_0 ~ N(0, 1/2)``. Written in
    ``x = delta/eps**2`` with ``g = (1 - e^{-x})/x`` so that neither regime
    ``x -> 0`` nor ``x -> inf`` cancels catastrophically.
    """
    if not (epsilon > 0 and delta > 0 and N >= 1):
        raise DomainError("epsilon, delta and N must be positive")
    x = delta / epsilon**2
    r = math.exp(-x)
    g = -math.expm1(-x) / x
    bias = g * g
    middle = (2.0 - 4.0 * g + g * g * (3.0 + r) / (1.0 + r)) / N
    tail = (g / (1.0 + r)) ** 2 * math.expm1(-2.0 * x * N) / N**2
    return bias + middle + tail


def qv_optimal_beta(alpha):
    """Optimal subsampling exponent ``beta = (4 - 2 alpha)/3`` for ``T = eps**alpha``.

    Returns ``(beta, error_order)`` where the root-MSE is ``O(eps**error_order)``
    and ``error_order = (2 - alpha)/3``.
    """
    if not 0 <= alpha < 2:
        raise DomainError("alpha must lie in [0, 2)")
    return (4.0 - 2.0 * alpha) / 3.0, (2.0 - alpha) / 3.0


def _table_for(p, constants):
    if constants is None:
        return constant_table(p)
    if not isinstance(constants, ConstantTable):
        raise DomainError("constants must be a ConstantTable")
    if constants.p != p:
        raise DomainError(f"constant table is for p={constants.p}, not p={p}")
    return constants


def _c_p(p, constants):
    # c_2 = a_2 K_1 / sqrt 2 = 1 exactly
    return 1.0 if p == 2.0 else _table_for(p, constants).c_p


def pvar_estimate_hat(path, p, epsilon=None, constants=None):
    """Normalized p-variation estimate of ``sigma**p``.

    Parameters
    ----------
    path : SamplePath
    p : float
        Exponent in ``(1, 2]``.
    epsilon : float, optional
        Scale separation. Ignored at ``p = 2``; otherwise taken from
        ``path.params`` when omitted.
    constants : ConstantTable, optional
        Precomputed table for ``p``.
    """
    p = float(p)
    if not 1.0 < p <= 2.0:
        raise DomainError("pvar_hat requires p in (1, 2]")
    if p != 2.0:
        if epsilon is None:
            epsilon = path.params.epsilon if path.params is not None else None
        if epsilon is None or not epsilon > 0:
            raise DomainError("pvar_hat with p < 2 needs a positive epsilon")
    T = path.T
    scale = 1.0 if p == 2.0 else float(epsilon) ** (p - 2.0)
    norm = scale * _c_p(p, constants) * T
    raw = path_pvar(path, p, powered=True)
    eps_out = None if p == 2.0 else float(epsilon)
    return Estimate(raw / norm, "pvar_hat", T, norm, p=p, epsilon_assumed=eps_out, raw=raw)


def pvar_estimate_tilde(path, p, constants=None):
    """``D_p(Y1)**p / c_p``: no ``eps`` needed, unbiased only when ``T = eps**(2 - p)``."""
    p = float(p)
    if not 1.0 < p < 2.0:
        raise DomainError("pvar_tilde requires p in (1, 2)")
    if not path.T < 1.0:
        raise DomainError("pvar_tilde assumes a horizon T < 1")
    c = _table_for(p, constants).c_p
    raw = path_pvar(path, p, powered=True)
    return Estimate(raw / c, "pvar_tilde", path.T, c, p=p, raw=raw)


@dataclass(frozen=True, eq=False)
class EpsilonCalibration:
    """Result of :func:`calibrate_epsilon`; ``objective_curve`` has columns ``(p, objective)``."""

    p_hat: float
    alpha_hat: float
    epsilon_hat: float
    objective_curve: np.ndarray
    sigma2_hat: float
    T: float


def calibrate_from_estimates(p_grid, tilde_values, sigma2_hat, T):
    """Calibration step given ``sigma_tilde**p`` on a grid and the ``p = 2`` estimate.

    Minimizes ``|tilde**(1/p) - sqrt(sigma2_hat)|``; ties go to the smallest ``p``.
    """
    p_grid = np.asarray(p_grid, dtype=np.float64)
    tilde_values = np.asarray(tilde_values, dtype=np.float64)
    if p_grid.size == 0:
        raise DomainError("p_grid is empty")
    if p_grid.shape != tilde_values.shape:
        raise DomainError("p_grid and tilde_values must align")
    if np.any(np.diff(p_grid) <= 0) or p_grid[0] <= 1.0 or p_grid[-1] >= 2.0:
        raise DomainError("p_grid must be increasing inside (1, 2)")
    if not 0 < T < 1:
        raise DomainError("calibration needs 0 < T < 1")
    obj = np.abs(tilde_values ** (1.0 / p_grid) - math.sqrt(sigma2_hat))
    if not np.all(np.isfinite(obj)):
        raise NumericalError("calibration objective is not finite")
    # np.argmin returns the first minimum, i.e. the smallest p
    k = int(np.argmin(obj))
    p_hat = float(p_grid[k])
    alpha_hat = 2.0 - p_hat
    eps_hat = T ** (1.0 / alpha_hat)
    return EpsilonCalibration(p_hat, alpha_hat, eps_hat, np.column_stack([p_grid, obj]), float(sigma2_hat), float(T))


def calibrate_epsilon(path, T=None, p_grid=None, constants=None):
    """Estimate ``eps`` from a single path without knowing it.

    The ``p = 2`` hat estimate ``sigma2_hat`` needs no ``eps``. For each ``p``
    on the grid the tilde estimate is compared with it; the best agreement
    ``p_hat`` gives ``alpha_hat = 2 - p_hat`` and ``eps_hat = T**(1/alpha_hat)``.

    Parameters
    ----------
    path : SamplePath
    T : float, optional
        Horizon; defaults to ``path.T``. Must be below 1.
    p_grid : array_like, optional
        Increasing exponents in ``(1, 2)``; default ``1.01, ..., 1.99``.
    constants : callable, optional
        ``p -> ConstantTable``; defaults to :func:`constant_table`.
    """
    T = path.T if T is None else float(T)
    if not 0 < T < 1:
        raise DomainError("calibration needs 0 < T < 1")
    p_grid = DEFAULT_P_GRID if p_grid is None else np.asarray(p_grid, dtype=np.float64)
    if p_grid.size == 0:
        raise DomainError("p_grid is empty")
    table = constant_table if constants is None else constants
    # the extremal reduction does not depend on p, so do it once
    cand = crossing_candidates(path)
    x = np.ascontiguousarray(cand.x[local_extrema(cand.x)])
    sigma2_hat = _backend.pvar_dp(x, 2.0)[0] / T
    tilde = np.array([_backend.pvar_dp(x, float(p))[0] / table(float(p)).c_p for p in p_grid])
    return calibrate_from_estimates(p_grid, tilde, sigma2_hat, T)


__all__ = [
    "DEFAULT_P_GRID",
    "EpsilonCalibration",
    "Estimate",
    "FAMILIES",
    "calibrate_epsilon",
    "calibrate_from_estimates",
    "pvar_estimate_hat",
    "pvar_estimate_tilde",
    "qv_mse_exact",
    "qv_optimal_beta",
    "qv_subsampled",
]
