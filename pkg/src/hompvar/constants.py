"""Normalization constants and first-passage densities of the unit OU process.

The unit fast process is ``dZ2 = -Z2 dt + dW``. Its zero-crossing renewal
structure yields the kernel

    H(t) = 4 exp(-t) sqrt(exp(-t) sinh t) / (pi (1 - exp(-2t))**2),

whose moments ``K_p = int_0^inf t**p H(t) dt`` enter every p-variation
normalization. ``H(t) ~ t**-1.5 / pi`` at the origin, so ``K_p`` is finite
exactly for ``p > 1/2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, special

from .errors import DivergenceError, DomainError

LOG2 = math.log(2.0)
SQRT2 = math.sqrt(2.0)

#: absolute target for every quadrature in this module
QUAD_TOL = 1e-10

# H(t) below this value is treated as zero when truncating the tail
_TAIL_EPS = 1e-16


def _as_float_array(x):
    return np.asarray(x, dtype=np.float64)


def _check_positive(name, x):
    if np.any(~(x > 0)):
        raise DomainError(f"{name} must be > 0")


def _regular_part(t):
    """``pi * t**1.5 * H(t)``: smooth on [0, inf), equal to 1 at t = 0."""
    t = _as_float_array(t)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(t > 0, t / -np.expm1(-2.0 * np.where(t > 0, t, 1.0)), 0.5)
    return 2.0 * SQRT2 * np.exp(-t) * ratio**1.5


def eval_H(t):
    """Evaluate the crossing kernel ``H(t)`` for ``t > 0`` (scalar or array)."""
    t = _as_float_array(t)
    _check_positive("t", t)
    out = 2.0 * SQRT2 * np.exp(-t) / (math.pi * (-np.expm1(-2.0 * t)) ** 1.5)
    return out if out.ndim else float(out)


def _tail_cutoff(p):
    # smallest t (roughly) with t**p * H(t) < _TAIL_EPS
    c = math.log(2.0 * SQRT2 / math.pi / _TAIL_EPS)
    t = c
    for _ in range(20):
        t = c + max(p, 0.0) * math.log(max(t, 1.0))
    return t


def _kp_split(p):
    """K_p by splitting at t = 1: algebraic-weight QAWS on (0, 1], QAGS on [1, t_max]."""
    near, err_near = integrate.quad(
        lambda s: float(_regular_part(s)) / math.pi,
        0.0,
        1.0,
        weight="alg",
        wvar=(p - 1.5, 0.0),
        epsabs=QUAD_TOL,
        epsrel=1e-13,
        limit=200,
    )
    t_max = _tail_cutoff(p)
    far, err_far = integrate.quad(
        lambda s: s**p * float(eval_H(s)),
        1.0,
        t_max,
        epsabs=QUAD_TOL,
        epsrel=1e-13,
        limit=200,
    )
    return near + far, err_near + err_far


@lru_cache(maxsize=None)
def _gauss_legendre(n):
    return leggauss(n)


def _kp_power_substitution(p, order=24, levels=48):
    """K_p through ``t = u**m`` with ``m = 1/(p - 1/2)``.

    After the change of variables the integrand is ``(m/pi) r(u**m)`` with
    ``r`` bounded, so composite Gauss-Legendre applies. Panels are graded
    geometrically toward ``u = 0`` where ``u**m`` has a cusp for ``m < 1``.
    """
    m = 1.0 / (p - 0.5)
    u_max = _tail_cutoff(p) ** (1.0 / m)
    edges = [0.0] + [u_max * 0.5**k for k in range(levels, 0, -1)]
    edges += list(np.linspace(u_max * 0.5, u_max, 33)[1:])
    x, w = _gauss_legendre(order)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        half = 0.5 * (b - a)
        u = a + half * (x + 1.0)
        total += half * float(np.dot(w, _regular_part(u**m)))
    return m * total / math.pi


def compute_Kp(p, method="split"):
    """Return ``K_p = int_0^inf t**p H(t) dt``.

    Parameters
    ----------
    p : float
        Moment order, ``p > 1/2``.
    method : {'split', 'substitution'}
        'split' uses QUADPACK with the ``t**(p - 3/2)`` weight handled exactly;
        'substitution' is an independent Gauss-Legendre route used as a cross-check.

    Raises
    ------
    DivergenceError
        If ``p <= 1/2``.
    """
    p = float(p)
    if not p > 0.5:
        raise DivergenceError(f"K_p diverges for p <= 1/2 (got p={p})")
    if method == "split":
        return _kp_split(p)[0]
    if method == "substitution":
        return _kp_power_substitution(p)
    raise ValueError(f"unknown method {method!r}")


def compute_ap(p):
    """Return ``a_p`` with ``E|N(0, t)|**p = a_p t**(p/2)``."""
    p = float(p)
    if p < 0:
        raise DomainError("a_p requires p >= 0")
    return math.exp(0.5 * p * LOG2 + special.gammaln(0.5 * (p + 1.0)) - 0.5 * math.log(math.pi))


def compute_cp(p):
    """Return ``c_p = a_p K_{p/2} / sqrt(2)``; infinite (error) for ``p <= 1``."""
    p = float(p)
    if not p > 1.0:
        raise DivergenceError(f"c_p is infinite for p <= 1 (got p={p})")
    return compute_ap(p) * compute_Kp(0.5 * p) / SQRT2


def compute_Ep(p):
    """Return the relative-MSE constant ``E(p) = c_{2p}/c_p**2 + 4 log 2``.

    ``p = 1`` returns the analytic limit ``4 log 2`` (``c_1`` is infinite).
    """
    return constant_table(p).E_p


@dataclass(frozen=True)
class ConstantTable:
    """All constants needed by the p-variation estimators at one exponent."""

    p: float
    K_halfp: float
    a_p: float
    c_p: float
    a_2p: float
    c_2p: float
    E_p: float
    #: summed absolute quadrature error estimate of the K integrals used
    tol: float


@lru_cache(maxsize=4096)
def _table(p):
    if p < 1.0:
        raise DomainError(f"constants are only tabulated for p >= 1 (got p={p})")
    a_p = compute_ap(p)
    a_2p = compute_ap(2.0 * p)
    k_p, err_p = _kp_split(p)
    c_2p = a_2p * k_p / SQRT2
    if p == 1.0:
        return ConstantTable(p, math.inf, a_p, math.inf, a_2p, c_2p, 4.0 * LOG2, err_p)
    k_half, err_half = _kp_split(0.5 * p)
    c_p = a_p * k_half / SQRT2
    e_p = c_2p / c_p**2 + 4.0 * LOG2
    return ConstantTable(p, k_half, a_p, c_p, a_2p, c_2p, e_p, err_p + err_half)


def constant_table(p):
    """Memoized :class:`ConstantTable` for ``p >= 1``.

    The cache stores immutable records, so concurrent callers can share it.
    """
    return _table(float(p))


def eval_first_passage_pdf(t, z):
    """Density at ``t`` of the first zero hit of the unit OU process started at ``z``."""
    t = _as_float_array(t)
    z = _as_float_array(z)
    _check_positive("t", t)
    q = -np.expm1(-2.0 * t)
    out = 2.0 / math.sqrt(math.pi) * np.abs(z) * np.exp(-t) / q**1.5 * np.exp(-(z * z) * np.exp(-2.0 * t) / q)
    return out if out.ndim else float(out)


def eval_h_delta(t, delta):
    """Density of ``tau(Z2_delta)`` for ``Z2_0 = 0``: the gap beyond ``delta``.

    The closed form is rearranged as
    ``2 exp(-t) sqrt(1 - e^{-2 delta}) / (pi (1 - e^{-2(delta+t)}) sqrt(1 - e^{-2t}))``
    which is algebraically identical and overflow free.
    """
    t = _as_float_array(t)
    delta = _as_float_array(delta)
    _check_positive("t", t)
    _check_positive("delta", delta)
    qd = -np.expm1(-2.0 * delta)
    out = 2.0 * np.exp(-t) * np.sqrt(qd) / (math.pi * -np.expm1(-2.0 * (delta + t)) * np.sqrt(-np.expm1(-2.0 * t)))
    return out if out.ndim else float(out)


def _h_delta_times_sqrt_t(t, delta):
    # h_delta(t) * sqrt(t), finite at t = 0
    ratio = t / -math.expm1(-2.0 * t) if t > 0 else 0.5
    qd = -math.expm1(-2.0 * delta)
    return 2.0 * math.exp(-t) * math.sqrt(qd) * math.sqrt(ratio) / (math.pi * -math.expm1(-2.0 * (delta + t)))


def gap_moment(q, delta):
    """``E[(delta + tau)**q] = int_0^inf (delta + t)**q h_delta(t) dt``."""
    q = float(q)
    delta = float(delta)
    if not delta > 0:
        raise DomainError("delta must be > 0")
    near, _ = integrate.quad(
        lambda t: (delta + t) ** q * _h_delta_times_sqrt_t(t, delta),
        0.0,
        1.0,
        weight="alg",
        wvar=(-0.5, 0.0),
        epsabs=QUAD_TOL,
        epsrel=1e-12,
        limit=200,
    )
    far, _ = integrate.quad(
        lambda t: (delta + t) ** q * float(eval_h_delta(t, delta)),
        1.0,
        _tail_cutoff(q),
        epsabs=QUAD_TOL,
        epsrel=1e-12,
        limit=200,
    )
    return near + far


def validate_table(p_grid):
    """Constant tables for each ``p`` in ``p_grid`` (used by ``validate-constants``)."""
    return [constant_table(p) for p in p_grid]
