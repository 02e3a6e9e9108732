"""Diffusion-coefficient estimation for a multiscale Ornstein-Uhlenbeck system.

The slow component of

    dY1 = (sigma/eps) Y2 dt,   dY2 = -Y2/eps**2 dt + dW/eps

converges to ``sigma W`` as ``eps -> 0``. This package simulates the system
exactly and estimates ``sigma`` from the slow path with subsampled
quadratic variation and with total p-variation functionals, including the
normalization constants those need and a calibration of ``eps`` itself.
"""
__version__ = "0.1.0"

from ._backend import BACKEND
from .constants import (
    ConstantTable,
    compute_ap,
    compute_cp,
    compute_Ep,
    compute_Kp,
    constant_table,
    eval_first_passage_pdf,
    eval_H,
    eval_h_delta,
)
from .errors import ConfigurationError, DivergenceError, DomainError, HompvarError, NumericalError
from .estimators import (
    EpsilonCalibration,
    Estimate,
    calibrate_epsilon,
    pvar_estimate_hat,
    pvar_estimate_tilde,
    qv_mse_exact,
    qv_optimal_beta,
    qv_subsampled,
)
from .harness import (
    SweepConfig,
    SweepResult,
    fit_scaling_exponent,
    run_dp_scale_probe,
    run_eps_recovery,
    run_sweep,
)
from .pathsim import ModelParams, RngSeed, SamplePath, exact_transition, simulate_system, simulate_z_system
from .pvar import (
    CrossingPartition,
    DiscretePath,
    crossing_count_stats,
    delta_spaced,
    local_extrema,
    path_pvar,
    pvar_bruteforce,
    pvar_extremal,
    zero_crossings,
)
