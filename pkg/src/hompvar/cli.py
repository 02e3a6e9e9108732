"""Command line interface: ``hompvar <subcommand> [options]``.

Every subcommand accepts ``--config FILE``, a flat ``key=value`` file whose
keys are the long option names (``-`` or ``_``); options given on the
command line override it. Exit codes: 0 success, 2 configuration or input
error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys

import numpy as np

from . import __version__
from .constants import constant_table
from .errors import ConfigurationError, DomainError
from .estimators import (
    Estimate,
    calibrate_epsilon,
    pvar_estimate_hat,
    pvar_estimate_tilde,
    qv_mse_exact,
    qv_subsampled,
)
from .harness import (
    SweepConfig,
    config_hash,
    csv_text,
    run_dp_scale_probe,
    run_eps_recovery,
    run_sweep,
    write_recovery,
    write_sweep,
)
from .pathsim import ModelParams, RngSeed, SamplePath, simulate_system
from .pvar import crossing_candidates, pvar_bruteforce, pvar_extremal

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

#: brute force on more candidate points than this is refused
ORACLE_MAX_POINTS = 20000


def float_list(text):
    """``a,b,c`` or ``start:stop:step`` (inclusive stop)."""
    text = str(text).strip()
    try:
        if ":" in text:
            start, stop, step = (float(v) for v in text.split(":"))
            if not step > 0:
                raise ValueError
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            return [round(start + k * step, 12) for k in range(max(n, 0))]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number list: {text!r}") from None


def read_config(path):
    """Parse a flat ``key=value`` file; ``#`` starts a comment."""
    out = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    with fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigurationError(f"{path}:{n}: expected key=value")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _truthy(v):
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"not a boolean: {v!r}")


def _load_path(fname):
    try:
        return SamplePath.from_csv(fname)
    except OSError as exc:
        raise ConfigurationError(f"cannot read {fname}: {exc}") from None


def _emit(columns, rows, out=None):
    w = csv.writer(out or sys.stdout, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _seed(args):
    return RngSeed(args.seed, args.stream_id)


def _echo(args):
    # the worker count never changes results, so it is not part of the config identity
    skip = {"func", "config", "out", "command", "workers"}
    items = sorted((k, v) for k, v in vars(args).items() if k not in skip)
    return "".join(f"{k}={v}\n" for k, v in items)


# ---------------------------------------------------------------- commands


def cmd_simulate(args):
    params = ModelParams(args.sigma, args.epsilon, args.y1_0, args.y2_0, args.stationary_start)
    path = simulate_system(params, args.T, dt=args.dt, seed=_seed(args), allow_coarse=args.allow_coarse)
    echo = _echo(args)
    meta = {"version": __version__, "seed": args.seed, "stream_id": args.stream_id, "config_hash": config_hash(echo)}
    path.to_csv(args.out, meta=meta)
    print(f"wrote {path.length} points (T={path.T!r}, dt={path.dt!r}) to {args.out}")


def cmd_pvar(args):
    path = _load_path(args.input)
    cand = crossing_candidates(path)
    value = pvar_extremal(cand, args.p)
    if not args.oracle:
        _emit(("p", "D_p", "candidates"), [(args.p, value, cand.t.size)])
        return
    if cand.t.size > ORACLE_MAX_POINTS:
        raise ConfigurationError(f"{cand.t.size} candidate points is too many for the brute-force oracle")
    brute = pvar_bruteforce(cand, args.p)
    _emit(("p", "D_p", "D_p_bruteforce", "difference", "candidates"), [(args.p, value, brute, value - brute, cand.t.size)])


def cmd_estimate(args):
    path = _load_path(args.input)
    if args.family == "qv":
        if args.delta is None:
            raise ConfigurationError("--delta is required for the qv family")
        est = qv_subsampled(path, args.delta)
    else:
        if args.p is None:
            raise ConfigurationError(f"--p is required for the {args.family} family")
        if args.family == "pvar-hat":
            est = pvar_estimate_hat(path, args.p, epsilon=args.epsilon)
        else:
            est = pvar_estimate_tilde(path, args.p)
    _emit(Estimate.COLUMNS, [est.as_row()])


def cmd_calibrate(args):
    path = _load_path(args.input)
    cal = calibrate_epsilon(path, T=args.T, p_grid=args.p_grid)
    _emit(("p_hat", "alpha_hat", "epsilon_hat", "sigma2_hat", "T"),
          [(cal.p_hat, cal.alpha_hat, cal.epsilon_hat, cal.sigma2_hat, cal.T)])
    meta = {"seed": "none", "config_hash": config_hash(_echo(args)), "input": args.input}
    with open(args.curve_out, "w", newline="") as fh:
        fh.write(csv_text(("p", "objective"), cal.objective_curve.tolist(), meta))


def cmd_mse_exact(args):
    if args.N is None:
        if args.T is None:
            raise ConfigurationError("give --N or --T")
        args.N = int(math.floor(args.T / args.delta + 1e-9))
        if args.N < 1:
            raise ConfigurationError("--T must be at least --delta")
    _emit(("epsilon", "delta", "N", "mse"), [(args.epsilon, args.delta, args.N, qv_mse_exact(args.epsilon, args.delta, args.N))])


def _print_result(res):
    _emit(("epsilon", "T", "delta_or_p", "mean", "mse", "rmse", "mc_stderr", "mse_stderr", "replicates"),
          [r.as_row() for r in res.rows])
    print(f"# fit_on={res.fit_on} fitted_slope={res.fitted_slope!r} slope_stderr={res.slope_stderr!r} "
          f"predicted_slope={res.predicted_slope!r}")


def cmd_sweep(args):
    param = args.beta if args.family == "qv" else args.p
    cfg = SweepConfig(
        tuple(args.epsilon_grid), args.alpha, args.family, param, args.replicates, args.sigma, _seed(args),
        args.dt_rule, args.chunk, args.workers, args.max_steps, args.stationary_start,
    )
    res = run_sweep(cfg)
    _print_result(res)
    if args.out:
        write_sweep(res, args.out, cfg.seed)


def cmd_dp_probe(args):
    res = run_dp_scale_probe(args.epsilon_grid, args.alpha, args.p, args.replicates, _seed(args), args.sigma,
                             args.dt_rule, args.workers, args.chunk, args.max_steps)
    _print_result(res)
    if args.out:
        write_sweep(res, args.out, _seed(args))


def cmd_eps_recovery(args):
    rows = run_eps_recovery(args.epsilon_grid, args.alpha, args.replicates, _seed(args), args.sigma, args.p_grid,
                            args.dt_rule, args.workers, args.chunk)
    _emit(("epsilon", "T", "median", "q25", "q75", "replicates"), [r.as_row() for r in rows])
    if args.out:
        write_recovery(rows, args.out, _echo(args), _seed(args))


def cmd_validate_constants(args):
    rows = []
    for p in args.p_grid:
        t = constant_table(p)
        rows.append((t.p, t.K_halfp, t.a_p, t.c_p, t.E_p))
    _emit(("p", "K_halfp", "a_p", "c_p", "E_p"), rows)


# ---------------------------------------------------------------- parser


def _add_seed(sp):
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--stream-id", type=int, default=0)


def _add_mc(sp, grid, replicates):
    sp.add_argument("--epsilon-grid", type=float_list, default=grid, help="a,b,c or start:stop:step")
    sp.add_argument("--replicates", type=int, default=replicates)
    sp.add_argument("--sigma", type=float, default=1.0)
    sp.add_argument("--dt-rule", type=int, default=20, help="grid steps per fast time eps**2")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--chunk", type=int, default=250)
    sp.add_argument("--out", help="directory for cells.csv, fit.csv, config.echo")
    _add_seed(sp)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value file; command line flags override it")

    ap = argparse.ArgumentParser(prog="hompvar", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", parents=[common], help="simulate (Y1, Y2, W) to CSV")
    sp.add_argument("--sigma", type=float, default=1.0)
    sp.add_argument("--epsilon", type=float, default=0.1)
    sp.add_argument("--T", type=float, default=1.0)
    sp.add_argument("--dt", type=float, default=None, help="default eps**2/20")
    sp.add_argument("--y1-0", type=float, default=0.0)
    sp.add_argument("--y2-0", type=float, default=0.0)
    sp.add_argument("--stationary-start", action="store_true")
    sp.add_argument("--allow-coarse", action="store_true")
    sp.add_argument("--out", required=True)
    _add_seed(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("pvar", parents=[common], help="total p-variation of the slow path")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--p", type=float, default=1.5)
    sp.add_argument("--oracle", action="store_true", help="also run the O(n^2) brute force")
    sp.set_defaults(func=cmd_pvar)

    sp = sub.add_parser("estimate", parents=[common], help="one estimate from a path CSV")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--family", choices=("qv", "pvar-hat", "pvar-tilde"), required=True)
    sp.add_argument("--p", type=float)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--epsilon", type=float)
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("calibrate-eps", parents=[common], help="estimate eps from a path CSV")
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--T", type=float, default=None, help="horizon, default from the file")
    sp.add_argument("--p-grid", type=float_list, default=None, help="default 1.01:1.99:0.01")
    sp.add_argument("--curve-out", default="objective_curve.csv")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("mse-exact", parents=[common], help="exact normalized MSE of subsampled QV")
    sp.add_argument("--epsilon", type=float, required=True)
    sp.add_argument("--delta", type=float, required=True)
    sp.add_argument("--N", type=int)
    sp.add_argument("--T", type=float)
    sp.set_defaults(func=cmd_mse_exact)

    sp = sub.add_parser("sweep", parents=[common], help="MC sweep over eps with a root-MSE slope fit")
    sp.add_argument("--family", choices=("qv", "pvar-hat", "pvar-tilde"), default="qv")
    sp.add_argument("--alpha", type=float, default=0.0)
    sp.add_argument("--beta", type=float, default=None, help="qv only; default (4-2 alpha)/3")
    sp.add_argument("--p", type=float, default=None, help="pvar only; default 2 - alpha")
    sp.add_argument("--max-steps", type=int, default=10**9)
    sp.add_argument("--stationary-start", action="store_true")
    _add_mc(sp, [0.2, 0.14, 0.1, 0.07, 0.05], 2000)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("dp-scale-probe", parents=[common], help="slope of E D_p(Y1) over [0, eps**alpha]")
    sp.add_argument("--alpha", type=float, default=1.5)
    sp.add_argument("--p", type=float, default=1.5)
    sp.add_argument("--max-steps", type=int, default=10**9)
    _add_mc(sp, [1e-2, 1e-3, 1e-4, 1e-5, 1e-6], 400)
    sp.set_defaults(func=cmd_dp_probe)

    sp = sub.add_parser("eps-recovery", parents=[common], help="median/IQR of eps_hat per true eps")
    sp.add_argument("--alpha", type=float, default=0.5)
    sp.add_argument("--p-grid", type=float_list, default=None)
    _add_mc(sp, [0.05], 100)
    sp.set_defaults(func=cmd_eps_recovery)

    sp = sub.add_parser("validate-constants", parents=[common], help="print p, K_{p/2}, a_p, c_p, E_p")
    sp.add_argument("--p-grid", type=float_list, default=float_list("1.05:2.0:0.05"))
    sp.set_defaults(func=cmd_validate_constants)
    return ap


def parse_args(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        sub = next(a for a in ap._actions if isinstance(a, argparse._SubParsersAction))
        command = next((tok for tok in argv if tok in sub.choices), None)
        if command is not None:
            _apply_config(sub.choices[command], command, read_config(known.config))
    return ap.parse_args(argv)


def _apply_config(sp, command, values):
    actions = {a.dest: a for a in sp._actions}
    defaults = {}
    for key, value in values.items():
        act = actions.get("input" if key == "in" else key)
        if act is None or act.dest in ("help", "config"):
            raise ConfigurationError(f"unknown config key {key!r} for {command}")
        if isinstance(act, argparse._StoreTrueAction):
            defaults[act.dest] = _truthy(value)
        else:
            # argparse applies type= to string defaults
            defaults[act.dest] = value
        act.required = False
    sp.set_defaults(**defaults)


def main(argv=None):
    try:
        args = parse_args(argv)
        args.func(args)
    except (ConfigurationError, DomainError) as exc:
        print(f"hompvar: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArithmeticError as exc:
        print(f"hompvar: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
