"""Time the compiled kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--epsilon 0.05] [--T 1] [--repeat 5]

Inputs come from one simulated path so the p-variation DP sees a realistic
candidate set. Each pair of outputs is also checked for agreement.
"""
import argparse
import timeit

import numpy as np

from hompvar import _backend
from hompvar.pathsim import ModelParams, simulate_system
from hompvar.pvar import crossing_candidates, local_extrema


def _inputs(eps, T, seed):
    path = simulate_system(ModelParams(1.0, eps), T, seed=seed)
    cand = crossing_candidates(path)
    x = np.ascontiguousarray(cand.x[local_extrema(cand.x)])
    noise = np.random.default_rng(seed).standard_normal(path.length - 1)
    return {
        "ar1_filter": (0.95, 0.0, noise),
        "crossing_points": (np.ascontiguousarray(path.t), path.y2, path.y1),
        "pvar_dp": (x, 1.5),
        "delta_select": (np.ascontiguousarray(cand.t[1:-1]), 2e-3, 0.0, True),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(u, v) for u, v in zip(a, b))
    return np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=1e-12, atol=1e-12)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epsilon", type=float, default=0.05)
    ap.add_argument("--T", type=float, default=1.0)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    try:
        fast = _backend.kernels("cython")
    except ImportError:
        print("compiled extension not built; nothing to compare")
        return 1
    slow = _backend.kernels("python")
    inputs = _inputs(args.epsilon, args.T, args.seed)
    print(f"eps={args.epsilon:g} T={args.T:g} dp_points={inputs['pvar_dp'][0].size}")
    print(f"{'kernel':<16}{'cython [ms]':>14}{'python [ms]':>14}{'speedup':>10}  agree")
    for name, a in inputs.items():
        f, s = getattr(fast, name), getattr(slow, name)
        tf = min(timeit.repeat(lambda: f(*a), number=1, repeat=args.repeat))
        ts = min(timeit.repeat(lambda: s(*a), number=1, repeat=args.repeat))
        print(f"{name:<16}{1e3 * tf:>14.3f}{1e3 * ts:>14.3f}{ts / tf:>10.1f}  {_same(f(*a), s(*a))}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
