import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from hompvar.errors import DomainError
from hompvar.pathsim import ModelParams, RngSeed, SamplePath, simulate_system, simulate_z_system
from hompvar.pvar import (
    DiscretePath,
    crossing_candidates,
    crossing_count_stats,
    delta_spaced,
    local_extrema,
    partition_pvar_power,
    path_pvar,
    pvar_bruteforce,
    pvar_extremal,
    zero_crossings,
)

paths = st.lists(st.floats(-10, 10, allow_nan=False), min_size=2, max_size=60)
exponents = st.sampled_from([1.0, 1.2, 1.5, 2.0, 3.0])


def enumerate_pvar(x, p):
    """max over every subsequence containing both endpoints."""
    x = np.asarray(x, float)
    n = x.size
    best = 0.0
    for k in range(n - 1):
        for inner in itertools.combinations(range(1, n - 1), k):
            idx = (0, *inner, n - 1)
            best = max(best, float(np.sum(np.abs(np.diff(x[list(idx)])) ** p)))
    return best


class TestBruteForce:
    def test_monotone(self):
        assert pvar_bruteforce([0, 1, 2, 3], 1.5) == pytest.approx(3.0)

    def test_alternating(self):
        assert pvar_bruteforce([0, 1, 0, 1], 2) == pytest.approx(math.sqrt(3))
        assert pvar_bruteforce([0, 1, 0, 1], 2, powered=True) == pytest.approx(3.0)

    def test_mixed(self):
        assert pvar_bruteforce([0, 1, -1, 0.5], 2, powered=True) == pytest.approx(7.25)

    def test_p_one_is_total_variation(self, rng):
        x = rng.standard_normal(50)
        assert pvar_bruteforce(x, 1.0) == pytest.approx(np.sum(np.abs(np.diff(x))))

    @pytest.mark.parametrize("x", [[1.0], []])
    def test_too_short(self, x):
        with pytest.raises(DomainError):
            pvar_bruteforce(x, 2)

    def test_p_below_one(self):
        with pytest.raises(DomainError):
            pvar_bruteforce([0, 1], 0.5)

    def test_non_finite(self):
        with pytest.raises(DomainError):
            pvar_bruteforce([0, np.nan, 1], 2)


class TestExtrema:
    @pytest.mark.parametrize(
        "x, idx",
        [
            ([0, 1, 0, 1], [0, 1, 2, 3]),
            ([0, 1, 2, 3], [0, 3]),
            ([0, 2, 2, 1], [0, 1, 3]),
            ([1, 1, 1], [0, 2]),
            ([0, 0, 1, 1, 0], [0, 2, 4]),
            ([3, 3], [0, 1]),
        ],
    )
    def test_examples(self, x, idx):
        assert local_extrema(x).tolist() == idx

    @given(paths)
    def test_endpoints_always_present(self, x):
        idx = local_extrema(x)
        assert idx[0] == 0 and idx[-1] == len(x) - 1
        assert np.all(np.diff(idx) > 0)


class TestExtremal:
    def test_example(self):
        assert pvar_extremal([0, 1, -1, 0.5], 2, powered=True) == pytest.approx(7.25)

    @pytest.mark.parametrize("p", [1.1, 1.5, 2.0, 4.0])
    def test_monotone(self, p):
        assert pvar_extremal(np.linspace(-1, 2.5, 40), p) == pytest.approx(3.5)

    @pytest.mark.parametrize("p", [1.2, 1.5, 2.0])
    def test_random_walks(self, p, rng):
        for _ in range(60):
            x = np.cumsum(rng.standard_normal(rng.integers(2, 201)))
            a, b = pvar_extremal(x, p, powered=True), pvar_bruteforce(x, p, powered=True)
            assert abs(a - b) <= 1e-12 * max(1.0, b)

    @settings(max_examples=200, deadline=None)
    @given(paths, exponents)
    def test_matches_bruteforce(self, x, p):
        a, b = pvar_extremal(x, p, powered=True), pvar_bruteforce(x, p, powered=True)
        assert abs(a - b) <= 1e-12 * max(1.0, b)

    @pytest.mark.parametrize("n", range(2, 15))
    def test_exhaustive(self, n):
        rng = np.random.default_rng(n)
        for p in (1.2, 1.5, 2.0):
            x = rng.standard_normal(n)
            assert pvar_extremal(x, p, powered=True) == pytest.approx(enumerate_pvar(x, p), rel=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(-3, 3), min_size=2, max_size=9), exponents)
    def test_exhaustive_with_ties(self, x, p):
        # integer paths have plateaus and equal increments
        assert pvar_extremal(x, p, powered=True) == pytest.approx(enumerate_pvar(x, p), rel=1e-12, abs=1e-12)

    def test_partition_attains_value(self, rng):
        x = np.cumsum(rng.standard_normal(150))
        v, pts = pvar_extremal(x, 1.5, powered=True, return_points=True)
        assert pts[0] == 0 and pts[-1] == x.size - 1
        assert np.sum(np.abs(np.diff(x[pts])) ** 1.5) == pytest.approx(v, rel=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=3, max_size=40))
    def test_nonincreasing_in_p(self, x):
        x = np.asarray(x)
        span = np.ptp(x)
        if span == 0:
            return
        u = x / span  # every partition increment is now at most 1
        ps = [1.0, 1.2, 1.5, 2.0, 3.0]
        powered = [pvar_extremal(u, p, powered=True) for p in ps]
        norm = [pvar_extremal(u, p) for p in ps]
        assert all(a >= b - 1e-12 for a, b in zip(powered, powered[1:]))
        assert all(a >= b - 1e-12 for a, b in zip(norm, norm[1:]))

    @settings(max_examples=60, deadline=None)
    @given(paths, exponents)
    def test_repeated_point_changes_nothing(self, x, p):
        y = x[:1] + x[:1] + x[1:]
        assert pvar_extremal(y, p, powered=True) == pytest.approx(pvar_extremal(x, p, powered=True), rel=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=2, max_size=10), exponents)
    def test_optimum_beats_every_subsequence(self, x, p):
        # brute force is an upper bound for each candidate partition, including refinements
        best = pvar_bruteforce(x, p, powered=True)
        assert best >= enumerate_pvar(x, p) - 1e-12 * max(1.0, best)
        assert best <= enumerate_pvar(x, p) + 1e-12 * max(1.0, best)


class TestDiscretePath:
    def test_validation(self):
        with pytest.raises(DomainError):
            DiscretePath([0, 0], [1, 2])
        with pytest.raises(DomainError):
            DiscretePath([0, 1], [1, np.inf])
        with pytest.raises(DomainError):
            DiscretePath([0], [1])
        assert DiscretePath.from_values([3, 4]).t.tolist() == [0.0, 1.0]


class TestZeroCrossings:
    def test_example(self):
        c = zero_crossings(np.arange(5.0), [0.3, 0.1, -0.2, 0.4, -0.1])
        np.testing.assert_allclose(c, [4 / 3, 7 / 3, 3.8], rtol=1e-14)

    def test_positive(self):
        assert zero_crossings(np.arange(4.0), [1, 2, 0.5, 3]).size == 0

    def test_grid_zero_counts_once(self):
        assert zero_crossings(np.arange(3.0), [0.5, 0.0, -0.5]).tolist() == [1.0]

    def test_zero_run(self):
        assert zero_crossings(np.arange(5.0), [1, 0, 0, 0, -1]).tolist() == [1.0]

    @pytest.mark.parametrize("y", [[0.5, 0.0, 0.5], [0.0, 1.0, 2.0], [1.0, 2.0, 0.0], [0.0, 0.0]])
    def test_not_crossings(self, y):
        assert zero_crossings(np.arange(float(len(y))), y).size == 0

    def test_misaligned(self):
        with pytest.raises(DomainError):
            zero_crossings(np.arange(3.0), [1.0, -1.0])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-2, 2, allow_nan=False), min_size=2, max_size=80))
    def test_count_equals_sign_changes(self, y):
        y = np.asarray(y)
        s = np.sign(y[y != 0])
        c = zero_crossings(np.arange(float(y.size)), y)
        assert c.size == int(np.sum(s[1:] != s[:-1]))
        assert np.all(np.diff(c) >= 0)


class TestDeltaSpaced:
    def test_example(self):
        part = delta_spaced([4 / 3, 7 / 3, 3.8], 1.2, 4.0)
        np.testing.assert_allclose(part.times, [4 / 3, 3.8])
        assert part.n_crossings == 2
        assert part.terminal_gap == pytest.approx(0.2)
        assert part.partition().tolist() == pytest.approx([0, 4 / 3, 3.8, 4.0])

    def test_zero_delta(self):
        assert delta_spaced([0.5, 0.6, 0.7], 0.0, 1.0).n_crossings == 3

    def test_empty(self):
        part = delta_spaced([], 0.3, 2.0)
        assert part.n_crossings == 0 and part.terminal_gap == 2.0

    def test_origin(self):
        part = delta_spaced([0.1, 0.5, 0.55, 1.2], 0.3, 2.0, origin=0.0)
        assert part.times.tolist() == [0.5, 1.2] and part.includes_origin

    def test_beyond_horizon_dropped(self):
        assert delta_spaced([0.5, 1.5], 0.1, 1.0).n_crossings == 1

    def test_negative_delta(self):
        with pytest.raises(DomainError):
            delta_spaced([1.0], -0.1, 2.0)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0, 10, allow_nan=False), max_size=50, unique=True), st.floats(0, 2, allow_nan=False))
    def test_greedy_rule(self, c, delta):
        c = np.sort(np.asarray(c))
        part = delta_spaced(c, delta, 10.0)
        kept = part.times
        assert np.all(np.diff(kept) > delta)
        if c.size:
            assert kept[0] == c[0]
        for a, b in zip(kept, kept[1:]):
            after = c[c > a + delta]
            assert b == after[0]


class TestSlowPath:
    def _path(self, y2, y1):
        n = len(y2)
        return SamplePath(1.0, y1, y2, np.zeros(n))

    def test_candidates(self):
        path = self._path([0.3, 0.1, -0.2, 0.4, -0.1], [0.0, 1.0, 2.0, 1.0, 0.0])
        cand = crossing_candidates(path)
        np.testing.assert_allclose(cand.t, [0, 4 / 3, 7 / 3, 3.8, 4])
        np.testing.assert_allclose(cand.x[1:-1], [1 + 1 / 3, 2 - 1 / 3, 1 - 0.8])

    def test_no_crossings(self):
        path = self._path([1.0, 2.0, 0.5, 1.0], [0.0, 3.0, -1.0, 0.7])
        assert path_pvar(path, 1.5) == pytest.approx(0.7)

    def test_crossing_increment_identity(self):
        path = simulate_z_system(50.0, dt=0.01, seed=3)
        s = np.sign(path.y2)
        idx = np.flatnonzero(s[1:] * s[:-1] < 0) + 1
        a, b = idx[:-1], idx[1:]
        lhs = np.abs(path.y1[b] - path.y1[a] - (path.w[b] - path.w[a]))
        assert np.all(lhs <= np.abs(path.y2[a]) + np.abs(path.y2[b]) + 1e-12)
        assert np.all(lhs <= 2 * np.maximum(np.abs(path.y2[a]), np.abs(path.y2[b])) + 1e-12)

    def test_partition_sum_below_sup(self):
        path = simulate_system(ModelParams(1.0, 0.1), 1.0, seed=5)
        incs = partition_pvar_power(path, 0.0)
        assert np.sum(np.abs(incs) ** 1.5) <= path_pvar(path, 1.5, powered=True) + 1e-12


class TestCrossingCounts:
    @pytest.mark.slow
    def test_gap_law_from_paths(self):
        # grid detection lags on fast re-crossings; the KS bias scales like dt**0.3
        # and drops below 0.02 only around dt = delta/3000
        delta, dt = 0.05, 0.05 / 3200
        rng = np.random.default_rng(5)
        crossings, z0, t0 = [], 0.0, 0.0
        while True:
            piece = simulate_z_system(40.0, dt=dt, seed=rng, z2_0=z0)
            crossings.append(zero_crossings(piece.t, piece.y2) + t0)
            z0, t0 = piece.y2[-1], t0 + piece.T
            part = delta_spaced(np.concatenate(crossings), delta, t0, origin=0.0)
            if part.n_crossings > 10**4:
                break
        gaps = np.diff(part.times)[: 10**4] - delta
        v = -math.expm1(-2 * delta) / 2
        cdf = lambda t: 1 - 2 / math.pi * np.arctan(np.sqrt(2 * v / np.expm1(2 * t)))
        assert stats.kstest(gaps, cdf).statistic < 0.02

    def test_gap_law_resolution_trend(self):
        delta, v = 0.05, -math.expm1(-2 * 0.05) / 2
        cdf = lambda t: 1 - 2 / math.pi * np.arctan(np.sqrt(2 * v / np.expm1(2 * t)))
        ks = []
        for div in (50, 800):
            path = simulate_z_system(600.0, dt=delta / div, seed=31)
            part = delta_spaced(zero_crossings(path.t, path.y2), delta, path.T, origin=0.0)
            ks.append(stats.kstest(np.diff(part.times) - delta, cdf).statistic)
        assert ks[1] < ks[0]

    def test_horizon_below_delta(self):
        for method in ("renewal", "path"):
            res = crossing_count_stats(1.0, 2.0, 50, seed=RngSeed(1), method=method, dt=0.01)
            assert res.mean_scaled <= math.sqrt(2.0)
            assert res.second_moment_scaled <= 2.0

    def test_methods_agree(self):
        a = crossing_count_stats(2.0, 0.01, 3000, seed=RngSeed(2))
        b = crossing_count_stats(2.0, 0.01, 300, seed=RngSeed(3), method="path")
        assert abs(a.mean_scaled - b.mean_scaled) < 3 * math.hypot(a.mean_stderr, b.mean_stderr)

    def test_unpacks(self):
        m, s = crossing_count_stats(1.0, 0.1, 10)
        assert m > 0 and s > 0

    def test_domain(self):
        with pytest.raises(DomainError):
            crossing_count_stats(1.0, 0.1, 0)
        with pytest.raises(DomainError):
            crossing_count_stats(1.0, 0.0, 5)
        with pytest.raises(ValueError):
            crossing_count_stats(1.0, 0.1, 5, method="laplace")

    def test_reproducible(self):
        assert crossing_count_stats(3.0, 0.01, 40, seed=RngSeed(4)) == crossing_count_stats(3.0, 0.01, 40, seed=RngSeed(4))
