import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hompvar.errors import ConfigurationError, DomainError
from hompvar.estimators import calibrate_from_estimates, qv_mse_exact
from hompvar.harness import (
    Moments,
    SweepConfig,
    config_hash,
    fit_scaling_exponent,
    predicted_rmse_slope,
    run_dp_scale_probe,
    run_eps_recovery,
    run_sweep,
    write_recovery,
    write_sweep,
)
from hompvar.pathsim import ModelParams, RngSeed, simulate_system
from hompvar.pvar import path_pvar

EPS = np.array([0.2, 0.14, 0.1, 0.07, 0.05])


class TestFit:
    def test_exact_power(self):
        slope, se = fit_scaling_exponent(list(zip(EPS, EPS**0.5)))
        assert slope == pytest.approx(0.5, abs=1e-12) and se < 1e-12

    def test_prefactor_invariant(self):
        assert fit_scaling_exponent(list(zip(EPS, 3 * EPS ** (2 / 3))))[0] == pytest.approx(2 / 3, abs=1e-12)

    def test_noisy(self):
        rng = np.random.default_rng(3)
        eps = np.logspace(-3, -1, 12)
        y = eps**0.5 * (1 + rng.uniform(-0.05, 0.05, eps.size))
        assert abs(fit_scaling_exponent(np.column_stack([eps, y]))[0] - 0.5) < 0.05

    @pytest.mark.parametrize("pairs", [[(0.1, 1.0), (0.2, 2.0)], [(0.1, 1.0), (0.2, -1.0), (0.3, 1.0)], [(0.0, 1.0)] * 3])
    def test_domain(self, pairs):
        with pytest.raises(DomainError):
            fit_scaling_exponent(pairs)


class TestMoments:
    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=60), st.integers(1, 10))
    def test_merge_matches_numpy(self, v, k):
        v = np.asarray(v)
        acc = Moments()
        for part in np.array_split(v, k):
            acc = acc.merge(Moments.of(part))
        assert acc.n == v.size
        assert acc.mean == pytest.approx(v.mean(), abs=1e-9)
        assert acc.variance == pytest.approx(v.var(ddof=1), rel=1e-9, abs=1e-9)

    def test_single(self):
        m = Moments.of([2.0])
        assert m.mean == 2.0 and math.isnan(m.stderr)


class TestConfig:
    def test_cells(self):
        cfg = SweepConfig((0.1,), alpha=0.5, family="qv", family_param=1.0)
        T, delta, dt = cfg.cell(0.1)
        assert T == pytest.approx(0.1**0.5) and delta == pytest.approx(0.1**1.5) and dt == pytest.approx(0.1**2 / 20)

    def test_default_params(self):
        assert SweepConfig((0.1,)).resolved_param == pytest.approx(4 / 3)
        assert SweepConfig((0.1,), alpha=0.5, family="pvar-tilde").resolved_param == 1.5

    @pytest.mark.parametrize(
        "kw",
        [
            dict(epsilon_grid=()),
            dict(epsilon_grid=(1.2,)),
            dict(family="mle"),
            dict(replicates=0),
            dict(family="pvar-hat", family_param=2.5),
            dict(family="pvar-tilde", family_param=1.5, alpha=0.0),
            dict(family="qv", alpha=2.0),
        ],
    )
    def test_invalid(self, kw):
        base = dict(epsilon_grid=(0.1,))
        base.update(kw)
        with pytest.raises(ConfigurationError):
            SweepConfig(**base)

    def test_budget_guard_names_cell(self):
        cfg = SweepConfig((0.1, 0.01), replicates=100, max_steps=10**6)
        with pytest.raises(ConfigurationError, match="eps=0.01"):
            run_sweep(cfg)

    def test_hash_depends_on_seed(self):
        a = SweepConfig((0.1,), seed=RngSeed(1)).echo()
        b = SweepConfig((0.1,), seed=RngSeed(2)).echo()
        assert config_hash(a) != config_hash(b)


class TestPredicted:
    def test_values(self):
        assert predicted_rmse_slope("qv", 0.0, 4 / 3) == pytest.approx(2 / 3)
        assert predicted_rmse_slope("qv", 0.5, 1.0) == pytest.approx(0.5)
        assert predicted_rmse_slope("qv", 0.0, 0.5) == pytest.approx(0.25)
        assert predicted_rmse_slope("pvar-hat", 0.0, 1.5) == 1.0
        assert predicted_rmse_slope("pvar-tilde", 0.5, 1.5) == 0.75
        assert predicted_rmse_slope("pvar-tilde", 0.5, 1.2) == pytest.approx(-0.3)

    def test_probe(self):
        res = run_dp_scale_probe([0.05], 1.5, 2.0, 3)
        assert res.predicted_slope == pytest.approx(0.75)


class TestSweep:
    def test_single_cell_slope_absent(self):
        res = run_sweep(SweepConfig((0.1,), replicates=20))
        assert len(res.rows) == 1 and math.isnan(res.fitted_slope)
        row = res.rows[0]
        assert row.mse >= 0 and row.mc_stderr > 0 and row.replicates == 20

    def test_qv_slope_rough(self):
        res = run_sweep(SweepConfig(tuple(EPS), replicates=300))
        assert abs(res.fitted_slope - 2 / 3) < 0.2
        assert all(r.rmse == pytest.approx(math.sqrt(r.mse)) for r in res.rows)

    def test_stderr_shrinks(self):
        a = run_sweep(SweepConfig((0.1,), replicates=500, seed=RngSeed(7))).rows[0]
        b = run_sweep(SweepConfig((0.1,), replicates=2000, seed=RngSeed(8))).rows[0]
        assert 1.6 < a.mc_stderr / b.mc_stderr < 2.4

    def test_workers_do_not_change_results(self):
        cfg = dict(epsilon_grid=(0.2, 0.1), replicates=60, chunk=16)
        assert run_sweep(SweepConfig(**cfg)) == run_sweep(SweepConfig(**cfg, workers=2))

    def test_replicate_streams(self):
        # replicate r of cell k always uses seed.generator(k, r)
        cfg = SweepConfig((0.1,), family="pvar-hat", family_param=2.0, replicates=3, seed=RngSeed(4))
        row = run_sweep(cfg).rows[0]
        direct = [
            path_pvar(simulate_system(ModelParams(1.0, 0.1), 1.0, seed=RngSeed(4).generator(0, r)), 2.0, powered=True)
            for r in range(3)
        ]
        assert row.mean == pytest.approx(np.mean(direct), rel=1e-12)

    def test_beta_argmin(self):
        eps, step = 0.05, 1 / 6
        betas = np.arange(1, 13) * step
        exact = [qv_mse_exact(eps, eps**b, int(math.floor(eps**-b))) for b in betas]
        assert abs(betas[int(np.argmin(exact))] - 4 / 3) <= step + 1e-12
        mc = [run_sweep(SweepConfig((eps,), family_param=b, replicates=300, seed=RngSeed(k))).rows[0].mse for k, b in enumerate(betas[4:11])]
        assert abs(betas[4 + int(np.argmin(mc))] - 4 / 3) <= step + 1e-12

    def test_csv_bytes_deterministic(self, tmp_path):
        cfg = SweepConfig((0.2, 0.14, 0.1), replicates=40, seed=RngSeed(11))
        write_sweep(run_sweep(cfg), tmp_path / "a", cfg.seed)
        write_sweep(run_sweep(cfg), tmp_path / "b", cfg.seed)
        for name in ("cells.csv", "fit.csv", "config.echo"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        text = (tmp_path / "a" / "cells.csv").read_text()
        assert "# seed=11" in text and "config_hash=" in text and "version=" in text


class TestProbe:
    def test_domain(self):
        for alpha in (1.0, 2.0, 0.5):
            with pytest.raises(ConfigurationError):
                run_dp_scale_probe([0.1], alpha, 1.5, 2)
        with pytest.raises(ConfigurationError):
            run_dp_scale_probe([0.1], 1.5, 0.5, 2)

    def test_fixed_epsilon_monotone_in_p(self):
        path = simulate_system(ModelParams(1.0, 0.05), 0.05**1.5, seed=3)
        vals = [path_pvar(path, p) for p in (1.2, 1.4, 1.6, 1.8, 2.0)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_rough_slope(self):
        res = run_dp_scale_probe([1e-2, 1e-3, 1e-4], 1.5, 2.0, 60)
        assert res.fit_on == "mean" and abs(res.fitted_slope - 0.75) < 0.3


class TestRecovery:
    def test_domain(self):
        for alpha in (0.0, 1.5):
            with pytest.raises(ConfigurationError):
                run_eps_recovery([0.05], alpha, 2)

    def test_synthetic_identity(self):
        alpha, T = 0.4, 0.05**0.4
        grid = np.round(np.arange(101, 200) / 100, 2)
        tilde = np.where(np.isclose(grid, 2 - alpha), 1.0, 3.0)
        cal = calibrate_from_estimates(grid, tilde, 1.0, T)
        assert cal.epsilon_hat == pytest.approx(T ** (1 / alpha), rel=1e-12)

    def test_rows_and_files(self, tmp_path):
        rows, samples = run_eps_recovery([0.1, 0.05], 0.5, 12, seed=RngSeed(5), return_samples=True)
        assert [r.replicates for r in rows] == [12, 12]
        assert rows[0].q25 <= rows[0].median <= rows[0].q75
        assert rows[1].median == pytest.approx(np.median(samples[1]))
        write_recovery(rows, tmp_path, "x=1\n", RngSeed(5))
        assert (tmp_path / "fit.csv").exists() and (tmp_path / "cells.csv").exists()
