import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from statsmodels.tsa.stattools import grangercausalitytests

from oracles import granger_normal_equations
from tsfbench.data import TimeSeries
from tsfbench.granger import (
    GrangerConfig,
    GrangerError,
    GrangerReport,
    NonStationaryError,
    build_lag_design,
    export_granger_report,
    granger_analyze,
    granger_pair,
    load_granger_report,
    make_stationary,
    ols_fit_ssr,
    pearson_filter,
)


def _ts(values):
    values = np.asarray(values, dtype=float)
    return TimeSeries("g", tuple(f"c{i}" for i in range(values.shape[0])), values)


def _coupled(rng, n=600, strength=0.8):
    x = rng.standard_normal(n)
    y = np.zeros(n)
    e = rng.standard_normal(n)
    for t in range(2, n):
        y[t] = 0.3 * y[t - 1] + strength * x[t - 2] + 0.5 * e[t]
    return y, x


class TestConfig:
    def test_defaults(self):
        cfg = GrangerConfig()
        assert (cfg.lag, cfg.alpha, cfg.pearson_threshold, cfg.sample_len) == (30, 0.05, 0.95, 1000)

    @pytest.mark.parametrize("kwargs", [dict(lag=0), dict(alpha=1.0), dict(lag=30, sample_len=90),
                                        dict(pearson_threshold=0.0), dict(max_diff=-1)])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            GrangerConfig(**kwargs)


class TestPearsonFilter:
    def test_drops_later_duplicate(self, rng):
        a = rng.standard_normal(200)
        b = rng.standard_normal(200)
        kept = pearson_filter(_ts([a, b, -a + 1e-3 * rng.standard_normal(200), 2 * b]))
        assert kept == [0, 1]

    def test_threshold_boundary_inclusive(self, rng):
        a = rng.standard_normal(100)
        assert pearson_filter(_ts([a, a]), threshold=1.0) == [0, 1]

    def test_constant_channel(self):
        with pytest.raises(GrangerError):
            pearson_filter(_ts([[1.0, 2.0, 3.0], [1.0, 1.0, 1.0]]))


class TestStationarity:
    def test_white_noise_needs_no_difference(self, rng):
        _, order = make_stationary(rng.standard_normal(400))
        assert order == 0

    def test_random_walk_differenced_once(self, rng):
        x, order = make_stationary(np.cumsum(rng.standard_normal(400)))
        assert order == 1 and x.size == 399

    def test_double_integration(self, rng):
        _, order = make_stationary(np.cumsum(np.cumsum(rng.standard_normal(500))))
        assert order == 2

    def test_gives_up(self, rng):
        with pytest.raises(NonStationaryError):
            make_stationary(np.cumsum(np.cumsum(rng.standard_normal(500))), GrangerConfig(max_diff=1))

    def test_constant_is_nonstationary_error(self):
        with pytest.raises(NonStationaryError):
            make_stationary(np.ones(300))


class TestDesign:
    def test_layout_newest_first(self):
        y = np.arange(6.0)
        x = 10 + np.arange(6.0)
        D, target = build_lag_design(y, [y, x], 2)
        assert target.tolist() == [2, 3, 4, 5]
        assert D[0].tolist() == [1, 1, 0, 11, 10]

    def test_ols_exact_fit(self):
        X = np.column_stack([np.ones(5), np.arange(5.0)])
        coef, ssr = ols_fit_ssr(X, 2 + 3 * np.arange(5.0))
        assert np.allclose(coef, [2, 3]) and ssr < 1e-24


class TestGrangerPair:
    def test_detects_planted_cause(self, rng):
        y, x = _coupled(rng)
        res = granger_pair(y, x, GrangerConfig(lag=3, sample_len=100))
        assert res.rejected and res.p_value < 1e-10

    def test_independent_mostly_not_rejected(self):
        rejected = 0
        for seed in range(40):
            r = np.random.default_rng(seed)
            res = granger_pair(r.standard_normal(300), r.standard_normal(300),
                               GrangerConfig(lag=2, sample_len=100))
            rejected += res.rejected
        assert rejected <= 8

    def test_matches_statsmodels(self, rng):
        y, x = _coupled(rng, strength=0.1)
        ref = grangercausalitytests(np.column_stack([y, x]), maxlag=[4])
        f_ref, p_ref = ref[4][0]["ssr_ftest"][:2]
        res = granger_pair(y, x, GrangerConfig(lag=4, sample_len=100))
        assert res.f_stat == pytest.approx(f_ref, rel=1e-8)
        assert res.p_value == pytest.approx(p_ref, rel=1e-8)
        assert (res.df_num, res.df_den) == (4, len(y) - 4 - 9)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 5), st.integers(0, 10**6))
    def test_matches_normal_equation_oracle(self, lag, seed):
        r = np.random.default_rng(seed)
        n = int(r.integers(4 * lag + 8, 51))
        y, x = r.standard_normal(n), r.standard_normal(n)
        res = granger_pair(y, x, GrangerConfig(lag=lag, sample_len=max(100, 3 * lag + 1)))
        f, p, ssr_u, ssr_mv = granger_normal_equations(y, x, lag)
        assert res.f_stat == pytest.approx(f, rel=1e-8)
        assert res.p_value == pytest.approx(p, rel=1e-8)
        assert res.ssr_mv <= res.ssr_u

    def test_noise_free_pair_stays_finite(self):
        y = np.sin(np.arange(60) * 0.3)
        res = granger_pair(y, np.cos(np.arange(60) * 0.3), GrangerConfig(lag=3, sample_len=100))
        assert np.isfinite(res.f_stat) and 0.0 <= res.p_value <= 1.0

    def test_both_fits_exact_give_zero_f(self, rng):
        res = granger_pair(np.zeros(60), rng.standard_normal(60), GrangerConfig(lag=3, sample_len=100))
        assert (res.f_stat, res.p_value, res.rejected) == (0.0, 1.0, False)

    def test_too_few_observations(self):
        with pytest.raises(ValueError):
            granger_pair(np.arange(8.0), np.arange(8.0), GrangerConfig(lag=3, sample_len=100))


class TestAnalyze:
    def test_report_aggregates(self, rng):
        y, x = _coupled(rng, n=1200)
        rep = granger_analyze(_ts([y, x, rng.standard_normal(1200)]), GrangerConfig(lag=5))
        assert rep.retained_channels == [0, 1, 2]
        assert len(rep.pairs) == 6
        assert rep.avg_f == pytest.approx(np.mean([p.f_stat for p in rep.pairs]))
        assert rep.pct_rejected == pytest.approx(100 * sum(p.rejected for p in rep.pairs) / 6)
        strongest = max(rep.pairs, key=lambda p: p.f_stat)
        assert (strongest.effect, strongest.cause) == (0, 1)

    def test_uses_leading_sample_only(self, rng):
        y, x = _coupled(rng, n=1500)
        a = granger_analyze(_ts([y, x]), GrangerConfig(lag=4, sample_len=1000))
        b = granger_analyze(_ts([y[:1000], x[:1000]]), GrangerConfig(lag=4, sample_len=1000))
        assert a == b

    def test_short_series(self, rng):
        with pytest.raises(GrangerError):
            granger_analyze(_ts(rng.standard_normal((2, 500))))

    def test_all_redundant(self, rng):
        a = rng.standard_normal(1000)
        with pytest.raises(GrangerError):
            granger_analyze(_ts([a, 2 * a]))

    def test_skipped_channel(self, rng):
        y, x = _coupled(rng, n=1000)
        walk2 = np.cumsum(np.cumsum(np.cumsum(rng.standard_normal(1000))))
        rep = granger_analyze(_ts([y, x, walk2]), GrangerConfig(lag=3))
        assert rep.skipped_channels == [2] and rep.skipped_pairs == 4 and len(rep.pairs) == 2

    def test_deterministic_and_thread_independent(self, rng, monkeypatch):
        data = _ts(rng.standard_normal((4, 1000)))
        monkeypatch.setenv("TSF_THREADS", "1")
        a = granger_analyze(data, GrangerConfig(lag=5))
        monkeypatch.setenv("TSF_THREADS", "3")
        b = granger_analyze(data, GrangerConfig(lag=5))
        assert a == b


class TestExport:
    def test_json_round_trip(self, rng, tmp_path):
        rep = granger_analyze(_ts(rng.standard_normal((3, 1000))), GrangerConfig(lag=4))
        export_granger_report(rep, tmp_path / "r.json")
        assert load_granger_report(tmp_path / "r.json") == rep
        assert GrangerReport.from_dict(json.loads((tmp_path / "r.json").read_text())) == rep

    def test_csv(self, rng, tmp_path):
        rep = granger_analyze(_ts(rng.standard_normal((3, 1000))), GrangerConfig(lag=4))
        export_granger_report(rep, tmp_path / "r.csv", "csv")
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert lines[0].startswith("effect,cause,ssr_u") and len(lines) == 7

    def test_bad_format(self, rng, tmp_path):
        rep = granger_analyze(_ts(rng.standard_normal((2, 1000))), GrangerConfig(lag=2))
        with pytest.raises(ValueError):
            export_granger_report(rep, tmp_path / "r.x", "xml")
