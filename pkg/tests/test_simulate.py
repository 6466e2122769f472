import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

from mortpca.errors import DataError
from mortpca.ingest import SeriesKey, week_range
from mortpca.pca import reconstruct
from mortpca.residual import forecast_mean, forecast_variance, random_walk_model
from mortpca.simulate import (
    ForecastEnsemble, deaths_from_rates, empirical_quantiles, group_series, prediction_intervals,
    read_quantiles_csv, read_trajectories, simulate_ensemble, theoretical_pc1_interval,
    write_quantiles_csv, write_trajectories,
)
from mortpca.trend import evaluate_trend

H = 26


def expo(fitted, h=H):
    return np.tile(np.linspace(1e5, 8e5, len(fitted.series)), (h, 1))


def frozen(fitted):
    """The fitted model with every innovation sd set to zero."""
    pc1 = dataclasses.replace(fitted.pc1_residual, innovation_sd=0.0)
    others = [dataclasses.replace(m, innovation_sd=0.0) for m in fitted.component_models]
    return dataclasses.replace(fitted, pc1_residual=pc1, component_models=others)


def test_zero_sd_ensemble_is_deterministic(fitted):
    m = frozen(fitted)
    e = m.forecast(expo(fitted), H, 5, seed=1)
    assert np.all(e.rate_trajectories == e.rate_trajectories[0])
    scores = np.column_stack(
        [evaluate_trend(m.trend, e.horizon_weeks) + forecast_mean(m.pc1_residual, H)]
        + [forecast_mean(c, H) for c in m.component_models])
    np.testing.assert_allclose(e.rate_trajectories[0], expit(reconstruct(m.pca, scores)), rtol=1e-12)
    q = prediction_intervals(e)
    assert np.all(q.values == q.values[:, :, :1])


def test_single_trajectory_matches_first_of_many(fitted):
    one = fitted.forecast(expo(fitted), H, 1, seed=42)
    many = fitted.forecast(expo(fitted), H, 300, seed=42)
    np.testing.assert_array_equal(one.rate_trajectories[0], many.rate_trajectories[0])
    np.testing.assert_array_equal(one.score_trajectories[0], many.score_trajectories[0])


def test_thread_count_does_not_change_output(fitted):
    a = fitted.forecast(expo(fitted), H, 700, seed=3, threads=1)
    b = fitted.forecast(expo(fitted), H, 700, seed=3, threads=4)
    assert a.rate_trajectories.tobytes() == b.rate_trajectories.tobytes()


def test_threads_from_environment(fitted, monkeypatch):
    a = fitted.forecast(expo(fitted), H, 300, seed=3, threads=1)
    monkeypatch.setenv("MORTPCA_THREADS", "3")
    b = fitted.forecast(expo(fitted), H, 300, seed=3, threads=None)
    assert a.rate_trajectories.tobytes() == b.rate_trajectories.tobytes()


def test_rates_and_deaths_bounded(fitted):
    e = fitted.forecast(expo(fitted), H, 500, seed=5)
    r = e.rate_trajectories
    assert np.all((r > 0) & (r < 1))
    d = e.death_trajectories
    assert np.all(np.isfinite(d)) and np.all(d >= 0)


def test_index_mean_converges(fitted):
    n = 10_000
    e = fitted.forecast(expo(fitted), H, n, seed=9)
    pc1 = e.score_trajectories[:, :, 0]
    theo = evaluate_trend(fitted.trend, e.horizon_weeks) + forecast_mean(fitted.pc1_residual, H)
    se = np.sqrt(forecast_variance(fitted.pc1_residual, H) / n)
    assert np.all(np.abs(pc1.mean(axis=0) - theo) <= 3 * se)


def test_band_widens_with_horizon(fitted):
    e = fitted.forecast(expo(fitted, 52), 52, 2000, seed=2)
    q = prediction_intervals(e, groups="all")
    width = q.at(0.975)[:, 0] - q.at(0.025)[:, 0]
    assert np.median(width[-4:]) >= np.median(width[:4])


def test_horizon_starts_after_baseline(fitted):
    e = fitted.forecast(expo(fitted), H, 2, seed=0)
    assert e.horizon_weeks[0].w == fitted.baseline_weeks[-1].w + 1
    assert len(e.horizon_weeks) == H


@pytest.mark.parametrize("kw, msg", [
    (dict(horizon=0), "horizon"), (dict(n_sims=0), "n_sims"), (dict(exposures=np.ones((3, 3))), "exposures"),
])
def test_input_validation(fitted, kw, msg):
    args = dict(exposures=expo(fitted), horizon=H, n_sims=10)
    args.update(kw)
    with pytest.raises(DataError, match=msg):
        simulate_ensemble(fitted.pca, fitted.trend, fitted.pc1_residual, fitted.component_models,
                          args["exposures"], args["horizon"], args["n_sims"], 0, series=fitted.series)


# --- quantiles ------------------------------------------------------------------


def test_median_order_statistic():
    samples = np.arange(1.0, 102.0)[:, None]
    assert empirical_quantiles(samples, [0.5])[0, 0] == 51.0


def test_type7_matches_numpy_linear(rng):
    x = rng.standard_normal((999, 3))
    lv = [0.025, 0.125, 0.5, 0.875, 0.975]
    np.testing.assert_array_equal(empirical_quantiles(x, lv),
                                  np.moveaxis(np.quantile(x, lv, axis=0), 0, -1))


def _ensemble(rates, exposures):
    n, h, s = rates.shape
    series = [SeriesKey("AUT", "M", a) for a in ("0-64", "65-74", "75-84", "85+")[:s]]
    return ForecastEnsemble(week_range(0, h), series, n, 0, np.zeros((n, h, s)), rates, exposures)


def test_aggregate_quantile_is_not_sum_of_quantiles():
    # perfectly anti-correlated series: their total never moves
    u = np.linspace(0.001, 0.009, 101)
    rates = np.stack([u, 0.01 - u], axis=-1)[:, None, :]
    e = _ensemble(rates, np.full((1, 2), 1000.0))
    per_series = prediction_intervals(e, [0.025, 0.975]).values[0]
    total = prediction_intervals(e, [0.025, 0.975], groups={"both": [0, 1]}).values[0, 0]
    assert total == pytest.approx([10.0, 10.0])
    assert per_series.sum(axis=0)[0] != pytest.approx(total[0])
    # comonotone series: the two agree
    rates = np.stack([u, 2 * u], axis=-1)[:, None, :]
    e = _ensemble(rates, np.full((1, 2), 1000.0))
    per_series = prediction_intervals(e, [0.025, 0.975]).values[0]
    total = prediction_intervals(e, [0.025, 0.975], groups={"both": [0, 1]}).values[0, 0]
    np.testing.assert_allclose(per_series.sum(axis=0), total, rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 400), st.integers(0, 2**32 - 1))
def test_quantiles_monotone_in_level(n, seed):
    x = np.random.default_rng(seed).standard_normal((n, 4)) * 1e3
    q = empirical_quantiles(x, [0.01, 0.025, 0.125, 0.5, 0.875, 0.975, 0.99])
    assert np.all(np.diff(q, axis=-1) >= 0)


def test_levels_validated(fitted):
    e = fitted.forecast(expo(fitted, 4), 4, 3, seed=0)
    with pytest.raises(DataError):
        prediction_intervals(e, [0.0, 0.5])
    with pytest.raises(DataError):
        prediction_intervals(e, groups={"bad": [99]})


def test_groupings(fitted):
    assert list(group_series(fitted.series, "all")) == ["all"]
    by_country = group_series(fitted.series, "country")
    assert list(by_country) == ["AUT", "BEL"] and all(len(v) == 8 for v in by_country.values())
    by_stratum = group_series(fitted.series, "sex-age")
    assert "F_85+" in by_stratum and all(len(v) == 2 for v in by_stratum.values())
    with pytest.raises(DataError):
        group_series(fitted.series, "region")


def test_group_total_is_per_trajectory_sum(fitted):
    e = fitted.forecast(expo(fitted, 6), 6, 50, seed=4)
    np.testing.assert_allclose(e.group_deaths(range(16)), e.death_trajectories.sum(axis=2), rtol=1e-12)


# --- theoretical interval ---------------------------------------------------------


def test_theoretical_interval_properties(fitted):
    zero = theoretical_pc1_interval(fitted.trend, fitted.pc1_residual, 60, level=0.0)
    np.testing.assert_array_equal(zero.lower, zero.upper)
    np.testing.assert_array_equal(zero.lower, zero.median)
    band = theoretical_pc1_interval(fitted.trend, fitted.pc1_residual, 60, level=0.95)
    half = (band.upper - band.lower) / 2
    assert half[0] == pytest.approx(1.959963984540054 * fitted.pc1_residual.innovation_sd, rel=1e-12)
    assert np.all(np.diff(half) >= 0)
    with pytest.raises(DataError):
        theoretical_pc1_interval(fitted.trend, fitted.pc1_residual, 5, level=1.0)


# --- deaths -------------------------------------------------------------------------


def test_deaths_examples(rng):
    assert deaths_from_rates(0.001, 10_000.0) == pytest.approx(10.0)
    assert deaths_from_rates(0.3, 0.0) == 0.0
    r, x = rng.random((5, 7)), rng.random((5, 7)) * 1e5
    oracle = np.array([[r[i, j] * x[i, j] for j in range(7)] for i in range(5)])
    np.testing.assert_array_equal(deaths_from_rates(r, x), oracle)
    with pytest.raises(DataError):
        deaths_from_rates(r, x[:, :3])


def test_constant_walk_component_stays_put():
    m = random_walk_model(0.0, last_value=2.0)
    np.testing.assert_array_equal(forecast_mean(m, 3), [2.0, 2.0, 2.0])


# --- export -------------------------------------------------------------------------


def test_quantile_csv_round_trip(tmp_path, fitted):
    e = fitted.forecast(expo(fitted, 5), 5, 40, seed=6)
    q = prediction_intervals(e, groups="country")
    path = tmp_path / "q.csv"
    write_quantiles_csv(q, path, "group")
    back = read_quantiles_csv(path, fitted.anchor)
    assert back.labels == q.labels and back.weeks == q.weeks
    np.testing.assert_array_equal(back.values, q.values)
    np.testing.assert_array_equal(back.levels, q.levels)


def test_trajectory_file_round_trip(tmp_path, fitted):
    e = fitted.forecast(expo(fitted, 5), 5, 7, seed=6)
    path = tmp_path / "traj.bin"
    write_trajectories(e, path)
    np.testing.assert_array_equal(read_trajectories(path), e.death_trajectories)
    assert "axes n_sims horizon n_series" in (tmp_path / "traj.bin.txt").read_text()
