import datetime as dt
import io

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mortpca.errors import DataError
from mortpca.ingest import (
    AGE_GROUPS, COUNTRY_ORDER, RAW_AGE_GROUPS, RatePanel, SeriesKey, WeekIndex,
    aggregate_age_groups, parse_covid_daily, parse_rate_panel, parse_year_week, read_hmd_stmf,
    standard_series, week_offset, week_range, weekly_covid_deaths, write_rate_panel,
)
from mortpca.synthetic import SynthConfig, generate_synthetic_panel

HEADER = "year,week,country,sex,age_group,rate,exposure,deaths\n"


def rows_csv(rows):
    return HEADER + "".join(",".join(map(str, r)) + "\n" for r in rows)


def full_grid_csv(weeks, countries=("AUT",), rate=0.001, expo=1000.0):
    rows = []
    for year, week in weeks:
        for c in countries:
            for sex in ("M", "F"):
                for age in AGE_GROUPS:
                    rows.append((year, week, c, sex, age, rate, expo, rate * expo))
    return rows_csv(rows)


# --- week grid --------------------------------------------------------------


def test_anchor_week_is_zero():
    assert week_offset(2000, 31) == 0
    assert WeekIndex.of(2000, 31).w == 0


def test_baseline_span_has_1039_weeks():
    first = WeekIndex.of(2000, 2)
    last = WeekIndex.of(2019, 52)
    assert (first.w, last.w) == (-29, 1009)
    assert last.w - first.w + 1 == 1039


@given(st.integers(1990, 2050), st.integers(1, 52))
def test_week_offset_bijective(year, week):
    wk = WeekIndex.of(year, week)
    back = WeekIndex.from_offset(wk.w)
    assert (back.year, back.week) == (year, week)


@given(st.integers(-2000, 2000))
def test_consecutive_weeks_step_by_one(w):
    a, b = week_range(w, 2)
    assert b.w - a.w == 1
    assert (b.year, b.week) == ((a.year, a.week + 1) if a.week < 52 else (a.year + 1, 1))


def test_parse_year_week_forms():
    assert parse_year_week("2020-13") == (2020, 13)
    with pytest.raises(DataError):
        parse_year_week("2020W05")
    with pytest.raises(DataError):
        parse_year_week("2020-60")


# --- series ordering ----------------------------------------------------------


def test_appendix_ordering_spain_indices():
    series = standard_series(COUNTRY_ORDER)
    assert len(series) == 152
    # 1-based positions 25 and 32
    assert series[24] == SeriesKey("ESP", "M", "0-64")
    assert series[31] == SeriesKey("ESP", "F", "85+")


def test_series_within_country_males_first_ages_ascending():
    series = standard_series(["AUT"])
    assert [k.label for k in series] == [
        "AUT_M_0-64", "AUT_M_65-74", "AUT_M_75-84", "AUT_M_85+",
        "AUT_F_0-64", "AUT_F_65-74", "AUT_F_75-84", "AUT_F_85+",
    ]


# --- parse_rate_panel ---------------------------------------------------------


def test_single_row_anchor_week():
    panel = parse_rate_panel(rows_csv([(2000, 31, "AUT", "M", "0-64", 0.001, 1000, 1)]))
    assert panel.shape == (1, 1)
    assert panel.weeks[0].w == 0


def test_week53_row_dropped():
    weeks = [(2015, 51), (2015, 52), (2015, 53), (2016, 1)]
    rows = [(y, w, "AUT", "M", "0-64", 0.001, 1000, 1) for y, w in weeks]
    panel = parse_rate_panel(rows_csv(rows))
    assert panel.dropped["week53"] == 1
    assert [wk.label for wk in panel.weeks] == ["2015-51", "2015-52", "2016-01"]


def test_full_panel_shape_19_countries():
    synth = generate_synthetic_panel(
        SynthConfig(n_countries=19, end=(2019, 52), rw_sd=0.001), seed=0)
    frame = pd.read_csv(io.StringIO(_to_csv(synth.panel)))
    panel = parse_rate_panel(frame)
    assert panel.shape == (1039, 152)
    assert panel.series == standard_series(COUNTRY_ORDER)


def _to_csv(panel):
    buf = io.StringIO()
    from mortpca.ingest import panel_to_frame

    panel_to_frame(panel).to_csv(buf, index=False)
    return buf.getvalue()


def test_leading_partial_weeks_dropped():
    # one series starts a week late, as with a missing first week
    text = full_grid_csv([(2000, 1), (2000, 2), (2000, 3)])
    df = pd.read_csv(io.StringIO(text))
    df = df[~((df.week == 1) & (df.sex == "F") & (df.age_group == "85+"))]
    panel = parse_rate_panel(df)
    assert panel.weeks[0].label == "2000-02"
    assert panel.dropped["leading"] == 7


def test_rows_in_any_order_give_canonical_panel():
    text = full_grid_csv([(2001, 5), (2001, 6)], countries=("BEL", "AUT"))
    df = pd.read_csv(io.StringIO(text)).sample(frac=1.0, random_state=3)
    panel = parse_rate_panel(df)
    assert panel.series == standard_series(["AUT", "BEL"])


@pytest.mark.parametrize("rate", [0.0, 1.0, -0.1, 1.5])
def test_rate_outside_unit_interval_rejected(rate):
    with pytest.raises(DataError, match="outside"):
        parse_rate_panel(rows_csv([(2000, 31, "AUT", "M", "0-64", rate, 1000, "")]))


def test_missing_cell_names_series_and_week():
    df = pd.read_csv(io.StringIO(full_grid_csv([(2001, 5), (2001, 6), (2001, 7)])))
    df = df[~((df.week == 6) & (df.sex == "M") & (df.age_group == "75-84"))]
    with pytest.raises(DataError, match=r"AUT_M_75-84.*2001-06"):
        parse_rate_panel(df)


def test_duplicate_row_rejected():
    row = (2000, 31, "AUT", "M", "0-64", 0.001, 1000, 1)
    with pytest.raises(DataError, match="duplicate"):
        parse_rate_panel(rows_csv([row, row]))


def test_inconsistent_deaths_rejected():
    with pytest.raises(DataError, match="inconsistent"):
        parse_rate_panel(rows_csv([(2000, 31, "AUT", "M", "0-64", 0.001, 1000, 2)]))
    # within 5% passes
    parse_rate_panel(rows_csv([(2000, 31, "AUT", "M", "0-64", 0.001, 10000, 10.4)]))


def test_unknown_age_group_rejected():
    with pytest.raises(DataError, match="age group"):
        parse_rate_panel(rows_csv([(2000, 31, "AUT", "M", "0-14", 0.001, 1000, 1)]))


def test_deaths_derived_when_absent():
    text = "year,week,country,sex,age_group,rate,exposure\n2000,31,AUT,M,0-64,0.002,500\n"
    panel = parse_rate_panel(text)
    assert panel.deaths is None
    assert panel.death_counts()[0, 0] == pytest.approx(1.0)


def test_round_trip_through_csv(tmp_path, synth):
    path = tmp_path / "panel.csv"
    write_rate_panel(synth.panel, path)
    first = parse_rate_panel(path)
    write_rate_panel(first, tmp_path / "again.csv")
    second = parse_rate_panel(tmp_path / "again.csv")
    assert first.equals(second)
    assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()
    np.testing.assert_allclose(first.rates, synth.panel.rates, rtol=1e-11)


# --- age aggregation ----------------------------------------------------------


def _raw_panel(rates, expo):
    series = [SeriesKey("AUT", "M", a) for a in RAW_AGE_GROUPS[: rates.shape[1]]]
    weeks = week_range(0, rates.shape[0])
    return RatePanel(weeks, series, rates, expo, deaths=rates * expo)


def test_merge_ratio_of_sums():
    raw = _raw_panel(np.array([[2 / 1000, 8 / 1000]]), np.array([[1000.0, 1000.0]]))
    merged = aggregate_age_groups(raw)
    assert merged.series == [SeriesKey("AUT", "M", "0-64")]
    assert merged.rates[0, 0] == pytest.approx(0.005, rel=1e-15)


def test_merge_band_with_itself_is_identity():
    raw = _raw_panel(np.array([[0.003, 0.004]]), np.array([[700.0, 900.0]]))
    merged = aggregate_age_groups(raw, {"0-14": ("0-14",)})
    np.testing.assert_array_equal(merged.rates, raw.rates)


def test_merge_matches_exposure_weighted_mean(rng):
    rates = rng.uniform(1e-5, 1e-2, (100, 2))
    expo = rng.uniform(1e3, 1e6, (100, 2))
    merged = aggregate_age_groups(_raw_panel(rates, expo))
    oracle = [(rates[i, 0] * expo[i, 0] + rates[i, 1] * expo[i, 1]) / (expo[i, 0] + expo[i, 1])
              for i in range(100)]
    np.testing.assert_allclose(merged.rates[:, 0], oracle, rtol=1e-13)


# --- STMF adapter -------------------------------------------------------------


def _stmf_text(weeks, d_young=0.0):
    head = "Short-term Mortality Fluctuations\n"
    cols = ("CountryCode,Year,Week,Sex,D0_14,D15_64,D65_74,D75_84,D85p,DTotal,"
            "R0_14,R15_64,R65_74,R75_84,R85p,RTotal,Split,SplitSex,Forecast\n")
    lines = []
    for year, week in weeks:
        for sex in ("m", "f", "b"):
            d = [d_young, 100.0, 80.0, 120.0, 150.0]
            pop = [1e6, 5e6, 8e5, 5e5, 2e5]
            r = [52 * di / p for di, p in zip(d, pop)]
            lines.append(",".join(map(str, ["AUT", year, week, sex, *d, sum(d), *r, 0.01, 0, 0, 0])))
    return head + cols + "\n".join(lines) + "\n"


def test_stmf_adapter_merges_young_bands(tmp_path):
    path = tmp_path / "stmf.csv"
    path.write_text(_stmf_text([(2010, 1), (2010, 2)], d_young=5.0))
    panel = read_hmd_stmf(path)
    assert panel.series == standard_series(["AUT"])
    # exposure recovered as D/R = pop/52 per band, so the merged rate is 52*105/6e6
    assert panel.rates[0, 0] == pytest.approx(105 / (6e6 / 52), rel=1e-12)
    assert panel.rates[0, 3] == pytest.approx(150 / (2e5 / 52), rel=1e-12)


def test_stmf_zero_young_deaths_use_neighbouring_exposure(tmp_path):
    text = _stmf_text([(2010, 1)], d_young=4.0) + _stmf_text([(2010, 2)], d_young=0.0).split("\n", 2)[2]
    panel = read_hmd_stmf(io.StringIO(text))
    assert panel.rates[1, 0] == pytest.approx(100 / (6e6 / 52), rel=1e-12)


# --- daily COVID-19 deaths ----------------------------------------------------


def _daily(rows):
    return "date,country,deaths\n" + "".join(f"{d},{c},{n}\n" for d, c, n in rows)


def test_seven_single_deaths():
    days = [dt.date(2020, 3, 2) + dt.timedelta(days=i) for i in range(7)]
    daily = parse_covid_daily(_daily([(d.isoformat(), "AUT", 1) for d in days]))
    assert len(daily.frame) == 7
    assert daily.total() == 7


def test_gap_day_zero_filled():
    daily = parse_covid_daily(_daily([("2020-03-02", "AUT", 3), ("2020-03-04", "AUT", 2)]))
    assert daily.frame["deaths"].tolist() == [3, 0, 2]


def test_duplicate_day_rejected():
    with pytest.raises(DataError, match="duplicate"):
        parse_covid_daily(_daily([("2020-03-02", "AUT", 3), ("2020-03-02", "AUT", 2)]))


@pytest.mark.parametrize("row, msg", [
    (("2020-13-02", "AUT", 3), "date"),
    (("2020-03-02", "AUT", -1), "negative"),
])
def test_bad_daily_rows_rejected(row, msg):
    with pytest.raises(DataError, match=msg):
        parse_covid_daily(_daily([row]))


def _weeks_2020(first, n):
    return week_range(WeekIndex.of(2020, first).w, n)


def test_constant_two_per_day_is_14_per_week():
    start = dt.date(2020, 3, 2)  # Monday of ISO week 10
    daily = parse_covid_daily(_daily(
        [((start + dt.timedelta(days=i)).isoformat(), "AUT", 2) for i in range(28)]))
    mat, countries = weekly_covid_deaths(daily, _weeks_2020(10, 4))
    assert countries == ["AUT"]
    np.testing.assert_array_equal(mat[:, 0], [14, 14, 14, 14])


def test_zero_days_give_zero_weeks():
    start = dt.date(2020, 3, 2)
    daily = parse_covid_daily(_daily(
        [((start + dt.timedelta(days=i)).isoformat(), "BEL", 0) for i in range(14)]))
    mat, _ = weekly_covid_deaths(daily, _weeks_2020(10, 2))
    assert not mat.any()


def test_weekly_sums_match_groupby_oracle(rng):
    start = dt.date(2020, 1, 6)
    days = [start + dt.timedelta(days=i) for i in range(70)]
    rows = [(d.isoformat(), c, int(rng.integers(0, 50))) for c in ("AUT", "BEL") for d in days]
    daily = parse_covid_daily(_daily(rows))
    mat, countries = weekly_covid_deaths(daily, _weeks_2020(2, 10), ["BEL", "AUT"])
    df = pd.DataFrame(rows, columns=["date", "country", "deaths"])
    df["week"] = [dt.date.fromisoformat(d).isocalendar()[1] for d in df["date"]]
    oracle = df.groupby(["week", "country"])["deaths"].sum().unstack()[countries]
    np.testing.assert_array_equal(mat, oracle.to_numpy())


def test_iso_week_53_folds_into_52():
    # 2020 has ISO week 53 (28 Dec 2020 - 3 Jan 2021)
    rows = [("2020-12-21", "AUT", 1), ("2020-12-28", "AUT", 5), ("2021-01-03", "AUT", 2)]
    daily = parse_covid_daily(_daily(rows))
    mat, _ = weekly_covid_deaths(daily, [WeekIndex.of(2020, 52)])
    assert mat[0, 0] == 1 + 5 + 2


def test_uncovered_week_strict_and_lenient():
    daily = parse_covid_daily(_daily([("2020-03-02", "AUT", 1)]))
    weeks = _weeks_2020(10, 2)
    with pytest.raises(DataError, match="2020-11"):
        weekly_covid_deaths(daily, weeks)
    mat, _ = weekly_covid_deaths(daily, weeks, strict=False)
    assert mat[0, 0] == 1 and np.isnan(mat[1, 0])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 1000), min_size=7, max_size=7 * 8).filter(lambda x: len(x) % 7 == 0))
def test_weekly_conservation(counts):
    start = dt.date(2020, 3, 2)
    daily = parse_covid_daily(_daily(
        [((start + dt.timedelta(days=i)).isoformat(), "AUT", n) for i, n in enumerate(counts)]))
    mat, _ = weekly_covid_deaths(daily, _weeks_2020(10, len(counts) // 7))
    assert mat.sum() == sum(counts)


def test_stmf_week_bounds(tmp_path):
    path = tmp_path / "stmf.csv"
    path.write_text(_stmf_text([(2010, 1), (2010, 2), (2010, 3)], d_young=5.0))
    panel = read_hmd_stmf(path, first=(2010, 2), last=(2010, 2))
    assert [wk.label for wk in panel.weeks] == ["2010-02"]
    with pytest.raises(DataError, match="no STMF rows"):
        read_hmd_stmf(path, first=(2011, 1))
