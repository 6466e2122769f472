"""Observed deaths against the forecast ensemble.

Significance is read off the equal-tailed prediction band: a week is
``significant_high`` when observed deaths lie strictly above the upper
bound and ``significant_low`` when strictly below the lower bound. No
correction is made for testing many weeks.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import DataError
from .ingest import RatePanel, SeriesKey, WeekIndex
from .pca import PcaDecomposition
from .residual import ResidualModel
from .simulate import (
    DEFAULT_LEVELS, ForecastEnsemble, QuantileSummary, group_series, prediction_intervals,
    theoretical_pc1_interval,
)
from .transform import logit
from .trend import TrendModel

INNER_LEVEL = 0.75
REPORT_COLUMNS = (
    "week", "group", "observed", "expected_median", "lo75", "hi75", "lo95", "hi95",
    "excess_median", "covid_deaths", "adjusted_median", "flag",
)


def band_levels(level: float) -> tuple[float, float]:
    """Lower and upper quantile levels of an equal-tailed band."""
    if not 0 < level < 1:
        raise DataError(f"band level must lie in (0, 1), got {level}")
    return 0.5 - level / 2, 0.5 + level / 2


def required_levels(level: float, inner_level: float = INNER_LEVEL) -> np.ndarray:
    lv = set(np.round(DEFAULT_LEVELS, 12))
    lv.update(np.round(band_levels(level), 12))
    lv.update(np.round(band_levels(inner_level), 12))
    return np.array(sorted(lv))


@dataclass(frozen=True, eq=False)
class ExcessReport:
    """Per (week, group) comparison of observed deaths with forecast quantiles.

    ``quantiles`` has shape ``(weeks, groups, levels)``.
    """

    weeks: list[WeekIndex]
    groups: list[str]
    observed: np.ndarray
    levels: np.ndarray
    quantiles: np.ndarray
    level: float = 0.95
    inner_level: float = INNER_LEVEL
    members: dict[str, list[SeriesKey]] = field(default_factory=dict)

    def __post_init__(self):
        shape = (len(self.weeks), len(self.groups))
        if self.observed.shape != shape:
            raise DataError(f"observed has shape {self.observed.shape}, expected {shape}")
        if self.quantiles.shape != shape + (len(self.levels),):
            raise DataError("quantile array does not match weeks x groups x levels")

    def has_level(self, q: float) -> bool:
        return bool(np.isclose(self.levels, q, rtol=0, atol=1e-9).any())

    def quantile(self, q: float) -> np.ndarray:
        hit = np.flatnonzero(np.isclose(self.levels, q, rtol=0, atol=1e-9))
        if hit.size == 0:
            raise DataError(f"quantile level {q} not available")
        return self.quantiles[:, :, hit[0]]

    def bounds(self, level: float | None = None) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = band_levels(self.level if level is None else level)
        return self.quantile(lo), self.quantile(hi)

    @property
    def expected_median(self) -> np.ndarray:
        return self.quantile(0.5)

    @property
    def excess_median(self) -> np.ndarray:
        return self.observed - self.expected_median

    @property
    def excess_lower(self) -> np.ndarray:
        return self.observed - self.bounds()[1]

    @property
    def excess_upper(self) -> np.ndarray:
        return self.observed - self.bounds()[0]

    @property
    def significant_high(self) -> np.ndarray:
        return self.excess_lower > 0

    @property
    def significant_low(self) -> np.ndarray:
        return self.excess_upper < 0

    def flag_labels(self) -> np.ndarray:
        return _labels(self.significant_high, self.significant_low,
                       *self._inner_flags(self.observed, self.observed))

    def _inner_flags(self, obs_hi, obs_lo):
        if self.inner_level >= self.level or not all(
                self.has_level(q) for q in band_levels(self.inner_level)):
            z = np.zeros(self.observed.shape, dtype=bool)
            return z, z
        lo, hi = self.bounds(self.inner_level)
        return obs_hi > hi, obs_lo < lo

    def group_index(self, name: str) -> int:
        try:
            return self.groups.index(name)
        except ValueError:
            raise DataError(f"unknown group {name!r}") from None

    def to_frame(self) -> pd.DataFrame:
        return _frame(self, np.full(self.observed.shape, np.nan), np.full(self.observed.shape, np.nan),
                      self.flag_labels())


@dataclass(frozen=True, eq=False)
class AdjustedReport:
    """Excess report with per-week COVID-19 deaths subtracted.

    Flags compare the shifted excess band with zero.
    """

    report: ExcessReport
    covid_deaths: np.ndarray

    @property
    def adjusted_median(self) -> np.ndarray:
        return self.report.excess_median - self.covid_deaths

    @property
    def adjusted_lower(self) -> np.ndarray:
        return self.report.excess_lower - self.covid_deaths

    @property
    def adjusted_upper(self) -> np.ndarray:
        return self.report.excess_upper - self.covid_deaths

    @property
    def significant_high(self) -> np.ndarray:
        return self.adjusted_lower > 0

    @property
    def significant_low(self) -> np.ndarray:
        return self.adjusted_upper < 0

    def flag_labels(self) -> np.ndarray:
        r = self.report
        shifted = r.observed - self.covid_deaths
        return _labels(self.significant_high, self.significant_low, *r._inner_flags(shifted, shifted))

    def to_frame(self) -> pd.DataFrame:
        return _frame(self.report, self.covid_deaths, self.adjusted_median, self.flag_labels())


def _labels(high, low, inner_high, inner_low) -> np.ndarray:
    out = np.full(high.shape, "none", dtype=object)
    out[inner_high] = "inconclusive_high"
    out[inner_low] = "inconclusive_low"
    out[high] = "significant_high"
    out[low] = "significant_low"
    return out


def _frame(r: ExcessReport, covid, adjusted, flags) -> pd.DataFrame:
    def q(level):
        return r.quantile(level) if r.has_level(level) else np.full(r.observed.shape, np.nan)

    lo75, hi75 = q(0.125), q(0.875)
    lo95, hi95 = q(0.025), q(0.975)
    n_w, n_g = r.observed.shape
    return pd.DataFrame({
        "week": np.repeat([wk.label for wk in r.weeks], n_g),
        "group": np.tile(r.groups, n_w),
        "observed": r.observed.ravel(),
        "expected_median": r.expected_median.ravel(),
        "lo75": lo75.ravel(), "hi75": hi75.ravel(),
        "lo95": lo95.ravel(), "hi95": hi95.ravel(),
        "excess_median": r.excess_median.ravel(),
        "covid_deaths": covid.ravel(),
        "adjusted_median": adjusted.ravel(),
        "flag": flags.ravel(),
    }, columns=list(REPORT_COLUMNS))


def write_report_csv(report: ExcessReport | AdjustedReport, path) -> None:
    report.to_frame().to_csv(path, index=False, float_format="%.17g", na_rep="")


# ---------------------------------------------------------------------------


def _resolve_grouping(grouping, series: Sequence[SeriesKey]) -> dict[str, list[int]]:
    if isinstance(grouping, str):
        return group_series(series, grouping)
    out = {}
    for name, members in grouping.items():
        idx = []
        for m in members:
            key = SeriesKey.from_label(m) if isinstance(m, str) else m
            if isinstance(key, SeriesKey):
                if key not in series:
                    raise DataError(f"group {name!r} references unknown series {key.label}")
                idx.append(series.index(key))
            else:
                i = int(key)
                if not 0 <= i < len(series):
                    raise DataError(f"group {name!r} references unknown series index {i}")
                idx.append(i)
        if not idx:
            raise DataError(f"group {name!r} is empty")
        out[name] = idx
    return out


def _aligned_observed(observed: RatePanel, weeks: Sequence[WeekIndex], series: Sequence[SeriesKey]):
    """Observed deaths on the forecast weeks common to both, in forecast series order."""
    obs_row = {wk.w: i for i, wk in enumerate(observed.weeks)}
    keep = [i for i, wk in enumerate(weeks) if wk.w in obs_row]
    if not keep:
        raise DataError("observed data share no week with the forecast horizon")
    outside = [wk for wk in observed.weeks if wk.w > weeks[-1].w]
    if outside:
        warnings.warn(f"{len(outside)} observed week(s) after the forecast horizon ignored",
                      RuntimeWarning, stacklevel=3)
    missing = [k.label for k in series if k not in observed.series]
    if missing:
        raise DataError(f"observed data lack series {missing[:3]}")
    cols = [observed.series_index(k) for k in series]
    deaths = observed.death_counts()[[obs_row[weeks[i].w] for i in keep]][:, cols]
    return keep, deaths


def excess_from_summary(
    summary: QuantileSummary,
    observed: RatePanel,
    series: Sequence[SeriesKey],
    groups: Mapping[str, Sequence[int]],
    level: float = 0.95,
    inner_level: float = INNER_LEVEL,
) -> ExcessReport:
    """Excess report from precomputed group quantiles.

    ``summary`` labels must be the group names of ``groups``; ``groups`` maps
    names to indices into ``series`` and defines how observed deaths add up.
    """
    band_levels(level)
    keep, deaths = _aligned_observed(observed, summary.weeks, series)
    names = list(groups)
    g_idx = [summary.label_index(n) for n in names]
    obs = np.column_stack([deaths[:, groups[n]].sum(axis=1) for n in names])
    q = summary.values[keep][:, g_idx]
    members = {n: [series[i] for i in groups[n]] for n in names}
    return ExcessReport([summary.weeks[i] for i in keep], names, obs, np.asarray(summary.levels),
                        q, level, inner_level, members)


def excess_report(
    observed: RatePanel,
    ensemble: ForecastEnsemble,
    grouping: str | Mapping[str, Sequence] = "all",
    level: float = 0.95,
    inner_level: float = INNER_LEVEL,
) -> ExcessReport:
    """Compare observed deaths with the ensemble, group by group.

    Group trajectories are summed before quantiles are taken.
    """
    groups = _resolve_grouping(grouping, ensemble.series)
    lv = required_levels(level, inner_level)
    summary = prediction_intervals(ensemble, lv, groups=groups)
    return excess_from_summary(summary, observed, ensemble.series, groups, level, inner_level)


def group_countries(report: ExcessReport) -> dict[str, list[str]]:
    """Countries making up each group; groups must consist of whole countries."""
    all_series = [k for ks in report.members.values() for k in ks]
    by_country: dict[str, set] = {}
    for k in set(all_series):
        by_country.setdefault(k.country, set()).add(k)
    out = {}
    for name, keys in report.members.items():
        countries = sorted({k.country for k in keys})
        covered = set().union(*(by_country[c] for c in countries))
        if set(keys) != covered:
            raise DataError(f"group {name!r} is not a union of whole countries")
        out[name] = countries
    return out


def covid_adjusted_report(
    report: ExcessReport,
    covid_weekly: np.ndarray,
    countries: Sequence[str],
    weeks: Sequence[WeekIndex] | None = None,
) -> AdjustedReport:
    """Subtract weekly COVID-19 deaths from each group's excess.

    ``covid_weekly`` is ``(weeks, countries)``; rows default to the report
    weeks. Report weeks without data (absent or NaN) count as zero, with a
    warning.
    """
    covid_weekly = np.asarray(covid_weekly, dtype=float)
    countries = list(countries)
    weeks = list(report.weeks) if weeks is None else list(weeks)
    if covid_weekly.shape != (len(weeks), len(countries)):
        raise DataError(f"covid matrix has shape {covid_weekly.shape}, expected "
                        f"({len(weeks)}, {len(countries)})")
    g_countries = group_countries(report)
    row_of = {wk.w: i for i, wk in enumerate(weeks)}
    out = np.zeros(report.observed.shape)
    n_missing = 0
    for g, name in enumerate(report.groups):
        cols = []
        for c in g_countries[name]:
            if c not in countries:
                raise DataError(f"no COVID-19 deaths for country {c} (group {name!r})")
            cols.append(countries.index(c))
        for t, wk in enumerate(report.weeks):
            i = row_of.get(wk.w)
            vals = covid_weekly[i, cols] if i is not None else np.full(len(cols), np.nan)
            n_missing += int(np.isnan(vals).any())
            out[t, g] = np.nansum(vals)
    if n_missing:
        warnings.warn(f"COVID-19 deaths missing for {n_missing} week-group cell(s); counted as zero",
                      RuntimeWarning, stacklevel=2)
    return AdjustedReport(report, out)


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class IndexTracking:
    weeks: list[WeekIndex]
    observed_index: np.ndarray
    median: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float

    @property
    def below_lower(self) -> np.ndarray:
        # a lower index means higher mortality
        return self.observed_index < self.lower

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "week": [wk.label for wk in self.weeks],
            "observed_index": self.observed_index,
            "forecast_median": self.median,
            "lower": self.lower,
            "upper": self.upper,
            "below_lower": self.below_lower,
        })


def pc1_tracking(
    pca: PcaDecomposition,
    observed_logits,
    weeks: Sequence[WeekIndex],
    pc1_trend: TrendModel,
    pc1_residual: ResidualModel,
    level: float = 0.95,
) -> IndexTracking:
    """Project observed logit rows onto component 1 and compare with the
    Gaussian forecast band of the index."""
    x = np.atleast_2d(np.asarray(observed_logits, dtype=float))
    weeks = list(weeks)
    if x.shape != (len(weeks), pca.n_series):
        raise DataError(f"observed rows have shape {x.shape}, expected ({len(weeks)}, {pca.n_series})")
    steps = np.array([wk.w - pc1_trend.last_w for wk in weeks], dtype=int)
    if steps.size == 0 or steps.min() < 1:
        raise DataError("tracked weeks must follow the end of the fitted period")
    band = theoretical_pc1_interval(pc1_trend, pc1_residual, int(steps.max()), level)
    pos = steps - 1
    index = (x - pca.column_means) @ pca.directions[:, 0]
    return IndexTracking(weeks, index, band.median[pos], band.lower[pos], band.upper[pos], level)


def observed_logits(observed: RatePanel, series: Sequence[SeriesKey]) -> np.ndarray:
    """Logit rates of ``observed`` in the given series order."""
    missing = [k.label for k in series if k not in observed.series]
    if missing:
        raise DataError(f"observed data lack series {missing[:3]}")
    return logit(observed.rates[:, [observed.series_index(k) for k in series]])
