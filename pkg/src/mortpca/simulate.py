"""Monte Carlo forecast ensembles and prediction intervals.

Trajectory ``j`` draws all of its innovations from its own stream,
``SeedSequence(seed, spawn_key=(j,))``: one standard-normal block of shape
(n_components, horizon), row ``k`` feeding component ``k``. Trajectories are
processed in fixed-size chunks, so the ensemble is bit-identical for any
number of worker threads and trajectory ``j`` does not depend on ``n_sims``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property, partial
from typing import Mapping, Sequence

import numpy as np
from scipy import stats
from scipy.special import expit
from threadpoolctl import threadpool_limits

from .errors import DataError
from .ingest import SeriesKey, WeekIndex
from .pca import PcaDecomposition
from .residual import ResidualModel, forecast_mean, forecast_variance, simulate_paths
from .trend import TrendModel, evaluate_trend

CHUNK_SIZE = 256
DEFAULT_LEVELS = (0.025, 0.125, 0.5, 0.875, 0.975)
_TINY = np.finfo(float).tiny
_ONE_MINUS = 1.0 - np.finfo(float).epsneg


@dataclass(frozen=True, eq=False)
class ForecastEnsemble:
    horizon_weeks: list[WeekIndex]
    series: list[SeriesKey]
    n_sims: int
    seed: int
    score_trajectories: np.ndarray  # n_sims x horizon x n_components
    rate_trajectories: np.ndarray  # n_sims x horizon x n_series
    exposures_used: np.ndarray  # horizon x n_series

    @cached_property
    def death_trajectories(self) -> np.ndarray:
        return self.rate_trajectories * self.exposures_used

    def group_deaths(self, idx: Sequence[int]) -> np.ndarray:
        """Per-trajectory death totals over a series subset, n_sims x horizon."""
        idx = np.asarray(idx, dtype=int)
        return np.einsum("nhs,hs->nh", self.rate_trajectories[:, :, idx], self.exposures_used[:, idx])


def trajectory_rng(seed: int, j: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(j,))))


def horizon_weeks(trend: TrendModel, horizon: int) -> list[WeekIndex]:
    start = trend.last_w + 1
    return [WeekIndex.from_offset(start + i, trend.anchor) for i in range(horizon)]


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("MORTPCA_THREADS", "1") or 1)
    return max(1, int(threads))


def simulate_ensemble(
    pca: PcaDecomposition,
    pc1_trend: TrendModel,
    pc1_residual: ResidualModel,
    other_models: Sequence[ResidualModel],
    exposures,
    horizon: int,
    n_sims: int,
    seed: int,
    *,
    series: Sequence[SeriesKey],
    threads: int | None = 1,
) -> ForecastEnsemble:
    """Simulate ``n_sims`` trajectories of all components ``horizon`` weeks ahead.

    The mortality index follows trend + residual; each remaining component
    follows its own model, independently. Scores map to logit rates through
    the fixed directions and then to rates and deaths.
    """
    n_comp = pca.n_components
    if len(other_models) != n_comp - 1:
        raise DataError(f"{len(other_models)} component models for {n_comp - 1} trailing components")
    if horizon <= 0:
        raise DataError("horizon must be positive")
    if n_sims < 1:
        raise DataError("n_sims must be at least 1")
    if len(series) != pca.n_series:
        raise DataError(f"{len(series)} series keys for {pca.n_series} series")
    expo = np.asarray(exposures, dtype=float)
    if expo.shape != (horizon, pca.n_series):
        raise DataError(f"exposures have shape {expo.shape}, expected {(horizon, pca.n_series)}")
    if not np.all(np.isfinite(expo)) or np.any(expo < 0):
        raise DataError("exposures must be finite and non-negative")
    weeks = horizon_weeks(pc1_trend, horizon)
    trend_path = evaluate_trend(pc1_trend, weeks)

    rw = all(m.kind == "random_walk" for m in other_models)
    if rw and other_models:
        rw_last = np.array([m.history[-1] for m in other_models])
        rw_sd = np.array([m.innovation_sd for m in other_models])
        rw_drift = np.array([m.drift for m in other_models])
        steps = np.arange(1, horizon + 1)[:, None]

    scores = np.empty((n_sims, horizon, n_comp))
    rates = np.empty((n_sims, horizon, pca.n_series))
    directions_t = np.ascontiguousarray(pca.directions.T)

    def run_chunk(j0: int) -> None:
        j1 = min(j0 + CHUNK_SIZE, n_sims)
        z = np.empty((j1 - j0, n_comp, horizon))
        for j in range(j0, j1):
            z[j - j0] = trajectory_rng(seed, j).standard_normal((n_comp, horizon))
        sc = scores[j0:j1]
        sc[:, :, 0] = trend_path + simulate_paths(pc1_residual, z[:, 0, :])
        if n_comp > 1:
            if rw:
                inc = np.cumsum(z[:, 1:, :].transpose(0, 2, 1) * rw_sd, axis=1)
                sc[:, :, 1:] = rw_last + rw_drift * steps + inc
            else:
                for k, m in enumerate(other_models, start=1):
                    sc[:, :, k] = simulate_paths(m, z[:, k, :])
        logits = sc @ directions_t
        logits += pca.column_means
        r = expit(logits, out=logits)
        np.clip(r, _TINY, _ONE_MINUS, out=r)
        rates[j0:j1] = r

    _run_tasks([partial(run_chunk, j0) for j0 in range(0, n_sims, CHUNK_SIZE)], threads)

    return ForecastEnsemble(weeks, list(series), n_sims, seed, scores, rates, expo)


def deaths_from_rates(rates, exposures) -> np.ndarray:
    """Expected deaths, rate x exposure elementwise (not rounded)."""
    r = np.asarray(rates, dtype=float)
    e = np.asarray(exposures, dtype=float)
    if r.shape != e.shape:
        raise DataError(f"rates {r.shape} and exposures {e.shape} differ in shape")
    if np.any(e < 0):
        raise DataError("exposures must be non-negative")
    return r * e


# ---------------------------------------------------------------------------
# quantiles


@dataclass(frozen=True, eq=False)
class QuantileSummary:
    """Quantiles per (week, label, level); labels are series or group names."""

    weeks: list[WeekIndex]
    labels: list[str]
    levels: np.ndarray
    values: np.ndarray  # weeks x labels x levels

    def level_index(self, level: float) -> int:
        hit = np.flatnonzero(np.isclose(self.levels, level, rtol=0, atol=1e-9))
        if not hit.size:
            raise DataError(f"quantile level {level} not in summary levels {self.levels.tolist()}")
        return int(hit[0])

    def at(self, level: float) -> np.ndarray:
        return self.values[:, :, self.level_index(level)]

    def label_index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise DataError(f"{label!r} not in quantile summary") from None

    def subset(self, labels: Sequence[str]) -> "QuantileSummary":
        idx = [self.label_index(lab) for lab in labels]
        return QuantileSummary(self.weeks, list(labels), self.levels, self.values[:, idx])


def _check_levels(levels) -> np.ndarray:
    lv = np.asarray(levels, dtype=float)
    if lv.ndim != 1 or lv.size == 0 or np.any((lv <= 0) | (lv >= 1)):
        raise DataError("quantile levels must lie strictly inside (0, 1)")
    return lv


def empirical_quantiles(samples, levels) -> np.ndarray:
    """Type-7 quantiles over axis 0; the level axis is moved last."""
    lv = _check_levels(levels)
    q = np.quantile(np.asarray(samples, dtype=float), lv, axis=0, method="linear")
    q = np.moveaxis(q, 0, -1)
    # interpolation can break monotonicity by one ulp
    return np.maximum.accumulate(q, axis=-1)


def group_series(series: Sequence[SeriesKey], by: str) -> dict[str, list[int]]:
    """Series index groups: ``all``, ``country``, ``sex-age`` or ``series``."""
    groups: dict[str, list[int]] = {}
    for j, key in enumerate(series):
        if by == "all":
            name = "all"
        elif by == "country":
            name = key.country
        elif by == "sex-age":
            name = f"{key.sex}_{key.age_group}"
        elif by == "series":
            name = key.label
        else:
            raise DataError(f"unknown grouping {by!r}; use all, country, sex-age or series")
        groups.setdefault(name, []).append(j)
    return groups


def _resolve_group(idx, series: Sequence[SeriesKey]) -> list[int]:
    out = []
    for item in idx:
        if isinstance(item, SeriesKey):
            if item not in series:
                raise DataError(f"group references unknown series {item.label}")
            out.append(series.index(item))
        else:
            i = int(item)
            if not 0 <= i < len(series):
                raise DataError(f"group references unknown series index {i}")
            out.append(i)
    if not out:
        raise DataError("empty group")
    return out


def _run_tasks(tasks, threads: int | None) -> None:
    """Run independent callables, on a worker pool when more than one thread is asked for."""
    threads = resolve_threads(threads)
    with threadpool_limits(limits=1):
        if threads == 1 or len(tasks) == 1:
            for task in tasks:
                task()
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(lambda task: task(), tasks))


def prediction_intervals(
    e: ForecastEnsemble,
    levels=DEFAULT_LEVELS,
    groups: Mapping[str, Sequence] | str | None = None,
    quantity: str = "deaths",
    threads: int | None = 1,
) -> QuantileSummary:
    """Empirical quantiles per week and series, or per week and group.

    ``groups`` is a mapping from group name to series (keys or indices) or
    a grouping name understood by :func:`group_series`.

    Group totals are summed trajectory by trajectory before the quantiles
    are taken, so cross-series dependence carries into the aggregate.
    Every cell is computed on its own, so ``threads`` never changes the result.
    """
    lv = _check_levels(levels)
    if quantity not in ("deaths", "rates"):
        raise DataError("quantity must be 'deaths' or 'rates'")
    if groups is None:
        labels = [k.label for k in e.series]
        out = np.empty((len(e.horizon_weeks), len(labels), lv.size))

        def series_block(sl):
            block = e.rate_trajectories[:, :, sl]
            if quantity == "deaths":
                block = block * e.exposures_used[:, sl]
            out[:, sl] = empirical_quantiles(block, lv)

        step = 8
        _run_tasks([partial(series_block, slice(s0, s0 + step)) for s0 in range(0, len(labels), step)],
                   threads)
        return QuantileSummary(e.horizon_weeks, labels, lv, out)
    if isinstance(groups, str):
        groups = group_series(e.series, groups)
    if quantity != "deaths":
        raise DataError("group aggregates are defined for deaths only")
    labels = list(groups)
    members = [_resolve_group(groups[name], e.series) for name in labels]
    out = np.empty((len(e.horizon_weeks), len(labels), lv.size))

    def group_block(g):
        out[:, g] = empirical_quantiles(e.group_deaths(members[g]), lv)

    _run_tasks([partial(group_block, g) for g in range(len(labels))], threads)
    return QuantileSummary(e.horizon_weeks, labels, lv, out)


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class IndexInterval:
    weeks: list[WeekIndex]
    median: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float


def theoretical_pc1_interval(
    pc1_trend: TrendModel, pc1_residual: ResidualModel, horizon: int, level: float = 0.95
) -> IndexInterval:
    """Gaussian interval: trend + mean forecast +/- z * forecast sd."""
    if not 0 <= level < 1:
        raise DataError(f"level must lie in [0, 1), got {level}")
    weeks = horizon_weeks(pc1_trend, horizon)
    median = evaluate_trend(pc1_trend, weeks) + forecast_mean(pc1_residual, horizon)
    half = stats.norm.ppf(0.5 + level / 2) * np.sqrt(forecast_variance(pc1_residual, horizon))
    return IndexInterval(weeks, median, median - half, median + half, level)


# ---------------------------------------------------------------------------
# export


def write_quantiles_csv(summary: QuantileSummary, path, label_column: str = "series") -> None:
    """Long format: ``week,<label_column>,level,value``."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"week,{label_column},level,value\n")
        for i, wk in enumerate(summary.weeks):
            for j, lab in enumerate(summary.labels):
                for k, lv in enumerate(summary.levels):
                    fh.write(f"{wk.label},{lab},{lv:.17g},{summary.values[i, j, k]:.17g}\n")


def read_quantiles_csv(path, anchor) -> QuantileSummary:
    import pandas as pd

    from .ingest import parse_year_week

    df = pd.read_csv(path, dtype=str)
    label_column = df.columns[1]
    weeks_txt = list(dict.fromkeys(df["week"]))
    labels = list(dict.fromkeys(df[label_column]))
    levels = np.array(sorted({float(x) for x in df["level"]}))
    weeks = [WeekIndex.of(*parse_year_week(t), anchor=anchor) for t in weeks_txt]
    wi = {t: i for i, t in enumerate(weeks_txt)}
    li = {t: i for i, t in enumerate(labels)}
    values = np.full((len(weeks), len(labels), len(levels)), np.nan)
    ki = np.searchsorted(levels, df["level"].astype(float).to_numpy())
    values[df["week"].map(wi).to_numpy(), df[label_column].map(li).to_numpy(), ki] = (
        df["value"].astype(float).to_numpy()
    )
    if np.isnan(values).any():
        raise DataError(f"incomplete quantile table in {path}")
    return QuantileSummary(weeks, labels, levels, values)


def write_trajectories(e: ForecastEnsemble, path) -> None:
    """Death trajectories as little-endian float64, row-major, plus a sidecar."""
    arr = np.ascontiguousarray(e.death_trajectories, dtype="<f8")
    arr.tofile(path)
    with open(f"{path}.txt", "w", encoding="utf-8") as fh:
        fh.write("dtype float64 little-endian row-major\n")
        fh.write("axes n_sims horizon n_series\n")
        fh.write(f"shape {arr.shape[0]} {arr.shape[1]} {arr.shape[2]}\n")
        fh.write("weeks " + " ".join(wk.label for wk in e.horizon_weeks) + "\n")
        fh.write("series " + " ".join(k.label for k in e.series) + "\n")


def read_trajectories(path) -> np.ndarray:
    with open(f"{path}.txt", encoding="utf-8") as fh:
        meta = dict(line.rstrip("\n").split(" ", 1) for line in fh if line.strip())
    shape = tuple(int(x) for x in meta["shape"].split())
    return np.fromfile(path, dtype="<f8").reshape(shape)

