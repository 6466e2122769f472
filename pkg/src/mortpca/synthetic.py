"""Synthetic weekly rate panels with known ground truth.

The generator follows the forecasting model itself: logit rates are
``base + D @ scores`` with an orthonormal direction matrix ``D`` whose first
column has strictly negative entries. The first score series is
``index_scale * (trend(w) + alpha(w))`` with a seasonal trend and a SARIMA
residual; every other score is a driftless random walk.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DataError
from .ingest import (
    AGE_GROUPS, COUNTRY_ORDER, DEFAULT_ANCHOR, RatePanel, WeekIndex, standard_series,
    week_offset, week_range,
)
from .residual import SarimaSpec, recurse, sarima_model
from .trend import TrendModel, evaluate_trend

# weekly death probabilities of roughly European magnitude, by age band
_AGE_LOGIT = (-9.9, -8.1, -7.0, -5.8)
_AGE_POP = (4.0e6, 4.5e5, 3.0e5, 1.0e5)
_AGE_LOADING = (0.6, 1.0, 1.1, 1.2)


@dataclass(frozen=True)
class ShockConfig:
    weeks: list[tuple[int, int]]
    multiplier: float = 1.2
    countries: list[str] | None = None


@dataclass(frozen=True)
class SynthConfig:
    n_countries: int = 2
    countries: list[str] | None = None
    start: tuple[int, int] = (2000, 2)
    end: tuple[int, int] = (2020, 52)
    anchor: tuple[int, int] = DEFAULT_ANCHOR
    base_logit: list[float] | None = None
    population: list[float] | None = None
    index_scale: float = 0.1
    intercept: float = 32.95
    cosine_amp: float = 1.05
    logistic_scale: float = 9.74
    t0: float = 220.0
    beta: float = 482.05
    spring: float = 0.71
    summer: float = 0.55
    autumn: float = 0.5
    pc1_ma: float = -0.26
    pc1_seasonal_ar: float = 0.16
    pc1_sd: float = 0.32
    rw_sd: float = 0.005
    shock: ShockConfig | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise DataError(f"unknown synthetic config keys {sorted(unknown)}")
        for key in ("start", "end", "anchor"):
            if key in d:
                d[key] = tuple(d[key])
        if d.get("shock") is not None:
            shock = dict(d["shock"])
            shock["weeks"] = [tuple(x) for x in shock["weeks"]]
            d["shock"] = ShockConfig(**shock)
        return cls(**d)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    def country_list(self) -> list[str]:
        if self.countries is not None:
            return list(self.countries)
        if not 1 <= self.n_countries <= len(COUNTRY_ORDER):
            raise DataError(f"n_countries must lie in 1..{len(COUNTRY_ORDER)}")
        return list(COUNTRY_ORDER[: self.n_countries])

    def trend_model(self) -> TrendModel:
        return TrendModel(
            "M1_3", self.intercept, self.cosine_amp, self.logistic_scale, self.t0, self.beta,
            self.spring, self.summer, self.autumn, 0.0, 0.0, 0.0, np.zeros(0), anchor=self.anchor,
        )


@dataclass(frozen=True, eq=False)
class SyntheticPanel:
    panel: RatePanel
    unshocked_rates: np.ndarray
    directions: np.ndarray
    base_logit: np.ndarray
    scores: np.ndarray  # generator scores, weeks x components
    pc1_trend: np.ndarray  # trend(w) in generator units (before index_scale)
    pc1_residual: np.ndarray
    shock_weeks: list[WeekIndex] = field(default_factory=list)
    config: SynthConfig = field(default_factory=SynthConfig)
    seed: int = 0

    def truth(self) -> dict:
        return {
            "seed": self.seed,
            "config": self.config.to_dict(),
            "series": [k.label for k in self.panel.series],
            "weeks": [wk.label for wk in self.panel.weeks],
            "shock_weeks": [wk.label for wk in self.shock_weeks],
            "base_logit": self.base_logit.tolist(),
            "directions": self.directions.tolist(),
            "pc1_trend": self.pc1_trend.tolist(),
            "pc1_residual": self.pc1_residual.tolist(),
            "scores": self.scores.tolist(),
        }


def generate_synthetic_panel(config: SynthConfig | None = None, seed: int = 0) -> SyntheticPanel:
    config = config or SynthConfig()
    countries = config.country_list()
    series = standard_series(countries)
    n_series = len(series)
    w0 = int(week_offset(*config.start, anchor=config.anchor))
    w1 = int(week_offset(*config.end, anchor=config.anchor))
    if w1 - w0 + 1 <= n_series:
        raise DataError("synthetic panel needs more weeks than series")
    weeks = week_range(w0, w1 - w0 + 1, config.anchor)
    n_weeks = len(weeks)
    rng = np.random.default_rng(seed)

    if config.base_logit is not None:
        base = np.asarray(config.base_logit, dtype=float)
        if base.shape != (n_series,):
            raise DataError(f"base_logit needs {n_series} values")
    else:
        base = np.array([
            _AGE_LOGIT[AGE_GROUPS.index(k.age_group)] - (0.3 if k.sex == "F" else 0.0)
            + 0.05 * countries.index(k.country)
            for k in series
        ])
    if config.population is not None:
        pop = np.asarray(config.population, dtype=float)
        if pop.shape != (n_series,):
            raise DataError(f"population needs {n_series} values")
    else:
        pop = np.array([
            _AGE_POP[AGE_GROUPS.index(k.age_group)] * (1.0 + 0.5 * countries.index(k.country))
            for k in series
        ])

    d1 = -np.array([_AGE_LOADING[AGE_GROUPS.index(k.age_group)] for k in series])
    d1 /= np.linalg.norm(d1)
    q, _ = np.linalg.qr(np.column_stack([d1, rng.standard_normal((n_series, n_series - 1))]))
    q[:, 0] = d1
    directions = q

    trend = evaluate_trend(config.trend_model(), weeks)
    spec = SarimaSpec(0, 1, 1, 1, 0, 0, 52)
    pc1_model = sarima_model(spec, ma=[config.pc1_ma], seasonal_ar=[config.pc1_seasonal_ar],
                             innovation_sd=config.pc1_sd)
    alpha = recurse(pc1_model, config.pc1_sd * rng.standard_normal(n_weeks))
    rw = np.cumsum(config.rw_sd * rng.standard_normal((n_weeks, n_series - 1)), axis=0)
    pc1 = trend + alpha
    scores = np.column_stack([config.index_scale * (pc1 - pc1.mean()), rw])

    logits = base + scores @ directions.T
    with np.errstate(over="ignore"):
        rates = 1.0 / (1.0 + np.exp(-logits))
    _check_rates(rates, "generated")

    unshocked = rates.copy()
    shock_weeks: list[WeekIndex] = []
    if config.shock is not None:
        shock = config.shock
        w_of = {wk.w: i for i, wk in enumerate(weeks)}
        cols = np.ones(n_series, dtype=bool)
        if shock.countries is not None:
            cols = np.array([k.country in shock.countries for k in series])
        for year, week in shock.weeks:
            wk = WeekIndex.of(year, week, config.anchor)
            if wk.w not in w_of:
                raise DataError(f"shock week {wk.label} outside the generated range")
            rates[w_of[wk.w], cols] *= shock.multiplier
            shock_weeks.append(wk)
        _check_rates(rates, "shocked")

    panel = RatePanel(weeks, series, rates, np.tile(pop, (n_weeks, 1)),
                      deaths=rates * pop, anchor=config.anchor)
    return SyntheticPanel(panel, unshocked, directions, base, scores, trend, alpha,
                          shock_weeks, config, seed)


def _check_rates(rates, what):
    ok = np.isfinite(rates) & (rates > 0) & (rates < 1)
    if not ok.all():
        raise DataError(f"synthetic configuration produces {what} rates outside (0, 1)")
