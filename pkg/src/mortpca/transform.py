"""Logit and inverse-logit maps between rates in (0, 1) and the real line."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import DomainError
from .ingest import DEFAULT_ANCHOR, RatePanel, SeriesKey, WeekIndex


def logit(rate):
    """ln(rate / (1 - rate)), scalar or elementwise.

    Raises ``DomainError`` unless every rate lies strictly inside (0, 1).
    """
    r = np.asarray(rate, dtype=float)
    ok = (r > 0) & (r < 1)
    if not np.all(ok):
        bad = r[~ok].ravel()[0] if r.ndim else r
        raise DomainError(f"logit undefined for rate {float(bad)!r}; need 0 < rate < 1")
    # log(r) - log1p(-r) keeps precision for rates near 0 and near 1
    out = np.log(r) - np.log1p(-r)
    return float(out) if out.ndim == 0 else out


def inverse_logit(x):
    """1 / (1 + exp(-x)) without overflow.

    For x below about -745 the true value is under the smallest subnormal
    double and the result is exactly 0.0; x = -700 still gives ~1e-304.
    """
    v = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(v)):
        raise DomainError("inverse_logit needs finite input")
    out = expit(v)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class LogitPanel:
    weeks: list[WeekIndex]
    series: list[SeriesKey]
    values: np.ndarray
    anchor: tuple[int, int] = field(default=DEFAULT_ANCHOR)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.weeks), len(self.series)):
            raise DomainError(f"logit values shape {v.shape} does not match weeks x series")
        if not np.all(np.isfinite(v)):
            i, j = np.argwhere(~np.isfinite(v))[0]
            raise DomainError(f"non-finite logit for {self.series[j].label} week {self.weeks[i].label}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def w(self) -> np.ndarray:
        return np.array([wk.w for wk in self.weeks], dtype=int)

    @property
    def week_of_year(self) -> np.ndarray:
        return np.array([wk.week for wk in self.weeks], dtype=int)


def logit_panel(panel: RatePanel) -> LogitPanel:
    return LogitPanel(list(panel.weeks), list(panel.series), logit(panel.rates), panel.anchor)


def rate_panel(lp: LogitPanel, exposures) -> RatePanel:
    rates = inverse_logit(lp.values)
    bad = ~((rates > 0) & (rates < 1))
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise DomainError(
            f"logit {lp.values[i, j]!r} for {lp.series[j].label} week {lp.weeks[i].label} "
            "maps to a rate that rounds to 0 or 1"
        )
    return RatePanel(list(lp.weeks), list(lp.series), rates, np.asarray(exposures, float), anchor=lp.anchor)
