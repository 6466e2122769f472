"""Weekly mortality-rate panels and daily cause-specific death counts.

Everything here works on a strict 52-week calendar: a week is identified by
``(year, week)`` with ``week`` in 1..52, and by a signed offset ``w`` that is
zero at calendar week 31 of the anchor year.
"""

from __future__ import annotations

import datetime as _dt
import io
import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import DataError

logger = logging.getLogger(__name__)

WEEKS_PER_YEAR = 52
DEFAULT_ANCHOR = (2000, 31)

# Country blocks in the order of the published series numbering (HMD codes).
COUNTRY_ORDER = (
    "AUT", "BEL", "CHE", "ESP", "EST", "FIN", "FRATNP", "GBR_SCO", "HUN", "ISR",
    "LTU", "LVA", "NLD", "NOR", "POL", "PRT", "SVK", "SVN", "SWE",
)
COUNTRY_NAMES = {
    "AUT": "Austria", "BEL": "Belgium", "CHE": "Switzerland", "ESP": "Spain",
    "EST": "Estonia", "FIN": "Finland", "FRATNP": "France", "GBR_SCO": "Scotland",
    "HUN": "Hungary", "ISR": "Israel", "LTU": "Lithuania", "LVA": "Latvia",
    "NLD": "Netherlands", "NOR": "Norway", "POL": "Poland", "PRT": "Portugal",
    "SVK": "Slovakia", "SVN": "Slovenia", "SWE": "Sweden",
}
_NAME_TO_CODE = {name.lower(): code for code, name in COUNTRY_NAMES.items()}

SEXES = ("M", "F")
AGE_GROUPS = ("0-64", "65-74", "75-84", "85+")
RAW_AGE_GROUPS = ("0-14", "15-64", "65-74", "75-84", "85+")
DEFAULT_AGE_MERGE = {"0-64": ("0-14", "15-64")}

RATE_COLUMNS = ("year", "week", "country", "sex", "age_group", "rate", "exposure", "deaths")
DEATHS_TOLERANCE = 0.05


# ---------------------------------------------------------------------------
# calendar


def week_offset(year, week, anchor=DEFAULT_ANCHOR):
    """Signed week offset of ``(year, week)`` relative to ``anchor``.

    Works elementwise on arrays.
    """
    ay, aw = anchor
    return (np.asarray(year) - ay) * WEEKS_PER_YEAR + (np.asarray(week) - aw)


@dataclass(frozen=True, order=True)
class WeekIndex:
    w: int
    year: int = field(compare=False)
    week: int = field(compare=False)

    @classmethod
    def of(cls, year: int, week: int, anchor=DEFAULT_ANCHOR) -> "WeekIndex":
        if not 1 <= week <= WEEKS_PER_YEAR:
            raise DataError(f"week {week} outside 1..{WEEKS_PER_YEAR}")
        return cls(int(week_offset(year, week, anchor)), int(year), int(week))

    @classmethod
    def from_offset(cls, w: int, anchor=DEFAULT_ANCHOR) -> "WeekIndex":
        ay, aw = anchor
        k = int(w) + (aw - 1)
        year, week0 = divmod(k, WEEKS_PER_YEAR)
        return cls(int(w), ay + year, week0 + 1)

    @property
    def label(self) -> str:
        return f"{self.year}-{self.week:02d}"


def parse_year_week(text: str) -> tuple[int, int]:
    """Parse ``"YYYY-WW"`` into ``(year, week)``."""
    try:
        year, week = (int(part) for part in str(text).strip().split("-"))
    except ValueError:
        raise DataError(f"cannot parse year-week {text!r}; expected YYYY-WW") from None
    if not 1 <= week <= WEEKS_PER_YEAR:
        raise DataError(f"week {week} outside 1..{WEEKS_PER_YEAR} in {text!r}")
    return year, week


def week_range(first_w: int, n: int, anchor=DEFAULT_ANCHOR) -> list[WeekIndex]:
    return [WeekIndex.from_offset(first_w + i, anchor) for i in range(n)]


def iso_to_grid(iso_year: int, iso_week: int) -> tuple[int, int]:
    """Map an ISO week onto the 52-week grid (week 53 folds into week 52)."""
    return iso_year, min(iso_week, WEEKS_PER_YEAR)


# ---------------------------------------------------------------------------
# series keys


def country_code(country: str) -> str:
    return _NAME_TO_CODE.get(country.lower(), country)


def _age_lower(age_group: str) -> int:
    head = age_group.rstrip("+").split("-")[0]
    try:
        return int(head)
    except ValueError:
        raise DataError(f"unrecognised age group {age_group!r}") from None


@dataclass(frozen=True)
class SeriesKey:
    country: str
    sex: str
    age_group: str

    def __post_init__(self):
        if self.sex not in SEXES:
            raise DataError(f"sex must be one of {SEXES}, got {self.sex!r}")
        _age_lower(self.age_group)

    @property
    def label(self) -> str:
        return f"{self.country}_{self.sex}_{self.age_group}"

    @classmethod
    def from_label(cls, label: str) -> "SeriesKey":
        country, sex, age = label.rsplit("_", 2)
        return cls(country, sex, age)

    def sort_key(self):
        code = country_code(self.country)
        if code in COUNTRY_ORDER:
            block = (0, COUNTRY_ORDER.index(code), "")
        else:
            block = (1, 0, self.country)
        return block + (SEXES.index(self.sex), _age_lower(self.age_group))


def order_series(keys: Iterable[SeriesKey]) -> list[SeriesKey]:
    """Country blocks; within a country males then females, ages ascending."""
    return sorted(keys, key=SeriesKey.sort_key)


def standard_series(countries: Sequence[str], age_groups=AGE_GROUPS) -> list[SeriesKey]:
    keys = [SeriesKey(c, s, a) for c in countries for s in SEXES for a in age_groups]
    return order_series(keys)


# ---------------------------------------------------------------------------
# rate panel


@dataclass(frozen=True, eq=False)
class RatePanel:
    """Weeks x series matrix of mortality rates with exposures.

    ``dropped`` records how many input rows ingest discarded, by reason.
    """

    weeks: list[WeekIndex]
    series: list[SeriesKey]
    rates: np.ndarray
    exposures: np.ndarray
    deaths: np.ndarray | None = None
    anchor: tuple[int, int] = DEFAULT_ANCHOR
    dropped: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        shape = (len(self.weeks), len(self.series))
        for name in ("rates", "exposures", "deaths"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=float)
            if arr.shape != shape:
                raise DataError(f"{name} has shape {arr.shape}, expected {shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if len(set(self.series)) != len(self.series):
            raise DataError("duplicate series keys in panel")
        rates = self.rates
        if not np.all((rates > 0) & (rates < 1)):
            i, j = np.argwhere(~((rates > 0) & (rates < 1)))[0]
            raise DataError(
                f"rate {rates[i, j]!r} outside (0, 1) for {self.series[j].label} "
                f"week {self.weeks[i].label}"
            )
        if np.any(~np.isfinite(self.exposures)) or np.any(self.exposures < 0):
            raise DataError("exposures must be finite and non-negative")
        if self.deaths is not None:
            if np.any(self.deaths < 0):
                raise DataError("death counts must be non-negative")

    @property
    def shape(self) -> tuple[int, int]:
        return self.rates.shape

    @property
    def w(self) -> np.ndarray:
        return np.array([wk.w for wk in self.weeks], dtype=int)

    @property
    def week_of_year(self) -> np.ndarray:
        return np.array([wk.week for wk in self.weeks], dtype=int)

    @property
    def countries(self) -> list[str]:
        seen = []
        for key in self.series:
            if key.country not in seen:
                seen.append(key.country)
        return seen

    def death_counts(self) -> np.ndarray:
        """Observed deaths, or rate x exposure when none were supplied."""
        if self.deaths is not None:
            return self.deaths
        return self.rates * self.exposures

    def series_index(self, key: SeriesKey) -> int:
        try:
            return self.series.index(key)
        except ValueError:
            raise DataError(f"series {key.label} not in panel") from None

    def select_weeks(self, mask) -> "RatePanel":
        mask = np.asarray(mask)
        idx = np.flatnonzero(mask) if mask.dtype == bool else mask
        return RatePanel(
            weeks=[self.weeks[i] for i in idx],
            series=list(self.series),
            rates=self.rates[idx],
            exposures=self.exposures[idx],
            deaths=None if self.deaths is None else self.deaths[idx],
            anchor=self.anchor,
        )

    def between(self, first: WeekIndex | None = None, last: WeekIndex | None = None):
        w = self.w
        mask = np.ones(len(w), dtype=bool)
        if first is not None:
            mask &= w >= first.w
        if last is not None:
            mask &= w <= last.w
        return self.select_weeks(mask)

    def equals(self, other: "RatePanel") -> bool:
        same_deaths = (self.deaths is None) == (other.deaths is None) and (
            self.deaths is None or np.array_equal(self.deaths, other.deaths)
        )
        return (
            self.weeks == other.weeks
            and self.series == other.series
            and np.array_equal(self.rates, other.rates)
            and np.array_equal(self.exposures, other.exposures)
            and same_deaths
        )


def _read_csv(source) -> pd.DataFrame:
    if isinstance(source, pd.DataFrame):
        return source.copy()
    if isinstance(source, str) and "\n" in source:
        source = io.StringIO(source)
    try:
        return pd.read_csv(source, dtype={"country": str, "sex": str, "age_group": str})
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read CSV: {exc}") from exc


def parse_rate_panel(
    source,
    anchor=DEFAULT_ANCHOR,
    age_groups: Sequence[str] | None = AGE_GROUPS,
    check_deaths: bool = True,
) -> RatePanel:
    """Read a rate CSV into a complete rectangular panel.

    ``source`` is a path, a file object, CSV text or a DataFrame with columns
    ``year,week,country,sex,age_group,rate,exposure[,deaths]``. Week-53 rows
    are dropped and so is every week before the first week present in all
    series; the drop counts are stored in ``panel.dropped``. Pass
    ``age_groups=RAW_AGE_GROUPS`` for the five-band layout, or ``None`` to
    accept any band labels.
    """
    df = _read_csv(source)
    missing = [c for c in RATE_COLUMNS[:7] if c not in df.columns]
    if missing:
        raise DataError(f"rate CSV lacks columns {missing}")
    if df.empty:
        raise DataError("rate CSV has no rows")
    row_no = df.index.to_numpy() + 2  # header is line 1

    for col in ("year", "week", "rate", "exposure"):
        values = pd.to_numeric(df[col], errors="coerce")
        bad = values.isna().to_numpy()
        if bad.any():
            raise DataError(f"non-numeric or missing {col} at line {row_no[bad][0]}")
        df[col] = values
    df["sex"] = df["sex"].str.strip().str.upper()
    bad_sex = ~df["sex"].isin(SEXES).to_numpy()
    if bad_sex.any():
        raise DataError(f"sex must be M or F (line {row_no[bad_sex][0]})")
    df["age_group"] = df["age_group"].str.strip()
    df["country"] = df["country"].str.strip()
    if age_groups is not None:
        bad_age = ~df["age_group"].isin(age_groups).to_numpy()
        if bad_age.any():
            raise DataError(
                f"age group {df['age_group'].to_numpy()[bad_age][0]!r} not in {tuple(age_groups)} "
                f"(line {row_no[bad_age][0]})"
            )

    week = df["week"].to_numpy().astype(int)
    bad_week = (week < 1) | (week > 53)
    if bad_week.any():
        raise DataError(f"week {week[bad_week][0]} outside 1..53 (line {row_no[bad_week][0]})")
    is53 = week == 53
    n_week53 = int(is53.sum())
    if n_week53:
        logger.info("dropping %d week-53 rows", n_week53)
    df = df.loc[~is53].reset_index(drop=True)
    row_no = row_no[~is53]
    if df.empty:
        raise DataError("no rows left after dropping week 53")

    rate = df["rate"].to_numpy(dtype=float)
    bad_rate = ~((rate > 0) & (rate < 1))
    if bad_rate.any():
        k = np.flatnonzero(bad_rate)[0]
        raise DataError(f"rate {rate[k]!r} outside (0, 1) at line {row_no[k]}")
    exposure = df["exposure"].to_numpy(dtype=float)
    if np.any(exposure < 0):
        k = np.flatnonzero(exposure < 0)[0]
        raise DataError(f"negative exposure at line {row_no[k]}")

    deaths = None
    if "deaths" in df.columns:
        d = pd.to_numeric(df["deaths"], errors="coerce").to_numpy(dtype=float)
        if np.isnan(d).all():
            deaths = None
        elif np.isnan(d).any():
            raise DataError(f"missing deaths at line {row_no[np.isnan(d)][0]}")
        elif np.any(d < 0):
            raise DataError(f"negative deaths at line {row_no[d < 0][0]}")
        else:
            deaths = d

    keys = [SeriesKey(c, s, a) for c, s, a in zip(df["country"], df["sex"], df["age_group"])]
    series = order_series(set(keys))
    col_of = {key: j for j, key in enumerate(series)}
    col = np.fromiter((col_of[k] for k in keys), dtype=int, count=len(keys))
    w = week_offset(df["year"].to_numpy().astype(int), df["week"].to_numpy().astype(int), anchor)

    order = np.lexsort((w, col))
    dup = (np.diff(col[order]) == 0) & (np.diff(w[order]) == 0)
    if dup.any():
        k = order[np.flatnonzero(dup)[0] + 1]
        wk = WeekIndex.from_offset(int(w[k]), anchor)
        raise DataError(f"duplicate row for {keys[k].label} week {wk.label} (line {row_no[k]})")

    first_per_series = np.full(len(series), np.iinfo(int).max)
    np.minimum.at(first_per_series, col, w)
    start = int(first_per_series.max())
    lead = w < start
    n_lead = int(lead.sum())
    if n_lead:
        logger.info("dropping %d rows before the first week common to all series", n_lead)
    end = int(w.max())
    n_weeks = end - start + 1
    keep = ~lead
    wi = w[keep] - start
    cj = col[keep]

    grid = np.full((n_weeks, len(series)), np.nan)
    grid[wi, cj] = rate[keep]
    if np.isnan(grid).any():
        i, j = np.argwhere(np.isnan(grid))[0]
        wk = WeekIndex.from_offset(start + int(i), anchor)
        raise DataError(f"missing cell for {series[j].label} week {wk.label}")
    expo = np.zeros_like(grid)
    expo[wi, cj] = exposure[keep]
    dgrid = None
    if deaths is not None:
        dgrid = np.zeros_like(grid)
        dgrid[wi, cj] = deaths[keep]
        if check_deaths:
            gap = np.abs(dgrid - grid * expo) / np.maximum(dgrid, 1.0)
            if np.any(gap > DEATHS_TOLERANCE):
                i, j = np.argwhere(gap > DEATHS_TOLERANCE)[0]
                wk = WeekIndex.from_offset(start + int(i), anchor)
                raise DataError(
                    f"deaths inconsistent with rate x exposure for {series[j].label} "
                    f"week {wk.label}: {dgrid[i, j]} vs {grid[i, j] * expo[i, j]:.6g}"
                )

    return RatePanel(
        weeks=week_range(start, n_weeks, anchor),
        series=series,
        rates=grid,
        exposures=expo,
        deaths=dgrid,
        anchor=anchor,
        dropped={"week53": n_week53, "leading": n_lead},
    )


def panel_to_frame(panel: RatePanel, digits: int = 12) -> pd.DataFrame:
    n_w, n_s = panel.shape
    wk = np.repeat(np.arange(n_w), n_s)
    sj = np.tile(np.arange(n_s), n_w)
    fmt = f"{{:.{digits}g}}".format
    frame = pd.DataFrame(
        {
            "year": [panel.weeks[i].year for i in wk],
            "week": [panel.weeks[i].week for i in wk],
            "country": [panel.series[j].country for j in sj],
            "sex": [panel.series[j].sex for j in sj],
            "age_group": [panel.series[j].age_group for j in sj],
            "rate": [fmt(x) for x in panel.rates.ravel()],
            "exposure": [fmt(x) for x in panel.exposures.ravel()],
        }
    )
    frame["deaths"] = "" if panel.deaths is None else [fmt(x) for x in panel.deaths.ravel()]
    return frame


def write_rate_panel(panel: RatePanel, path, digits: int = 12) -> None:
    """Write a panel in the rate-CSV schema (12 significant digits)."""
    panel_to_frame(panel, digits).to_csv(path, index=False)


def aggregate_age_groups(
    raw: RatePanel, merge_spec: Mapping[str, Sequence[str]] = DEFAULT_AGE_MERGE
) -> RatePanel:
    """Merge age bands: merged rate = sum(deaths) / sum(exposures).

    Bands not mentioned in ``merge_spec`` pass through unchanged.
    """
    deaths = raw.death_counts()
    claimed = {band: new for new, bands in merge_spec.items() for band in bands}
    groups: dict[tuple, list[int]] = {}
    labels: dict[tuple, SeriesKey] = {}
    for j, key in enumerate(raw.series):
        new_age = claimed.get(key.age_group, key.age_group)
        gkey = (key.country, key.sex, new_age)
        groups.setdefault(gkey, []).append(j)
        labels[gkey] = SeriesKey(*gkey)
    series = order_series(labels.values())
    n_w = len(raw.weeks)
    rates = np.empty((n_w, len(series)))
    expo = np.empty_like(rates)
    dsum = np.empty_like(rates)
    for k, key in enumerate(series):
        idx = groups[(key.country, key.sex, key.age_group)]
        if len(idx) == 1:
            j = idx[0]
            rates[:, k] = raw.rates[:, j]
            expo[:, k] = raw.exposures[:, j]
            dsum[:, k] = deaths[:, j]
            continue
        e = raw.exposures[:, idx].sum(axis=1)
        d = deaths[:, idx].sum(axis=1)
        if np.any(e <= 0):
            i = int(np.flatnonzero(e <= 0)[0])
            raise DataError(f"zero merged exposure for {key.label} week {raw.weeks[i].label}")
        rates[:, k] = d / e
        expo[:, k] = e
        dsum[:, k] = d
    return RatePanel(
        weeks=list(raw.weeks),
        series=series,
        rates=rates,
        exposures=expo,
        deaths=dsum if raw.deaths is not None else None,
        anchor=raw.anchor,
        dropped=dict(raw.dropped),
    )


# ---------------------------------------------------------------------------
# HMD short-term mortality fluctuations adapter

_STMF_BANDS = {"0_14": "0-14", "15_64": "15-64", "65_74": "65-74", "75_84": "75-84", "85p": "85+"}


def stmf_to_rate_frame(source, countries: Sequence[str] | None = None) -> pd.DataFrame:
    """Convert an HMD STMF file to the five-band rate-CSV layout.

    STMF ships deaths ``D<band>`` and annualised rates ``R<band>`` per
    country, year, week and sex. Exposure is recovered as deaths / rate; when
    a band has zero deaths (rate 0) its exposure is taken from the nearest
    week of the same series with a positive rate.
    """
    if isinstance(source, (str, os.PathLike)) and not str(source).count("\n"):
        text = open(source, encoding="utf-8").read()
    else:
        text = source.read() if hasattr(source, "read") else source
    lines = text.splitlines()
    start = next((i for i, ln in enumerate(lines) if ln.startswith("CountryCode")), None)
    if start is None:
        raise DataError("STMF file lacks the CountryCode header line")
    df = pd.read_csv(io.StringIO("\n".join(lines[start:])))
    df = df[df["Sex"].isin(["m", "f"])]
    if countries is not None:
        df = df[df["CountryCode"].isin(countries)]
    frames = []
    for suffix, band in _STMF_BANDS.items():
        d = df[f"D{suffix}"].to_numpy(dtype=float)
        r = df[f"R{suffix}"].to_numpy(dtype=float)
        part = pd.DataFrame(
            {
                "year": df["Year"].to_numpy(dtype=int),
                "week": df["Week"].to_numpy(dtype=int),
                "country": df["CountryCode"].to_numpy(),
                "sex": np.where(df["Sex"].to_numpy() == "m", "M", "F"),
                "age_group": band,
                "rate": r,
                "deaths": d,
            }
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            part["exposure"] = np.where(r > 0, d / r, np.nan)
        frames.append(part)
    out = pd.concat(frames, ignore_index=True)
    out = out.sort_values(["country", "sex", "age_group", "year", "week"], kind="mergesort")
    out["exposure"] = out.groupby(["country", "sex", "age_group"])["exposure"].transform(
        lambda s: s.ffill().bfill()
    )
    if out["exposure"].isna().any():
        raise DataError("a series has no week with a positive rate; exposure unrecoverable")
    return out.reset_index(drop=True)[list(RATE_COLUMNS)]


def read_hmd_stmf(source, countries=None, anchor=DEFAULT_ANCHOR, first: tuple[int, int] | None = None,
                  last: tuple[int, int] | None = None) -> RatePanel:
    """STMF file -> four-band panel (bands below 65 merged).

    ``first`` and ``last`` are optional (year, week) bounds, applied after
    exposures are recovered, for files whose countries cover different spans.
    The merge happens on the flat table because the raw young bands may hold
    zero rates, which a panel does not admit.
    """
    frame = stmf_to_rate_frame(source, countries)
    key = frame["year"] * 100 + frame["week"]
    keep = np.ones(len(frame), dtype=bool)
    if first is not None:
        keep &= (key >= first[0] * 100 + first[1]).to_numpy()
    if last is not None:
        keep &= (key <= last[0] * 100 + last[1]).to_numpy()
    frame = frame[keep]
    if frame.empty:
        raise DataError("no STMF rows inside the requested weeks")
    band_map = {b: new for new, bands in DEFAULT_AGE_MERGE.items() for b in bands}
    frame = frame.assign(age_group=frame["age_group"].map(lambda a: band_map.get(a, a)))
    merged = frame.groupby(["year", "week", "country", "sex", "age_group"], as_index=False)[
        ["deaths", "exposure"]
    ].sum()
    merged["rate"] = merged["deaths"] / merged["exposure"]
    return parse_rate_panel(merged[list(RATE_COLUMNS)], anchor=anchor, check_deaths=False)


# ---------------------------------------------------------------------------
# daily COVID-19 deaths


@dataclass(frozen=True, eq=False)
class DailyDeaths:
    """Per-country contiguous daily death counts (gaps zero-filled)."""

    frame: pd.DataFrame  # columns: date (datetime64), country, deaths

    @property
    def countries(self) -> list[str]:
        return list(dict.fromkeys(self.frame["country"]))

    def total(self) -> float:
        return float(self.frame["deaths"].sum())


def parse_covid_daily(source) -> DailyDeaths:
    df = _read_csv(source)
    missing = [c for c in ("date", "country", "deaths") if c not in df.columns]
    if missing:
        raise DataError(f"daily deaths CSV lacks columns {missing}")
    dates = pd.to_datetime(df["date"], format="%Y-%m-%d", errors="coerce")
    if dates.isna().any():
        k = int(np.flatnonzero(dates.isna().to_numpy())[0])
        raise DataError(f"unparseable date {df['date'].iloc[k]!r} at line {k + 2}")
    deaths = pd.to_numeric(df["deaths"], errors="coerce")
    if deaths.isna().any():
        k = int(np.flatnonzero(deaths.isna().to_numpy())[0])
        raise DataError(f"missing death count at line {k + 2}")
    if (deaths < 0).any():
        k = int(np.flatnonzero((deaths < 0).to_numpy())[0])
        raise DataError(f"negative death count {deaths.iloc[k]} at line {k + 2}")
    frame = pd.DataFrame({"date": dates, "country": df["country"].str.strip(), "deaths": deaths})
    dup = frame.duplicated(["date", "country"])
    if dup.any():
        k = int(np.flatnonzero(dup.to_numpy())[0])
        raise DataError(
            f"duplicate record for {frame['country'].iloc[k]} on "
            f"{frame['date'].iloc[k].date()} (line {k + 2})"
        )
    filled = []
    for country, part in frame.groupby("country", sort=False):
        part = part.set_index("date").sort_index()
        full = pd.date_range(part.index[0], part.index[-1], freq="D")
        series = part["deaths"].reindex(full, fill_value=0.0)
        filled.append(
            pd.DataFrame({"date": full, "country": country, "deaths": series.to_numpy(dtype=float)})
        )
    return DailyDeaths(pd.concat(filled, ignore_index=True))


def weekly_covid_deaths(
    daily: DailyDeaths,
    weeks: Sequence[WeekIndex],
    countries: Sequence[str] | None = None,
    strict: bool = True,
) -> tuple[np.ndarray, list[str]]:
    """Sum daily counts into the panel's weeks.

    Days are placed by ISO-8601 week; ISO week 53 folds into week 52.
    Returns a ``(len(weeks), len(countries))`` matrix and the country order.
    Countries absent from ``daily`` (or days outside a country's reporting
    range) contribute zero. A week no record falls in is an error, or a row
    of NaN when ``strict`` is false.
    """
    countries = list(countries) if countries is not None else daily.countries
    frame = daily.frame
    iso = frame["date"].dt.isocalendar()
    year = iso["year"].to_numpy(dtype=int)
    week = np.minimum(iso["week"].to_numpy(dtype=int), WEEKS_PER_YEAR)
    row_of = {(wk.year, wk.week): i for i, wk in enumerate(weeks)}
    col_of = {c: j for j, c in enumerate(countries)}
    out = np.zeros((len(weeks), len(countries)))
    covered = np.zeros(len(weeks), dtype=bool)
    rows = np.array([row_of.get(yw, -1) for yw in zip(year, week)], dtype=int)
    cols = np.array([col_of.get(c, -1) for c in frame["country"]], dtype=int)
    hit = rows >= 0
    covered[rows[hit]] = True
    ok = hit & (cols >= 0)
    np.add.at(out, (rows[ok], cols[ok]), frame["deaths"].to_numpy(dtype=float)[ok])
    if not strict:
        out[~covered] = np.nan
    elif not covered.all():
        wk = weeks[int(np.flatnonzero(~covered)[0])]
        raise DataError(f"no daily records cover week {wk.label}")
    return out, countries


def iso_week_of(day: _dt.date) -> tuple[int, int]:
    y, w, _ = day.isocalendar()
    return iso_to_grid(y, w)
