"""Command-line interface: ``mortpca fit|forecast|excess|synth|convert-stmf``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
import warnings
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataError, NumericalError
from .excess import (
    covid_adjusted_report, excess_from_summary, observed_logits, pc1_tracking, write_report_csv,
)
from .ingest import (
    DEFAULT_ANCHOR, SeriesKey, WeekIndex, parse_covid_daily, parse_rate_panel, parse_year_week,
    read_hmd_stmf, weekly_covid_deaths, write_rate_panel,
)
from .model import file_digest, fit_model, load_model, save_model
from .residual import SarimaSpec
from .simulate import (
    group_series, horizon_weeks, prediction_intervals, read_quantiles_csv, write_quantiles_csv,
    write_trajectories,
)
from .synthetic import SynthConfig, generate_synthetic_panel
from .trend import FitConfig

log = logging.getLogger("mortpca")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
AGGREGATE_GROUPINGS = ("all", "country", "sex-age")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class _Stage:
    name = "setup"

    def __call__(self, name: str) -> None:
        self.name = name
        log.debug("stage %s", name)


stage = _Stage()


def _anchor(text: str) -> tuple[int, int]:
    try:
        return parse_year_week(text)
    except DataError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _week(text: str) -> tuple[int, int]:
    return _anchor(text)


def _levels(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad level list {text!r}") from None
    if not vals or any(not 0 < v < 1 for v in vals):
        raise argparse.ArgumentTypeError("levels must lie strictly between 0 and 1")
    return vals


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def quantile_levels(bands) -> list[float]:
    out = {0.5}
    for b in bands:
        out.update((round(0.5 - b / 2, 12), round(0.5 + b / 2, 12)))
    return sorted(out)


# ---------------------------------------------------------------------------
# fit


def cmd_fit(args) -> int:
    stage("ingest")
    panel = parse_rate_panel(args.input, anchor=args.anchor)
    end = WeekIndex.of(*args.baseline_end, anchor=args.anchor) if args.baseline_end else None
    if end is not None and end.w < panel.weeks[0].w:
        raise DataError(f"baseline end {end.label} precedes the first data week {panel.weeks[0].label}")
    stage("fit")
    config = FitConfig(t0_step=args.t0_step)
    model = fit_model(panel, end, model_id=args.model, criterion=args.criterion,
                      trend_config=config, sarima_spec=SarimaSpec.parse(args.sarima))
    stage("write")
    save_model(model, args.out, input_digest=file_digest(args.input))

    pca = model.pca
    print(f"baseline {model.baseline_weeks[0].label} .. {model.baseline_weeks[-1].label}: "
          f"{len(model.baseline_weeks)} weeks x {len(model.series)} series")
    print(f"component 1 explains {pca.explained_variance_shares[0]:.1%} of the variance")
    if model.comparison is not None:
        cols = ["model_id", "intercept", "cosine_amp", "logistic_scale", "t0", "beta",
                "spring", "summer", "autumn", "r_squared", "aic", "bic"]
        table = model.comparison.table()[cols]
        print(table.to_string(index=False, float_format=lambda x: f"{x:.4g}"))
    r = model.pc1_residual
    print(f"selected trend {model.trend.model_id}; residual SARIMA{r.spec}: "
          f"ar={r.ar.tolist()} ma={r.ma.tolist()} sar={r.seasonal_ar.tolist()} "
          f"sma={r.seasonal_ma.tolist()} sd={r.innovation_sd:.4g}")
    print(f"model written to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# forecast


def read_exposures(path, series: list[SeriesKey], weeks: list[WeekIndex], anchor) -> np.ndarray:
    """Exposure matrix (weeks x series) from a CSV with
    ``year,week,country,sex,age_group,exposure`` columns.

    A horizon week absent from the file takes the latest earlier week
    present, with a warning; a week with no earlier data is an error.
    """
    try:
        df = pd.read_csv(path, dtype={"country": str, "sex": str, "age_group": str})
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read exposures {path}: {exc}") from exc
    need = {"year", "week", "country", "sex", "age_group", "exposure"}
    if not need <= set(df.columns):
        raise DataError(f"exposure file needs columns {sorted(need)}")
    df = df[df["week"] <= 52]
    w = ((df["year"].astype(int) - anchor[0]) * 52 + df["week"].astype(int) - anchor[1]).to_numpy()
    labels = (df["country"] + "_" + df["sex"] + "_" + df["age_group"]).to_numpy()
    col_of = {k.label: j for j, k in enumerate(series)}
    present = sorted(set(w))
    table = {wv: np.full(len(series), np.nan) for wv in present}
    expo = pd.to_numeric(df["exposure"], errors="coerce").to_numpy(dtype=float)
    for wv, lab, e in zip(w, labels, expo):
        j = col_of.get(lab)
        if j is not None:
            table[wv][j] = e
    out = np.empty((len(weeks), len(series)))
    carried = 0
    for i, wk in enumerate(weeks):
        earlier = [wv for wv in present if wv <= wk.w]
        if not earlier:
            raise DataError(f"no exposures at or before week {wk.label}")
        src = earlier[-1]
        carried += src != wk.w
        row = table[src]
        if np.isnan(row).any():
            missing = series[int(np.flatnonzero(np.isnan(row))[0])].label
            raise DataError(f"exposure missing for {missing} in week "
                            f"{WeekIndex.from_offset(src, anchor).label}")
        out[i] = row
    if carried:
        warnings.warn(f"exposures carried forward for {carried} horizon week(s)", RuntimeWarning,
                      stacklevel=2)
    return out


def aggregate_groups(series: list[SeriesKey]) -> dict[str, list[int]]:
    groups: dict[str, list[int]] = {}
    for by in AGGREGATE_GROUPINGS:
        groups.update(group_series(series, by))
    return groups


def cmd_forecast(args) -> int:
    stage("load")
    model = load_model(args.model)
    if args.weeks < 1:
        raise DataError("--weeks must be positive")
    weeks = horizon_weeks(model.trend, args.weeks)
    stage("exposures")
    expo = read_exposures(args.exposures, model.series, weeks, model.anchor)
    stage("simulate")
    ens = model.forecast(expo, args.weeks, args.sims, args.seed, threads=args.threads)
    stage("summarise")
    levels = quantile_levels(args.levels)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_quantiles_csv(prediction_intervals(ens, levels, threads=args.threads),
                        out / "series_quantiles.csv", "series")
    agg = prediction_intervals(ens, levels, groups=aggregate_groups(model.series), threads=args.threads)
    write_quantiles_csv(agg, out / "aggregate_quantiles.csv", "group")
    if args.trajectories:
        write_trajectories(ens, out / "trajectories.bin")
    meta = {
        "model_sha256": file_digest(args.model),
        "seed": args.seed,
        "n_sims": args.sims,
        "horizon": args.weeks,
        "first_week": weeks[0].label,
        "bands": list(args.levels),
        "quantile_levels": levels,
    }
    (out / "forecast_meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")

    total = agg.subset(["all"])
    cols = [f"q{lv:g}" for lv in levels]
    table = pd.DataFrame(total.values[:, 0, :], columns=cols,
                         index=pd.Index([wk.label for wk in weeks], name="week"))
    print("aggregate deaths, all series")
    print(table.to_string(float_format=lambda x: f"{x:.1f}"))
    print(f"forecast written to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# excess


def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name)


def cmd_excess(args) -> int:
    from .plots import plot_group, plot_tracking

    stage("load")
    model = load_model(args.model)
    summary = read_quantiles_csv(Path(args.forecast) / "aggregate_quantiles.csv", model.anchor)
    stage("ingest")
    observed = parse_rate_panel(args.observed, anchor=model.anchor)
    stage("excess")
    groups = group_series(model.series, args.group_by)
    report = excess_from_summary(summary, observed, model.series, groups, level=args.level)
    result = report
    if args.covid:
        stage("covid")
        daily = parse_covid_daily(args.covid)
        countries = sorted({k.country for k in model.series})
        covid, _ = weekly_covid_deaths(daily, report.weeks, countries, strict=False)
        result = covid_adjusted_report(report, covid, countries)
    else:
        warnings.warn("no COVID-19 file given; adjusted columns left empty", RuntimeWarning,
                      stacklevel=2)

    stage("write")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report_csv(result, out / "excess_report.csv")
    for name in report.groups:
        plot_group(result, name, out / f"excess_{_safe_name(name)}.svg")

    stage("tracking")
    after = [i for i, wk in enumerate(observed.weeks) if wk.w > model.trend.last_w]
    if after:
        sub = observed.select_weeks(np.isin(np.arange(len(observed.weeks)), after))
        tracking = pc1_tracking(model.pca, observed_logits(sub, model.series), sub.weeks,
                                model.trend, model.pc1_residual, args.level)
        tracking.to_frame().to_csv(out / "pc1_tracking.csv", index=False, float_format="%.17g")
        plot_tracking(tracking, out / "pc1_tracking.svg")
        if tracking.below_lower.any():
            first = tracking.weeks[int(np.flatnonzero(tracking.below_lower)[0])]
            print(f"mortality index first below its lower bound in week {first.label}")

    flags = result.significant_high
    for g, name in enumerate(report.groups):
        hit = [report.weeks[t].label for t in np.flatnonzero(flags[:, g])]
        print(f"{name}: {len(hit)} week(s) significantly high" + (f" ({', '.join(hit)})" if hit else ""))
    print(f"excess report written to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth / convert


def cmd_synth(args) -> int:
    stage("config")
    cfg = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise DataError("synthetic config must be a JSON object")
    try:
        config = SynthConfig.from_dict(cfg)
    except TypeError as exc:
        raise DataError(f"invalid synthetic config: {exc}") from exc
    stage("generate")
    synth = generate_synthetic_panel(config, seed=args.seed)
    stage("write")
    write_rate_panel(synth.panel, args.out)
    truth_path = f"{args.out}.truth.json"
    Path(truth_path).write_text(json.dumps(synth.truth(), indent=1) + "\n", encoding="utf-8")
    print(f"{len(synth.panel.weeks)} weeks x {len(synth.panel.series)} series written to {args.out}")
    print(f"generator truth written to {truth_path}")
    return EXIT_OK


def cmd_convert_stmf(args) -> int:
    stage("ingest")
    countries = args.countries.split(",") if args.countries else None
    panel = read_hmd_stmf(args.input, countries=countries, anchor=args.anchor,
                          first=args.first, last=args.last)
    stage("write")
    write_rate_panel(panel, args.out)
    print(f"{len(panel.weeks)} weeks x {len(panel.series)} series written to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mortpca", description="Weekly mortality forecasting and excess-death analysis.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="fit the model on a baseline period")
    f.add_argument("--input", required=True, help="rate CSV")
    f.add_argument("--baseline-end", type=_week, default=None, help="last baseline week, YYYY-WW")
    f.add_argument("--anchor", type=_anchor, default=DEFAULT_ANCHOR, help="week with offset 0")
    f.add_argument("--model", choices=("M1_1", "M1_2", "M1_3"), default=None,
                   help="force a trend model instead of selecting one")
    f.add_argument("--criterion", choices=("bic", "aic"), default="bic")
    f.add_argument("--sarima", default="0,1,1,1,0,0,52", help="p,d,q,P,D,Q,s")
    f.add_argument("--t0-step", type=float, default=1.0, help="grid step of the logistic midpoint")
    f.add_argument("--out", required=True, help="model file to write")
    f.set_defaults(func=cmd_fit)

    fc = sub.add_parser("forecast", help="simulate forecast trajectories")
    fc.add_argument("--model", required=True)
    fc.add_argument("--exposures", required=True, help="CSV with exposures over the horizon")
    fc.add_argument("--weeks", type=_positive, required=True, help="horizon in weeks")
    fc.add_argument("--sims", type=_positive, default=10000)
    fc.add_argument("--seed", type=int, required=True)
    fc.add_argument("--threads", type=_positive, default=None,
                    help="worker threads (default: MORTPCA_THREADS or 1)")
    fc.add_argument("--levels", type=_levels, default=[0.75, 0.95], help="PI levels, e.g. 0.75,0.95")
    fc.add_argument("--trajectories", action="store_true", help="also write the death trajectories")
    fc.add_argument("--out", required=True, help="output directory")
    fc.set_defaults(func=cmd_forecast)

    ex = sub.add_parser("excess", help="compare observed deaths with a forecast")
    ex.add_argument("--model", required=True)
    ex.add_argument("--forecast", required=True, help="forecast output directory")
    ex.add_argument("--observed", required=True, help="rate CSV over the forecast weeks")
    ex.add_argument("--covid", default=None, help="daily COVID-19 deaths CSV (date,country,deaths)")
    ex.add_argument("--group-by", choices=("country", "sex-age", "all"), default="all")
    ex.add_argument("--level", type=float, default=0.95)
    ex.add_argument("--out", required=True, help="output directory")
    ex.set_defaults(func=cmd_excess)

    sy = sub.add_parser("synth", help="generate a synthetic rate panel")
    sy.add_argument("--config", default=None, help="JSON generator config")
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--out", required=True, help="rate CSV to write; truth goes to <out>.truth.json")
    sy.set_defaults(func=cmd_synth)

    cv = sub.add_parser("convert-stmf", help="convert an HMD STMF file to a rate CSV")
    cv.add_argument("--input", required=True)
    cv.add_argument("--countries", default=None, help="comma-separated country codes")
    cv.add_argument("--anchor", type=_anchor, default=DEFAULT_ANCHOR)
    cv.add_argument("--first", type=_week, default=None, help="first week kept, YYYY-WW")
    cv.add_argument("--last", type=_week, default=None, help="last week kept, YYYY-WW")
    cv.add_argument("--out", required=True)
    cv.set_defaults(func=cmd_convert_stmf)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    stage.name = "setup"
    with warnings.catch_warnings():
        warnings.simplefilter("always")
        warnings.showwarning = _show_warning
        try:
            return args.func(args)
        except NumericalError as exc:
            print(f"numerical error [{stage.name}]: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        except (DataError, OSError) as exc:
            print(f"data error [{stage.name}]: {exc}", file=sys.stderr)
            return EXIT_DATA


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"warning [{stage.name}]: {message}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())


__all__ = ["main", "build_parser", "read_exposures", "quantile_levels", "EXIT_OK", "EXIT_USAGE",
           "EXIT_DATA", "EXIT_NUMERIC"]
