"""End-to-end fitted model and its on-disk model file.

The model file is JSON text with every float written at 17 significant
digits, which round-trips IEEE doubles exactly; forecasting from a loaded
file is therefore bit-identical to forecasting from the in-memory fit.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, NumericalError
from .ingest import DEFAULT_ANCHOR, RatePanel, SeriesKey, WeekIndex
from .pca import PcaDecomposition, decompose
from .residual import (
    ResidualModel, SarimaSpec, fit_random_walk, fit_sarima, random_walk_model,
)
from .simulate import ForecastEnsemble, simulate_ensemble
from .transform import logit_panel
from .trend import MODEL_IDS, FitConfig, ModelComparison, TrendModel, fit_trend, model_comparison

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
_RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class FittedModel:
    series: list[SeriesKey]
    anchor: tuple[int, int]
    baseline_weeks: list[WeekIndex]
    pca: PcaDecomposition
    trend: TrendModel
    comparison: ModelComparison | None
    pc1_residual: ResidualModel
    component_models: list[ResidualModel]
    settings: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def forecast(self, exposures, horizon: int, n_sims: int, seed: int,
                 threads: int | None = 1) -> ForecastEnsemble:
        return simulate_ensemble(
            self.pca, self.trend, self.pc1_residual, self.component_models, exposures,
            horizon, n_sims, seed, series=self.series, threads=threads,
        )


def fit_model(
    panel: RatePanel,
    baseline_end: WeekIndex | None = None,
    model_id: str | None = None,
    criterion: str = "bic",
    trend_config: FitConfig | None = None,
    sarima_spec: SarimaSpec = SarimaSpec(),
    rw_drift: bool = False,
) -> FittedModel:
    """Logit -> PCA -> trend comparison -> SARIMA on the index residual ->
    random walks for every other component.

    ``model_id`` forces a trend model; otherwise the one minimising
    ``criterion`` (``"bic"`` or ``"aic"``) is used.
    """
    if criterion not in ("aic", "bic"):
        raise DataError("criterion must be 'aic' or 'bic'")
    if model_id is not None and model_id not in MODEL_IDS:
        raise DataError(f"unknown trend model {model_id!r}")
    base = panel if baseline_end is None else panel.between(last=baseline_end)
    if len(base.weeks) == 0:
        raise DataError("baseline period is empty")
    if len(base.weeks) < 3 * 52:
        raise DataError(f"baseline has {len(base.weeks)} weeks; at least 3 full years required")
    trend_config = trend_config or FitConfig()
    lp = logit_panel(base)
    pca = decompose(lp)
    pc1 = pca.scores[:, 0]

    if model_id is None:
        comparison = model_comparison(pc1, base.weeks, trend_config, anchor=base.anchor)
        trend = comparison.selected(criterion)
    else:
        comparison = None
        trend = fit_trend(pc1, base.weeks, model_id, trend_config, anchor=base.anchor)
    pc1_residual = fit_sarima(trend.residuals, sarima_spec)

    s = pca.singular_values
    models = []
    for k in range(1, pca.n_components):
        col = pca.scores[:, k]
        if s[k] <= _RANK_TOL * s[0]:
            models.append(random_walk_model(0.0, float(col[-1])))
            continue
        try:
            models.append(fit_random_walk(col, drift=rw_drift))
        except NumericalError:
            warnings.warn(f"component {k + 1} has constant differences; using a zero-variance walk",
                          RuntimeWarning, stacklevel=2)
            models.append(random_walk_model(0.0, float(col[-1])))

    settings = {
        "criterion": criterion,
        "forced_model": model_id,
        "trend_config": trend_config.to_dict(),
        "sarima_spec": [sarima_spec.p, sarima_spec.d, sarima_spec.q,
                        sarima_spec.P, sarima_spec.D, sarima_spec.Q, sarima_spec.s],
        "rw_drift": rw_drift,
    }
    return FittedModel(list(base.series), base.anchor, list(base.weeks), pca, trend, comparison,
                       pc1_residual, models, settings)


# ---------------------------------------------------------------------------
# serialisation


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise DataError(f"cannot store non-finite number {x!r} in a model file")
    return format(x, ".17g")


def _dump(obj, indent: int = 0) -> str:
    pad = " " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}  {json.dumps(str(k))}: {_dump(v, indent + 2)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else list(obj)
        if any(isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            if not seq:
                return "[]"
            inner = ",\n".join(pad + "  " + _dump(v, indent + 2) for v in seq)
            return "[\n" + inner + "\n" + pad + "]"
        return "[" + ", ".join(_dump(v, indent) for v in seq) + "]"
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    return json.dumps(str(obj))


def model_to_dict(m: FittedModel) -> dict:
    comp = None
    if m.comparison is not None:
        comp = {
            "aic_best": m.comparison.aic_best,
            "bic_best": m.comparison.bic_best,
            "models": {mid: t.to_dict() for mid, t in m.comparison.models.items()},
        }
    return {
        "format_version": FORMAT_VERSION,
        "anchor": list(m.anchor),
        "baseline": {
            "first": m.baseline_weeks[0].label,
            "last": m.baseline_weeks[-1].label,
            "n_weeks": len(m.baseline_weeks),
        },
        "series": [k.label for k in m.series],
        "pca": {
            "column_means": m.pca.column_means,
            "directions": m.pca.directions,
            "singular_values": m.pca.singular_values,
            "explained_variance_shares": m.pca.explained_variance_shares,
            "scores": m.pca.scores,
        },
        "trend": {"selected": m.trend.to_dict(), "comparison": comp},
        "residual": {
            "pc1": m.pc1_residual.to_dict(),
            "components": [c.to_dict() for c in m.component_models],
        },
        "settings": m.settings,
        "provenance": m.provenance,
    }


def model_from_dict(d: dict) -> FittedModel:
    if d.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported model file version {d.get('format_version')!r}")
    anchor = tuple(d["anchor"])
    first = WeekIndex.of(*map(int, d["baseline"]["first"].split("-")), anchor=anchor)
    weeks = [WeekIndex.from_offset(first.w + i, anchor) for i in range(d["baseline"]["n_weeks"])]
    p = d["pca"]
    pca = PcaDecomposition(
        np.asarray(p["column_means"]), np.asarray(p["directions"]), np.asarray(p["scores"]),
        np.asarray(p["singular_values"]), np.asarray(p["explained_variance_shares"]),
    )
    comp = d["trend"]["comparison"]
    comparison = None
    if comp is not None:
        comparison = ModelComparison(
            {mid: TrendModel.from_dict(t) for mid, t in comp["models"].items()},
            comp["aic_best"], comp["bic_best"],
        )
    return FittedModel(
        series=[SeriesKey.from_label(s) for s in d["series"]],
        anchor=anchor,
        baseline_weeks=weeks,
        pca=pca,
        trend=TrendModel.from_dict(d["trend"]["selected"]),
        comparison=comparison,
        pc1_residual=ResidualModel.from_dict(d["residual"]["pc1"]),
        component_models=[ResidualModel.from_dict(c) for c in d["residual"]["components"]],
        settings=d.get("settings", {}),
        provenance=d.get("provenance", {}),
    )


def save_model(m: FittedModel, path, input_digest: str | None = None,
               timestamp: str | None = None) -> None:
    d = model_to_dict(m)
    d["provenance"] = {
        **m.provenance,
        "input_sha256": input_digest,
        "created": timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "seed_policy": "fit is deterministic; forecasts seed trajectory j with SeedSequence(seed, spawn_key=(j,))",
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dump(d) + "\n")


def load_model(path) -> FittedModel:
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    return model_from_dict(d)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


__all__ = [
    "FittedModel", "fit_model", "save_model", "load_model", "model_to_dict", "model_from_dict",
    "file_digest", "DEFAULT_ANCHOR",
]
