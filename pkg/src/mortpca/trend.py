"""Deterministic trend of the mortality index.

Three nested models are fitted to the first component's score series:

* ``M1_1``: intercept + cos(pi w / 26)
* ``M1_2``: M1_1 + inverse-logistic growth sigmoid((w - t0) / beta)
* ``M1_3``: M1_2 + spring / summer / autumn dummies (winter is the baseline)

For the nonlinear pair (t0, beta) the linear coefficients are profiled out:
every candidate on a (t0, log beta) grid is scored by its least-squares RSS,
the best cell is refined by golden-section passes and a final Gauss-Newton
polish on the profiled residual vector.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import optimize, signal, stats
from scipy.special import expit

from .errors import DataError, NumericalError
from .ingest import DEFAULT_ANCHOR, WEEKS_PER_YEAR, WeekIndex

MODEL_IDS = ("M1_1", "M1_2", "M1_3")
SPRING = (13, 25)
SUMMER = (26, 38)
AUTUMN = (39, 51)
_GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class SeasonFlags:
    spring: int
    summer: int
    autumn: int

    @property
    def is_winter(self) -> bool:
        return not (self.spring or self.summer or self.autumn)


def seasonal_indicator(week_of_year: int) -> SeasonFlags:
    """Season dummies: spring 13-25, summer 26-38, autumn 39-51, else winter."""
    if not 1 <= int(week_of_year) <= WEEKS_PER_YEAR:
        raise DataError(f"calendar week {week_of_year} outside 1..{WEEKS_PER_YEAR}")
    wk = int(week_of_year)
    return SeasonFlags(
        int(SPRING[0] <= wk <= SPRING[1]),
        int(SUMMER[0] <= wk <= SUMMER[1]),
        int(AUTUMN[0] <= wk <= AUTUMN[1]),
    )


def season_matrix(week_of_year) -> np.ndarray:
    wk = np.asarray(week_of_year, dtype=int)
    if np.any((wk < 1) | (wk > WEEKS_PER_YEAR)):
        raise DataError(f"calendar weeks must lie in 1..{WEEKS_PER_YEAR}")
    return np.column_stack(
        [((lo <= wk) & (wk <= hi)).astype(float) for lo, hi in (SPRING, SUMMER, AUTUMN)]
    )


def inverse_logistic_regressor(w, t0: float, beta: float):
    """exp((w - t0)/beta) / (1 + exp((w - t0)/beta)), overflow-safe."""
    if not beta > 0:
        raise DataError(f"beta must be positive, got {beta}")
    out = expit((np.asarray(w, dtype=float) - t0) / beta)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitConfig:
    """Search settings for (t0, beta).

    ``t0_bounds`` defaults to the first and last baseline week offsets.
    """

    t0_bounds: tuple[float, float] | None = None
    t0_step: float = 1.0
    beta_bounds: tuple[float, float] = (10.0, 5000.0)
    n_beta: int = 40
    golden_passes: int = 3
    polish: bool = True
    include_sine: bool = False

    def to_dict(self) -> dict:
        return {
            "t0_bounds": None if self.t0_bounds is None else list(self.t0_bounds),
            "t0_step": self.t0_step,
            "beta_bounds": list(self.beta_bounds),
            "n_beta": self.n_beta,
            "golden_passes": self.golden_passes,
            "polish": self.polish,
            "include_sine": self.include_sine,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitConfig":
        d = dict(d)
        if d.get("t0_bounds") is not None:
            d["t0_bounds"] = tuple(d["t0_bounds"])
        d["beta_bounds"] = tuple(d["beta_bounds"])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class TrendModel:
    model_id: str
    intercept: float
    cosine_amp: float
    logistic_scale: float
    t0: float
    beta: float
    spring: float
    summer: float
    autumn: float
    r_squared: float
    aic: float
    bic: float
    residuals: np.ndarray
    sine_amp: float = 0.0
    include_sine: bool = False
    rss: float = 0.0
    n_obs: int = 0
    cov_unscaled: np.ndarray | None = None
    dof: int = 0
    cov_joint_unscaled: np.ndarray | None = None
    boundary: bool = False
    w: np.ndarray | None = None
    anchor: tuple[int, int] = DEFAULT_ANCHOR
    fit_config: FitConfig = field(default_factory=FitConfig)

    def __post_init__(self):
        if self.model_id not in MODEL_IDS:
            raise DataError(f"unknown trend model {self.model_id!r}")
        if not self.beta > 0:
            raise DataError("beta must be positive")
        for name in ("residuals", "cov_unscaled", "cov_joint_unscaled", "w"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr, dtype=float if name != "w" else int)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)

    @property
    def has_logistic(self) -> bool:
        return self.model_id != "M1_1"

    @property
    def has_seasons(self) -> bool:
        return self.model_id == "M1_3"

    @property
    def coef_names(self) -> list[str]:
        return _coef_names(self.model_id, self.include_sine)

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in self.coef_names])

    @property
    def n_params(self) -> int:
        """Estimated parameters: linear coefficients, (t0, beta), variance."""
        return len(self.coef_names) + (2 if self.has_logistic else 0) + 1

    @property
    def last_w(self) -> int:
        if self.w is None:
            raise DataError("trend model carries no baseline weeks")
        return int(self.w[-1])

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "intercept": self.intercept,
            "cosine_amp": self.cosine_amp,
            "sine_amp": self.sine_amp,
            "logistic_scale": self.logistic_scale,
            "t0": self.t0,
            "beta": self.beta,
            "spring": self.spring,
            "summer": self.summer,
            "autumn": self.autumn,
            "include_sine": self.include_sine,
            "r_squared": self.r_squared,
            "aic": self.aic,
            "bic": self.bic,
            "rss": self.rss,
            "n_obs": self.n_obs,
            "dof": self.dof,
            "boundary": self.boundary,
            "anchor": list(self.anchor),
            "w": None if self.w is None else self.w.tolist(),
            "residuals": self.residuals.tolist(),
            "cov_unscaled": None if self.cov_unscaled is None else self.cov_unscaled.tolist(),
            "cov_joint_unscaled": None if self.cov_joint_unscaled is None
            else self.cov_joint_unscaled.tolist(),
            "fit_config": self.fit_config.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrendModel":
        d = dict(d)
        d["anchor"] = tuple(d["anchor"])
        d["fit_config"] = FitConfig.from_dict(d["fit_config"])
        for name in ("residuals", "cov_unscaled", "cov_joint_unscaled", "w"):
            if d.get(name) is not None:
                d[name] = np.asarray(d[name])
        return cls(**d)


def _coef_names(model_id: str, include_sine: bool) -> list[str]:
    names = ["intercept", "cosine_amp"]
    if include_sine:
        names.append("sine_amp")
    if model_id != "M1_1":
        names.append("logistic_scale")
    if model_id == "M1_3":
        names += ["spring", "summer", "autumn"]
    return names


def _fixed_design(w, week_of_year, model_id: str, include_sine: bool) -> np.ndarray:
    """Columns not depending on (t0, beta), in coefficient order minus logistic."""
    w = np.asarray(w, dtype=float)
    cols = [np.ones_like(w), np.cos(np.pi * w / 26.0)]
    if include_sine:
        cols.append(np.sin(np.pi * w / 26.0))
    if model_id == "M1_3":
        cols.extend(season_matrix(week_of_year).T)
    return np.column_stack(cols)


def _full_design(w, week_of_year, model_id, include_sine, t0, beta) -> np.ndarray:
    X0 = _fixed_design(w, week_of_year, model_id, include_sine)
    if model_id == "M1_1":
        return X0
    g = inverse_logistic_regressor(w, t0, beta)
    pos = 3 if include_sine else 2
    return np.column_stack([X0[:, :pos], g, X0[:, pos:]])


def _weeks_arrays(weeks, week_of_year=None, anchor=DEFAULT_ANCHOR):
    """Accept WeekIndex / list of WeekIndex / (w array, week-of-year array)."""
    if isinstance(weeks, WeekIndex):
        return np.array([weeks.w]), np.array([weeks.week])
    if week_of_year is not None:
        return np.asarray(weeks, dtype=int), np.asarray(week_of_year, dtype=int)
    weeks = list(weeks)
    if weeks and isinstance(weeks[0], WeekIndex):
        return np.array([wk.w for wk in weeks]), np.array([wk.week for wk in weeks])
    w = np.asarray(weeks, dtype=int)
    return w, np.array([WeekIndex.from_offset(int(x), anchor).week for x in w], dtype=int)


def evaluate_trend(m: TrendModel, weeks, week_of_year=None):
    """Trend value at one WeekIndex (float) or several weeks (array)."""
    scalar = isinstance(weeks, WeekIndex)
    w, wk = _weeks_arrays(weeks, week_of_year, m.anchor)
    X = _full_design(w, wk, m.model_id, m.include_sine, m.t0, m.beta)
    out = X @ m.coefficients
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# fitting


def _lstsq(X, y):
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    return coef, resid


def _profile_grid(y, X0, w, t0_grid, beta_grid) -> np.ndarray:
    """RSS of the profiled fit for every (t0, beta) cell.

    With the logistic column g(t0, beta) the profiled RSS is
    ``rss0 - (ry . g)^2 / |M g|^2`` where ``M`` projects onto the orthogonal
    complement of the fixed columns. Contiguous integer weeks with an
    integer t0 grid turn each beta slice into FFT cross-correlations.
    """
    Q, _ = np.linalg.qr(X0)
    ry = y - Q @ (Q.T @ y)
    rss0 = float(ry @ ry)
    step = t0_grid[1] - t0_grid[0] if len(t0_grid) > 1 else 1.0
    contiguous = (
        np.all(np.diff(w) == 1)
        and float(step).is_integer()
        and float(t0_grid[0] - w[0]).is_integer()
    )
    out = np.empty((len(t0_grid), len(beta_grid)))
    for jb, b in enumerate(beta_grid):
        if contiguous:
            gy, qg, gg_raw = _correlate_slice(ry, Q, w, t0_grid, b)
        else:
            G = expit((w[:, None] - t0_grid[None, :]) / b)
            gy = ry @ G
            qg = Q.T @ G
            gg_raw = np.einsum("ij,ij->j", G, G)
        gg = gg_raw - np.einsum("ij,ij->j", qg, qg)
        ok = gg > 1e-9 * gg_raw
        gain = np.where(ok, gy**2 / np.where(ok, gg, 1.0), 0.0)
        out[:, jb] = rss0 - gain
    return out


def _correlate_slice(ry, Q, w, t0_grid, beta):
    """gy = ry.G, Q^T G and |G|^2 column sums via FFT for one beta."""
    n = len(w)
    offs = np.rint(t0_grid - w[0]).astype(int)  # t0 - w0 on the integer lattice
    m_min, m_max = int(offs.min()), int(offs.max())
    d = np.arange(-m_max, n - m_min, dtype=float)  # every w_i - t0 needed
    kern = expit(d / beta)
    vecs = np.column_stack([ry, Q, np.ones(n)])
    kerns = [kern] * (vecs.shape[1] - 1) + [kern**2]
    pos = n - 1 - offs + m_max
    res = []
    for v, k in zip(vecs.T, kerns):
        full = signal.fftconvolve(k, v[::-1])
        res.append(full[pos])
    res = np.array(res)
    return res[0], res[1:-1], res[-1]


def _golden(f, a, b, tol, max_iter=60):
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def fit_trend(pc1, weeks, model_id: str = "M1_3", config: FitConfig | None = None,
              week_of_year=None, anchor=DEFAULT_ANCHOR) -> TrendModel:
    """Least-squares fit of one trend model to the mortality-index series.

    ``weeks`` is a list of WeekIndex aligned with ``pc1`` (or an array of
    offsets together with ``week_of_year``).
    """
    config = config or FitConfig()
    if model_id not in MODEL_IDS:
        raise DataError(f"unknown trend model {model_id!r}; choose from {MODEL_IDS}")
    y = np.asarray(pc1, dtype=float)
    w, wk = _weeks_arrays(weeks, week_of_year, anchor)
    if y.shape != w.shape:
        raise DataError("series and weeks differ in length")
    n = len(y)
    if n < 3 * WEEKS_PER_YEAR:
        raise DataError(f"trend fit needs at least 3 years of weeks, got {n}")
    if not np.all(np.isfinite(y)):
        raise DataError("series contains non-finite values")
    tss = float(np.sum((y - y.mean()) ** 2))
    if tss <= 1e-24 * max(1.0, float(np.max(np.abs(y)))) ** 2:
        raise DataError("degenerate trend design: series is constant")

    X0 = _fixed_design(w, wk, model_id, config.include_sine)
    t0, beta, boundary = 0.0, 1.0, False
    if model_id != "M1_1":
        t0, beta, boundary = _search_t0_beta(y, X0, w, wk, model_id, config)
        if boundary:
            warnings.warn(
                f"{model_id}: (t0, beta) search ended on the grid boundary "
                f"(t0={t0:.4g}, beta={beta:.4g})",
                RuntimeWarning,
                stacklevel=2,
            )
    X = _full_design(w, wk, model_id, config.include_sine, t0, beta)
    coef, resid = _lstsq(X, y)
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise DataError(f"degenerate trend design for {model_id}")
    rss = float(resid @ resid)
    p = X.shape[1]
    k = p + (2 if model_id != "M1_1" else 0) + 1
    log_term = n * math.log(max(rss, 1e-300) / n)
    names = _coef_names(model_id, config.include_sine)
    values = dict(zip(names, coef))
    J = X
    if model_id != "M1_1":
        z = (w - t0) / beta
        g = expit(z)
        dg = values["logistic_scale"] * g * (1.0 - g)
        J = np.column_stack([X, -dg / beta, -dg * z / beta])
    return TrendModel(
        model_id=model_id,
        intercept=float(values["intercept"]),
        cosine_amp=float(values["cosine_amp"]),
        sine_amp=float(values.get("sine_amp", 0.0)),
        logistic_scale=float(values.get("logistic_scale", 0.0)),
        t0=float(t0),
        beta=float(beta),
        spring=float(values.get("spring", 0.0)),
        summer=float(values.get("summer", 0.0)),
        autumn=float(values.get("autumn", 0.0)),
        include_sine=config.include_sine,
        r_squared=float(min(max(1.0 - rss / tss, 0.0), 1.0)),
        aic=log_term + 2 * k,
        bic=log_term + k * math.log(n),
        residuals=resid,
        rss=rss,
        n_obs=n,
        cov_unscaled=np.linalg.inv(X.T @ X),
        dof=n - p,
        cov_joint_unscaled=np.linalg.pinv(J.T @ J),
        boundary=boundary,
        w=w,
        anchor=anchor,
        fit_config=config,
    )


def _search_t0_beta(y, X0, w, wk, model_id, config: FitConfig):
    lo, hi = config.t0_bounds if config.t0_bounds is not None else (float(w.min()), float(w.max()))
    n_t0 = int(math.floor((hi - lo) / config.t0_step + 1e-9)) + 1
    t0_grid = lo + config.t0_step * np.arange(n_t0)
    lb_lo, lb_hi = math.log(config.beta_bounds[0]), math.log(config.beta_bounds[1])
    log_beta_grid = np.linspace(lb_lo, lb_hi, config.n_beta)
    beta_grid = np.exp(log_beta_grid)

    rss = _profile_grid(y, X0, w.astype(float), t0_grid, beta_grid)
    # C-order argmin breaks ties by smallest t0, then smallest beta
    i, j = np.unravel_index(int(np.argmin(rss)), rss.shape)
    on_edge = i in (0, n_t0 - 1) or j in (0, config.n_beta - 1)

    def profile_rss(t0, log_beta):
        X = _full_design(w, wk, model_id, config.include_sine, t0, math.exp(log_beta))
        _, r = _lstsq(X, y)
        return float(r @ r)

    t0, lb = float(t0_grid[i]), float(log_beta_grid[j])
    best = float(rss[i, j])
    dlb = log_beta_grid[1] - log_beta_grid[0] if config.n_beta > 1 else 0.0
    t_lo, t_hi = max(lo, t0 - config.t0_step), min(hi, t0 + config.t0_step)
    b_lo, b_hi = max(lb_lo, lb - dlb), min(lb_hi, lb + dlb)
    for _ in range(config.golden_passes):
        if t_hi > t_lo:
            t_new, f = _golden(lambda t: profile_rss(t, lb), t_lo, t_hi, 1e-6 * config.t0_step)
            if f < best:
                t0, best = t_new, f
        if b_hi > b_lo:
            b_new, f = _golden(lambda b: profile_rss(t0, b), b_lo, b_hi, 1e-9)
            if f < best:
                lb, best = b_new, f

    if config.polish:
        def resid(theta):
            X = _full_design(w, wk, model_id, config.include_sine, theta[0], math.exp(theta[1]))
            return _lstsq(X, y)[1]

        x0 = np.array([min(max(t0, lo), hi), min(max(lb, lb_lo), lb_hi)])
        try:
            sol = optimize.least_squares(
                resid, x0, bounds=([lo, lb_lo], [hi, lb_hi]), method="trf",
                jac="3-point", x_scale=np.array([max(1.0, config.t0_step), 1.0]),
                xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=400,
            )
            f = float(sol.fun @ sol.fun)
            if f <= best:
                t0, lb, best = float(sol.x[0]), float(sol.x[1]), f
        except (ValueError, np.linalg.LinAlgError) as exc:  # pragma: no cover
            raise NumericalError(f"trend polish failed: {exc}") from exc

    boundary = on_edge or math.isclose(t0, lo) or math.isclose(t0, hi) \
        or math.isclose(lb, lb_lo) or math.isclose(lb, lb_hi)
    return t0, math.exp(lb), boundary


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ModelComparison:
    models: dict[str, TrendModel]
    aic_best: str
    bic_best: str

    def table(self) -> pd.DataFrame:
        rows = []
        for mid, m in self.models.items():
            row = {"model_id": mid, "r_squared": m.r_squared, "aic": m.aic, "bic": m.bic}
            for name in ("intercept", "cosine_amp", "sine_amp", "logistic_scale",
                         "t0", "beta", "spring", "summer", "autumn"):
                row[name] = getattr(m, name)
            row["aic_best"] = mid == self.aic_best
            row["bic_best"] = mid == self.bic_best
            rows.append(row)
        return pd.DataFrame(rows)

    def selected(self, criterion: str = "bic") -> TrendModel:
        return self.models[self.bic_best if criterion == "bic" else self.aic_best]


def model_comparison(pc1, weeks, config: FitConfig | None = None, week_of_year=None,
                     anchor=DEFAULT_ANCHOR) -> ModelComparison:
    models = {mid: fit_trend(pc1, weeks, mid, config, week_of_year, anchor) for mid in MODEL_IDS}
    aic_best = min(MODEL_IDS, key=lambda mid: models[mid].aic)
    bic_best = min(MODEL_IDS, key=lambda mid: models[mid].bic)
    return ModelComparison(models, aic_best, bic_best)


def confidence_intervals(m: TrendModel, level: float = 0.95,
                         method: str = "profile") -> dict[str, tuple[float, float]]:
    """Confidence intervals for the linear coefficients.

    ``method="profile"`` inverts the F test on the profiled residual sum of
    squares: for each coefficient, the interval holds the values whose best
    fit over the other coefficients and (t0, beta) stays below the critical
    RSS. It follows the curvature in (t0, beta) that linearised intervals
    miss. ``method="joint"`` linearises the full model in all parameters;
    ``method="conditional"`` treats (t0, beta) as known (plain OLS on the
    selected design). For M1_1 all three give the same t intervals.
    """
    if not 0 < level < 1:
        raise DataError(f"confidence level must lie in (0, 1), got {level}")
    if method not in ("profile", "joint", "conditional"):
        raise DataError(f"unknown interval method {method!r}")
    joint = method != "conditional" and m.has_logistic
    cov = m.cov_joint_unscaled if joint else m.cov_unscaled
    dof = m.dof - 2 if joint else m.dof
    if cov is None or dof <= 0:
        raise DataError("model carries no covariance information")
    k = len(m.coef_names)
    se = np.sqrt(np.clip(np.diag(cov)[:k], 0, None) * m.rss / dof)
    q = stats.t.ppf(0.5 + level / 2, dof)
    linear = {
        name: (float(c - q * s), float(c + q * s))
        for name, c, s in zip(m.coef_names, m.coefficients, se)
    }
    if method != "profile" or not m.has_logistic:
        return linear
    return _profile_intervals(m, level, dof, se, linear)


def _profile_intervals(m: TrendModel, level, dof, se, linear, max_doublings=40):
    if m.w is None or len(m.residuals) != len(m.w):
        raise DataError("profile intervals need the baseline weeks and residuals")
    w, wk = _weeks_arrays(m.w, anchor=m.anchor)
    cfg = m.fit_config
    lo, hi = cfg.t0_bounds if cfg.t0_bounds is not None else (float(w.min()), float(w.max()))
    lb_bounds = ([lo, math.log(cfg.beta_bounds[0])], [hi, math.log(cfg.beta_bounds[1])])
    theta_hat = np.array([m.t0, math.log(m.beta)])
    y = evaluate_trend(m, w, wk) + m.residuals
    if m.rss <= len(y) * (1e-9 * float(np.max(np.abs(y)))) ** 2:
        return linear  # exact fit: the RSS is rounding noise
    critical = m.rss * (1.0 + stats.f.ppf(level, 1, dof) / dof)

    out = {}
    for k, (name, c, s) in enumerate(zip(m.coef_names, m.coefficients, se)):
        if not s > 0:
            out[name] = (float(c), float(c))
            continue

        def resid(theta, v, k=k):
            X = _full_design(w, wk, m.model_id, m.include_sine, theta[0], math.exp(theta[1]))
            return _lstsq(np.delete(X, k, axis=1), y - v * X[:, k])[1]

        def excess_rss(v, start):
            sol = optimize.least_squares(
                resid, start[0], args=(v,), bounds=lb_bounds, method="trf",
                x_scale=np.array([max(1.0, cfg.t0_step), 1.0]),
                xtol=1e-10, ftol=1e-12, max_nfev=100,
            )
            start[0] = sol.x  # warm start the next evaluation on this side
            return float(sol.fun @ sol.fun) - critical

        ends = []
        for sign in (-1.0, 1.0):
            start = [theta_hat.copy()]
            inner, step = float(c), 2.0 * float(s)
            outer = inner + sign * step
            for _ in range(max_doublings):
                if excess_rss(outer, start) >= 0:
                    break
                inner, step = outer, 2.0 * step
                outer = inner + sign * step
            else:
                ends.append(sign * math.inf)
                continue
            a, b = sorted((inner, outer))
            ends.append(optimize.brentq(excess_rss, a, b, args=(start,), xtol=1e-8 * float(s)))
        out[name] = (float(ends[0]), float(ends[1]))
    return out
