"""Stochastic models for trend residuals and the trailing components.

A SARIMA(p,d,q)(P,D,Q)_s model is stored in expanded form: the full
autoregressive polynomial ``phi(B) Phi(B^s) (1-B)^d (1-B^s)^D`` and the moving
average polynomial ``theta(B) Theta(B^s)``. MA polynomials use the
``1 + theta B`` sign convention, so an innovation term ``-0.26 e(w-1)``
corresponds to ``ma = [-0.26]``.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize, signal

from .errors import ConvergenceError, DataError, NumericalError

MA_CONVENTION = "1 + theta B"
_PACF_LIMIT = 0.9999


@dataclass(frozen=True)
class SarimaSpec:
    p: int = 0
    d: int = 1
    q: int = 1
    P: int = 1
    D: int = 0
    Q: int = 0
    s: int = 52

    def __post_init__(self):
        if self.s < 1:
            raise DataError("seasonal period must be at least 1")
        if min(self.p, self.d, self.q, self.P, self.D, self.Q) < 0:
            raise DataError("SARIMA orders must be non-negative")

    @classmethod
    def parse(cls, text: str) -> "SarimaSpec":
        """Accept ``"0,1,1,1,0,0,52"`` or ``"(0,1,1)(1,0,0)52"``."""
        nums = [int(x) for x in re.findall(r"\d+", text)]
        if len(nums) != 7:
            raise DataError(f"cannot parse SARIMA spec {text!r}")
        return cls(*nums)

    def __str__(self):
        return f"({self.p},{self.d},{self.q})({self.P},{self.D},{self.Q}){self.s}"

    @property
    def n_params(self) -> int:
        return self.p + self.q + self.P + self.Q


RANDOM_WALK_SPEC = SarimaSpec(0, 1, 0, 0, 0, 0, 1)


def _poly_mul(*polys) -> np.ndarray:
    out = np.array([1.0])
    for poly in polys:
        out = np.convolve(out, poly)
    return out


def _lag_poly(coefs, lag: int, sign: float) -> np.ndarray:
    """1 + sign * sum_k coefs[k] B^(lag*(k+1))."""
    poly = np.zeros(lag * len(coefs) + 1)
    poly[0] = 1.0
    for k, c in enumerate(coefs):
        poly[lag * (k + 1)] = sign * c
    return poly


def _diff_poly(d: int, D: int, s: int) -> np.ndarray:
    return _poly_mul(*([np.array([1.0, -1.0])] * d), *([_lag_poly([1.0], s, -1.0)] * D))


def _pacf_to_ar(r) -> np.ndarray:
    """Durbin-Levinson: partial autocorrelations in (-1, 1) -> stationary AR."""
    phi = np.zeros(0)
    for k, rk in enumerate(r):
        phi = np.append(phi - rk * phi[::-1], rk) if k else np.array([rk])
    return phi


def _ar_to_pacf(phi) -> np.ndarray:
    phi = np.array(phi, dtype=float)
    r = np.zeros(len(phi))
    for k in range(len(phi) - 1, -1, -1):
        rk = phi[k]
        r[k] = rk
        if k:
            phi = (phi[:k] + rk * phi[:k][::-1]) / (1 - rk * rk)
    return r


def is_stationary(ar_coefs) -> bool:
    """Roots of 1 - sum phi_k B^k all outside the unit circle."""
    ar_coefs = np.asarray(ar_coefs, dtype=float)
    if ar_coefs.size == 0 or not np.any(ar_coefs):
        return True
    roots = np.roots(np.r_[-ar_coefs[::-1], 1.0])
    return bool(np.all(np.abs(roots) > 1.0))


@dataclass(frozen=True, eq=False)
class ResidualModel:
    """Fitted residual process, ready for forecasting.

    ``history`` holds the last observed values needed by the expanded AR
    recursion and ``innovations`` the last innovations needed by the MA part.
    """

    kind: str
    spec: SarimaSpec
    innovation_sd: float
    ar: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ma: np.ndarray = field(default_factory=lambda: np.zeros(0))
    seasonal_ar: np.ndarray = field(default_factory=lambda: np.zeros(0))
    seasonal_ma: np.ndarray = field(default_factory=lambda: np.zeros(0))
    history: np.ndarray = field(default_factory=lambda: np.zeros(0))
    innovations: np.ndarray = field(default_factory=lambda: np.zeros(0))
    drift: float = 0.0
    boundary: bool = False
    n_eff: int = 0

    def __post_init__(self):
        if self.kind not in ("sarima", "random_walk"):
            raise DataError(f"unknown residual model kind {self.kind!r}")
        if not self.innovation_sd >= 0 or not math.isfinite(self.innovation_sd):
            raise DataError("innovation_sd must be finite and non-negative")
        for name in ("ar", "ma", "seasonal_ar", "seasonal_ma", "history", "innovations"):
            arr = np.array(getattr(self, name), dtype=float).ravel()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        spec = self.spec
        if (len(self.ar), len(self.ma), len(self.seasonal_ar), len(self.seasonal_ma)) != (
            spec.p, spec.q, spec.P, spec.Q
        ):
            raise DataError(f"coefficient counts do not match spec {spec}")
        if len(self.history) < len(self.ar_poly) - 1:
            raise DataError(
                f"history holds {len(self.history)} values; the recursion needs {len(self.ar_poly) - 1}"
            )
        if len(self.innovations) < len(self.ma_poly) - 1:
            raise DataError("innovation history too short for the MA part")

    @property
    def ar_poly(self) -> np.ndarray:
        """Expanded AR polynomial c with c[0] = 1: c(B) x = ma_poly(B) e."""
        s = self.spec
        return _poly_mul(
            _lag_poly(self.ar, 1, -1.0),
            _lag_poly(self.seasonal_ar, s.s, -1.0),
            _diff_poly(s.d, s.D, s.s),
        )

    @property
    def ma_poly(self) -> np.ndarray:
        return _poly_mul(_lag_poly(self.ma, 1, 1.0), _lag_poly(self.seasonal_ma, self.spec.s, 1.0))

    @property
    def ma_convention(self) -> str:
        return MA_CONVENTION

    def with_history(self, history, innovations=None) -> "ResidualModel":
        p = len(self.ar_poly) - 1
        q = len(self.ma_poly) - 1
        innovations = np.zeros(q) if innovations is None else innovations
        return replace(self, history=np.asarray(history, float)[-p:] if p else np.zeros(0),
                        innovations=np.asarray(innovations, float)[-q:] if q else np.zeros(0))

    def to_dict(self) -> dict:
        s = self.spec
        return {
            "kind": self.kind,
            "spec": [s.p, s.d, s.q, s.P, s.D, s.Q, s.s],
            "ma_convention": MA_CONVENTION,
            "ar": self.ar.tolist(),
            "ma": self.ma.tolist(),
            "seasonal_ar": self.seasonal_ar.tolist(),
            "seasonal_ma": self.seasonal_ma.tolist(),
            "innovation_sd": self.innovation_sd,
            "drift": self.drift,
            "history": self.history.tolist(),
            "innovations": self.innovations.tolist(),
            "boundary": self.boundary,
            "n_eff": self.n_eff,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResidualModel":
        d = dict(d)
        if d.pop("ma_convention", MA_CONVENTION) != MA_CONVENTION:
            raise DataError("model file uses a different MA sign convention")
        d["spec"] = SarimaSpec(*d["spec"])
        return cls(**d)


def _recursion_lengths(spec: SarimaSpec) -> tuple[int, int]:
    """Lags reached by the expanded AR and MA polynomials."""
    p = spec.p + spec.P * spec.s + spec.d + spec.D * spec.s
    q = spec.q + spec.Q * spec.s
    return p, q


def sarima_model(spec: SarimaSpec, ar=(), ma=(), seasonal_ar=(), seasonal_ma=(),
                 innovation_sd=1.0, history=None, innovations=None) -> ResidualModel:
    """Build a model from known coefficients (zero history by default)."""
    p, q = _recursion_lengths(spec)
    hist = np.zeros(p) if history is None else np.asarray(history, float)[-p:] if p else np.zeros(0)
    innov = np.zeros(q) if innovations is None else np.asarray(innovations, float)[-q:] if q else np.zeros(0)
    return ResidualModel("sarima", spec, float(innovation_sd), ar, ma, seasonal_ar, seasonal_ma,
                         history=hist, innovations=innov)


def random_walk_model(innovation_sd: float, last_value: float = 0.0, drift: float = 0.0) -> ResidualModel:
    return ResidualModel("random_walk", RANDOM_WALK_SPEC, float(innovation_sd),
                         history=[last_value], drift=float(drift))


# ---------------------------------------------------------------------------
# estimation


def _unpack(u, spec: SarimaSpec):
    parts = []
    i = 0
    for order, sign in ((spec.p, 1.0), (spec.q, -1.0), (spec.P, 1.0), (spec.Q, -1.0)):
        r = np.tanh(u[i:i + order]) * _PACF_LIMIT
        parts.append(sign * _pacf_to_ar(r) if order else np.zeros(0))
        i += order
    return parts  # ar, ma, seasonal_ar, seasonal_ma


def _css_innovations(y, spec: SarimaSpec, ar, ma, sar, sma):
    """One-step innovations of the differenced series, conditional on its start."""
    a = _poly_mul(_lag_poly(ar, 1, -1.0), _lag_poly(sar, spec.s, -1.0))
    m = _poly_mul(_lag_poly(ma, 1, 1.0), _lag_poly(sma, spec.s, 1.0))
    u = np.convolve(y, a, mode="valid")
    return signal.lfilter([1.0], m, u)


def fit_sarima(residuals, spec: SarimaSpec = SarimaSpec(), max_iter: int = 500) -> ResidualModel:
    """Conditional-sum-of-squares estimate of a SARIMA model.

    The series is differenced, then the sum of squared one-step innovations
    is minimised by bounded L-BFGS-B starting from zero coefficients. Each
    polynomial is parameterised through partial autocorrelations, which keeps
    AR parts stationary and MA parts invertible.
    """
    x = np.asarray(residuals, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DataError("residual series contains non-finite values")
    if len(x) < 4 * spec.s + 20:
        raise DataError(f"series of length {len(x)} too short for {spec} (need {4 * spec.s + 20})")
    if max(spec.p, spec.q, spec.P, spec.Q) > 2:
        raise DataError("orders above 2 are not supported")
    y = np.convolve(x, _diff_poly(spec.d, spec.D, spec.s), mode="valid")
    scale = float(np.sqrt(np.mean(y**2)))
    if not scale > 1e-12 * max(1.0, float(np.max(np.abs(x)))):
        raise NumericalError("degenerate variance: differenced series is constant zero")
    y_std = y / scale
    k = spec.n_params

    def css(u):
        e = _css_innovations(y_std, spec, *_unpack(u, spec))
        return float(e @ e) / len(e)

    bound = 6.0  # tanh(6) * limit ~ 0.9998
    if k:
        res = optimize.minimize(
            css, np.zeros(k), method="L-BFGS-B", bounds=[(-bound, bound)] * k,
            options={"maxiter": max_iter, "ftol": 1e-14, "gtol": 1e-9},
        )
        if res.nit >= max_iter:
            grad = optimize.approx_fprime(res.x, css, 1e-8)
            raise ConvergenceError(
                f"CSS did not converge in {max_iter} iterations (|grad| = {np.linalg.norm(grad):.3g})",
                float(np.linalg.norm(grad)),
            )
        u = res.x
    else:
        u = np.zeros(0)
    boundary = bool(k and np.any(np.abs(u) > bound - 1e-3))
    if boundary:
        warnings.warn(f"SARIMA {spec}: a coefficient sits on the admissible boundary",
                      RuntimeWarning, stacklevel=2)
    ar, ma, sar, sma = _unpack(u, spec)
    e = _css_innovations(y, spec, ar, ma, sar, sma)
    sd = float(np.sqrt(e @ e / len(e)))
    if not sd > 1e-10 * scale or sd == 0:
        raise NumericalError("degenerate variance: innovations vanish")
    p_full, q_full = _recursion_lengths(spec)
    if len(e) < q_full:
        raise DataError("series too short to seed the MA recursion")
    return ResidualModel(
        "sarima", spec, sd, ar, ma, sar, sma,
        history=x[len(x) - p_full:] if p_full else np.zeros(0),
        innovations=e[len(e) - q_full:] if q_full else np.zeros(0),
        boundary=boundary,
        n_eff=len(e),
    )


def fit_random_walk(series, drift: bool = False) -> ResidualModel:
    """Random walk with innovation sd = sample sd of the first differences.

    Driftless unless ``drift=True`` (then the mean difference is the drift).
    """
    x = np.asarray(series, dtype=float)
    if len(x) < 20:
        raise DataError("random walk fit needs at least 20 observations")
    dx = np.diff(x)
    sd = float(np.std(dx, ddof=1))
    if not sd > 1e-12 * max(1.0, float(np.max(np.abs(dx)))):
        raise NumericalError("degenerate variance: first differences are constant")
    return ResidualModel(
        "random_walk", RANDOM_WALK_SPEC, sd, history=x[-1:],
        drift=float(dx.mean()) if drift else 0.0, n_eff=len(dx),
    )


# ---------------------------------------------------------------------------
# forecasting and simulation


def recurse(m: ResidualModel, shocks) -> np.ndarray:
    """Run the model recursion forward from its history.

    ``shocks`` holds innovations (already in model units) with shape
    ``(horizon,)`` or ``(n_paths, horizon)``; the result has the same shape.
    """
    eps = np.asarray(shocks, dtype=float)
    single = eps.ndim == 1
    eps = np.atleast_2d(eps)
    n, h = eps.shape
    c = m.ar_poly
    mp = m.ma_poly
    p, q = len(c) - 1, len(mp) - 1
    x = np.empty((n, p + h))
    x[:, :p] = m.history[len(m.history) - p:] if p else 0.0
    e = np.empty((n, q + h))
    e[:, :q] = m.innovations[len(m.innovations) - q:] if q else 0.0
    e[:, q:] = eps
    ar_lags = np.flatnonzero(c[1:]) + 1
    ma_lags = np.flatnonzero(mp[1:]) + 1
    for t in range(h):
        val = e[:, q + t] + m.drift
        for i in ar_lags:
            val = val - c[i] * x[:, p + t - i]
        for j in ma_lags:
            val = val + mp[j] * e[:, q + t - j]
        x[:, p + t] = val
    out = x[:, p:]
    return out[0] if single else out


def forecast_mean(m: ResidualModel, horizon: int) -> np.ndarray:
    """Minimum-MSE forecast: future innovations at zero, past ones kept."""
    if horizon <= 0:
        raise DataError("forecast horizon must be positive")
    return recurse(m, np.zeros(horizon))


def psi_weights(m: ResidualModel, n: int) -> np.ndarray:
    """First ``n`` coefficients of ma_poly(B) / ar_poly(B)."""
    c, mp = m.ar_poly, m.ma_poly
    impulse = np.zeros(n)
    impulse[0] = 1.0
    return signal.lfilter(mp, c, impulse)


def forecast_variance(m: ResidualModel, horizon: int) -> np.ndarray:
    """sd^2 * cumulative sum of squared psi weights, per step ahead."""
    if horizon <= 0:
        raise DataError("forecast horizon must be positive")
    psi = psi_weights(m, horizon)
    return m.innovation_sd**2 * np.cumsum(psi**2)


def simulate_path(m: ResidualModel, horizon: int, rng: np.random.Generator) -> np.ndarray:
    """One draw of the recursion with Gaussian innovations."""
    return recurse(m, m.innovation_sd * rng.standard_normal(horizon))


def simulate_paths(m: ResidualModel, standard_normals) -> np.ndarray:
    """Paths from pre-drawn N(0, 1) variates, shape ``(n_paths, horizon)``."""
    return recurse(m, m.innovation_sd * np.asarray(standard_normals, dtype=float))
