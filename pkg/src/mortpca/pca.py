"""Principal components of the logit-rate panel.

Columns are centred but not scaled. The direction matrix is orthonormal, so
its transpose is its inverse and maps component scores back to logit rates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .transform import LogitPanel


@dataclass(frozen=True, eq=False)
class PcaDecomposition:
    """Centred SVD of a weeks x series panel.

    Attributes
    ----------
    column_means : (n_series,) array
    directions : (n_series, n_series) array
        Orthonormal; column k is the direction of component k.
    scores : (n_weeks, n_series) array
        Baseline scores, ``(values - column_means) @ directions``. Column 0
        is the mortality index.
    singular_values : (n_series,) array, non-increasing
    explained_variance_shares : (n_series,) array summing to one
    """

    column_means: np.ndarray
    directions: np.ndarray
    scores: np.ndarray
    singular_values: np.ndarray
    explained_variance_shares: np.ndarray

    def __post_init__(self):
        for name in ("column_means", "directions", "scores", "singular_values", "explained_variance_shares"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_series(self) -> int:
        return self.column_means.shape[0]

    @property
    def n_components(self) -> int:
        return self.directions.shape[1]


def decompose(lp: LogitPanel | np.ndarray, rank_tol: float = 1e-10) -> PcaDecomposition:
    """Column-centred SVD with the mortality-index sign convention.

    Component 1 is flipped if needed so that its correlations with the
    series are non-positive (on balance: the sum of its direction entries is
    made non-positive, which fixes the sign whenever all correlations share
    one). Rank deficiency only warns; trailing zero components are kept.
    """
    values = np.asarray(lp.values if isinstance(lp, LogitPanel) else lp, dtype=float)
    n_weeks, n_series = values.shape
    if n_weeks <= n_series:
        raise DataError(f"need more weeks than series for PCA (got {n_weeks} x {n_series})")
    means = values.mean(axis=0)
    centred = values - means
    _, s, vt = np.linalg.svd(centred, full_matrices=False)
    directions = vt.T.copy()
    # deterministic orientation: the largest-magnitude entry of each trailing direction is positive
    for k in range(1, n_series):
        if directions[np.argmax(np.abs(directions[:, k])), k] < 0:
            directions[:, k] *= -1
    if directions[:, 0].sum() > 0:
        directions[:, 0] *= -1
    if s[0] == 0:
        raise DataError("panel has no variation")
    if s[-1] <= rank_tol * s[0]:
        warnings.warn(
            f"logit panel is rank deficient ({int(np.sum(s > rank_tol * s[0]))} of {n_series} "
            "components non-zero); trailing components retained",
            RuntimeWarning,
            stacklevel=2,
        )
    scores = centred @ directions
    sq = s**2
    return PcaDecomposition(means, directions, scores, s, sq / sq.sum())


def correlation_loadings(d: PcaDecomposition, lp: LogitPanel | np.ndarray) -> np.ndarray:
    """Pearson correlations between each series and each component's scores.

    Entry (i, k) is corr(series i, component k) over the baseline weeks.
    These are for reporting; reconstruction uses ``d.directions``.
    Components with zero score variance get NaN correlations.
    """
    values = np.asarray(lp.values if isinstance(lp, LogitPanel) else lp, dtype=float)
    if values.shape != d.scores.shape:
        raise DataError("panel does not match the decomposition it was fitted on")
    x = values - values.mean(axis=0)
    sx = np.sqrt((x**2).sum(axis=0))
    if np.any(sx == 0):
        j = int(np.flatnonzero(sx == 0)[0])
        name = lp.series[j].label if isinstance(lp, LogitPanel) else f"#{j}"
        raise DataError(f"series {name} has zero variance; correlation undefined")
    z = d.scores - d.scores.mean(axis=0)
    sz = np.sqrt((z**2).sum(axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        return (x.T @ z) / np.outer(sx, sz)


def project_week(d: PcaDecomposition, logit_row) -> np.ndarray:
    """Scores of one or more logit rows under the fixed baseline components."""
    row = np.asarray(logit_row, dtype=float)
    if row.shape[-1] != d.n_series:
        raise DataError(f"row length {row.shape[-1]} does not match {d.n_series} series")
    return (row - d.column_means) @ d.directions


def reconstruct(d: PcaDecomposition, score_rows) -> np.ndarray:
    """Logit rows from scores: ``scores @ directions.T + column_means``."""
    scores = np.asarray(score_rows, dtype=float)
    if scores.shape[-1] != d.n_components:
        raise DataError(f"score rows have {scores.shape[-1]} columns, expected {d.n_components}")
    return scores @ d.directions.T + d.column_means
