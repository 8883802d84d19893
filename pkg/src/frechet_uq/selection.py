"""Variable importance for global Fréchet regression.

For predictor ``j`` the held-out statistic

    W_j(x, y) = d1(y, m_{-j}(x))^2 - d1(y, m(x))^2

compares the full model with the model refit without ``j``; it is positive
on average when ``j`` carries information. Globally, a one-sided Wilcoxon
signed-rank test with a Bonferroni correction decides which variables are
selected. Locally, a split-conformal interval for ``W_j`` given ``x`` flags
the regions of predictor space where the variable matters.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm, rankdata

from .errors import DimensionMismatchError, FrechetUQError
from .frechet import GlobalFrechetModel, as_predictors, fit
from .regions import fit_homoscedastic, residuals, split
from .spaces import EuclideanSpace, Space

__all__ = [
    "VariableReport",
    "LocalIntervals",
    "w_statistics",
    "wilcoxon_greater",
    "global_test",
    "local_importance",
    "select_variables",
    "report_rows",
]

MIN_TEST_SIZE = 10


@dataclass(frozen=True)
class LocalIntervals:
    lower: np.ndarray
    upper: np.ndarray
    radius: float

    @property
    def important(self) -> np.ndarray:
        """Points whose whole interval lies in (0, inf)."""
        return self.lower > 0


@dataclass
class VariableReport:
    variable_index: int
    name: str
    w_values: np.ndarray
    mean_w: float
    p_value_raw: float
    selected: bool
    local_intervals: LocalIntervals | None = field(default=None, repr=False)


def w_statistics(full: GlobalFrechetModel, X, Y, j: int, space: Space | None = None,
                 reduced: GlobalFrechetModel | None = None) -> np.ndarray:
    """``W_j`` at every held-out pair ``(X_i, Y_i)``.

    ``reduced`` defaults to ``full`` refit without column ``j`` on the same
    training data.
    """
    space = space if space is not None else full.space
    X = as_predictors(X)
    Y = space.as_points(Y, name="test responses")
    if X.shape[0] != Y.shape[0]:
        raise DimensionMismatchError(f"{X.shape[0]} predictor rows but {Y.shape[0]} responses")
    if reduced is None:
        reduced = full.drop(j)
    d_red = space.d1_rows(Y, reduced.predict(np.delete(X, j, axis=1)))
    d_full = space.d1_rows(Y, full.predict(X))
    return d_red ** 2 - d_full ** 2


def wilcoxon_greater(w) -> float:
    """One-sided signed-rank p-value for a positive location shift.

    Normal approximation with tie and continuity corrections; exact zeros
    are dropped. Returns 1 when every value is zero.
    """
    w = np.asarray(w, dtype=float)
    w = w[w != 0]
    n = w.size
    if n == 0:
        return 1.0
    ranks = rankdata(np.abs(w))
    t_plus = ranks[w > 0].sum()
    mean = n * (n + 1) / 4.0
    _, counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(counts ** 3 - counts) / 48.0
    if var <= 0:
        return 0.5
    z = (t_plus - mean - 0.5) / np.sqrt(var)
    return float(norm.sf(z))


def global_test(w_values, alpha: float, p: int) -> tuple[float, bool]:
    """Raw one-sided p-value and Bonferroni decision at level ``alpha / p``."""
    w_values = np.asarray(w_values, dtype=float)
    if w_values.size < MIN_TEST_SIZE:
        raise FrechetUQError(
            f"the signed-rank normal approximation needs at least {MIN_TEST_SIZE} values, "
            f"got {w_values.size}"
        )
    if p < 1:
        raise FrechetUQError(f"number of variables must be positive, got {p}")
    p_value = wilcoxon_greater(w_values)
    return p_value, bool(p_value <= alpha / p)


def local_importance(w_values, X_test, alpha: float, fractions=(0.5, 0.5), seed=None,
                     X_eval=None) -> LocalIntervals:
    """Split-conformal intervals ``m_W(x) +/- q`` for the scalar ``W`` given ``x``.

    ``w_values`` and ``X_test`` are split again: a linear (scalar Fréchet)
    model for ``W`` is fit on the first part and the constant radius on the
    second. Intervals are reported at ``X_eval`` (default ``X_test``).
    """
    w = np.asarray(w_values, dtype=float)
    X_test = as_predictors(X_test)
    if X_test.shape[0] != w.size:
        raise DimensionMismatchError(f"{w.size} W values but {X_test.shape[0]} predictor rows")
    rng = np.random.default_rng(seed)
    try:
        parts = split(w.size, fractions, rng)
    except FrechetUQError as exc:
        raise FrechetUQError(f"too few points for local intervals: {exc}") from exc
    p = X_test.shape[1]
    if parts.train.size <= p + 1:
        raise FrechetUQError(
            f"too few points for local intervals ({parts.train.size} to fit {p} predictors)"
        )
    space = EuclideanSpace(1)
    model = fit(X_test[parts.train], w[parts.train, None], space)
    sample = residuals(model, X_test[parts.test], w[parts.test, None], seed=rng)
    q = fit_homoscedastic(sample, alpha).value
    X_eval = X_test if X_eval is None else as_predictors(X_eval)
    center = model.predict(X_eval)[:, 0]
    return LocalIntervals(center - q, center + q, q)


def select_variables(X, Y, space: Space, alpha: float = 0.05, fractions=(0.5, 0.5),
                     seed=None, names=None, local: bool = False) -> list[VariableReport]:
    """Full selection pipeline: split, fit full and reduced models, test each ``W_j``."""
    X = as_predictors(X)
    Y = space.as_points(Y, name="responses")
    n, p = X.shape
    if Y.shape[0] != n:
        raise DimensionMismatchError(f"{n} predictor rows but {Y.shape[0]} responses")
    if p < 2:
        raise FrechetUQError("variable selection needs at least two predictors", code="NEED_P2")
    names = [f"X{j + 1}" for j in range(p)] if names is None else list(names)
    rng = np.random.default_rng(seed)
    parts = split(n, fractions, rng)
    full = fit(X[parts.train], Y[parts.train], space)
    X_te, Y_te = X[parts.test], Y[parts.test]
    reports = []
    for j in range(p):
        w = w_statistics(full, X_te, Y_te, j, space)
        p_raw, selected = global_test(w, alpha, p)
        intervals = local_importance(w, X_te, alpha, seed=rng) if local else None
        reports.append(VariableReport(j, names[j], w, float(w.mean()), p_raw, selected, intervals))
    return reports


def report_rows(reports) -> list[dict]:
    """Table rows with the columns Variable No., Variable Name, Selected, Raw p-value."""
    return [
        {
            "Variable No.": r.variable_index + 1,
            "Variable Name": r.name,
            "Selected": r.selected,
            "Raw p-value": r.p_value_raw,
        }
        for r in reports
    ]
