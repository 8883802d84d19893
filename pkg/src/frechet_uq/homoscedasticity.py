"""Distance-covariance test of independence between residuals and predictors.

Under homoscedasticity the pseudo-residuals ``d2(Y, m(X))`` are independent
of ``X``. The test statistic is ``n * dCov^2(X, r)`` and its null
distribution is approximated by permuting the residuals.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy.spatial.distance import cdist

from .errors import DimensionMismatchError, FrechetUQError
from .frechet import as_predictors

__all__ = ["DcovResult", "dcov_squared", "test", "decide_algorithm", "HOMOSCEDASTIC",
           "HETEROSCEDASTIC"]

HOMOSCEDASTIC = "homoscedastic"
HETEROSCEDASTIC = "heteroscedastic"
DEFAULT_PERMUTATIONS = 999


@dataclass(frozen=True)
class DcovResult:
    statistic: float
    dcov_squared: float
    p_value: float
    permutations: int

    def to_text(self) -> str:
        return "\n".join(f"{k}={v!r}" for k, v in self.__dict__.items())


def _validate(X_rows, r):
    X = as_predictors(X_rows)
    r = np.asarray(r, dtype=float)
    if r.ndim != 1 or r.shape[0] != X.shape[0]:
        raise DimensionMismatchError(
            f"{X.shape[0]} predictor rows but residual vector of shape {r.shape}"
        )
    if r.shape[0] < 2:
        raise FrechetUQError("distance covariance needs at least two observations")
    return X, r


def _double_center(d):
    return d - d.mean(axis=0)[None, :] - d.mean(axis=1)[:, None] + d.mean()


def dcov_squared(X_rows, r) -> float:
    """Squared sample distance covariance between predictor rows and residuals."""
    X, r = _validate(X_rows, r)
    A = _double_center(cdist(X, X))
    B = _double_center(np.abs(r[:, None] - r[None, :]))
    return float(np.mean(A * B))


@numba.njit(cache=True)
def _centered_cross(A, r):
    # A is double-centred, so pairing it with raw |r_j - r_k| gives the same mean
    n = r.shape[0]
    s = 0.0
    for j in range(n):
        for k in range(j + 1, n):
            s += A[j, k] * abs(r[j] - r[k])
    return 2.0 * s / (n * n)


def test(X_rows, r, B: int = DEFAULT_PERMUTATIONS, seed=None) -> DcovResult:
    """Permutation test of independence between ``X_rows`` and ``r``.

    Each permutation draws from its own substream of ``seed``, so the
    p-value does not depend on evaluation order. The residuals come from a
    fitted model, so the test is only trustworthy once that model is
    accurate; use at least as many fitting points as testing points.
    """
    if B < 1:
        raise FrechetUQError(f"number of permutations must be >= 1, got {B}", code="BAD_B")
    X, r = _validate(X_rows, r)
    n = r.shape[0]
    A = _double_center(cdist(X, X))
    observed = dcov_squared(X, r)
    # compare against the kernel value so both sides share rounding
    observed_k = _centered_cross(A, r)
    exceed = 0
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    for child in ss.spawn(B):
        perm = np.random.default_rng(child).permutation(n)
        if _centered_cross(A, r[perm]) >= observed_k - 1e-12 * abs(observed_k):
            exceed += 1
    return DcovResult(
        statistic=n * observed,
        dcov_squared=observed,
        p_value=(1 + exceed) / (B + 1),
        permutations=B,
    )


def decide_algorithm(X_rows, r, level: float = 0.05, B: int = DEFAULT_PERMUTATIONS,
                     seed=None) -> str:
    """``"heteroscedastic"`` when the permutation p-value is at most ``level``."""
    return decide(test(X_rows, r, B, seed).p_value, level)


def decide(p_value: float, level: float) -> str:
    return HETEROSCEDASTIC if p_value <= level else HOMOSCEDASTIC
