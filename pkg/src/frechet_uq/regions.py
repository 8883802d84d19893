"""Ball-shaped prediction regions for metric-space responses.

A region at ``x`` is the closed ball ``{y : d2(y, center(x)) <= radius(x)}``.
The center is usually a fitted :class:`~frechet_uq.frechet.GlobalFrechetModel`
and the radius comes from one of the rules below, all estimated from
pseudo-residuals ``d2(Y_i, m(X_i))`` on a held-out split:

``ConstantRadius``
    Split-conformal quantile of all residuals (homoscedastic case).
``KnnRadius``
    Empirical quantile of the residuals of the k nearest held-out
    predictors (heteroscedastic case).
``ConformalKnnRadius``
    A ``KnnRadius`` shifted by a calibrated offset, which restores the
    finite-sample marginal guarantee.

An infinite radius stands for the whole space; it is returned when the
requested quantile index exceeds the sample size.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DimensionMismatchError, EmptyDataError, FrechetUQError
from .frechet import GlobalFrechetModel, as_predictors
from .spaces import Space

__all__ = [
    "SplitIndices",
    "ResidualSample",
    "ConstantRadius",
    "KnnRadius",
    "ConformalKnnRadius",
    "PredictionRegion",
    "split",
    "residuals",
    "quantile_rank",
    "fit_homoscedastic",
    "fit_heteroscedastic_knn",
    "fit_heteroscedastic_conformal",
    "fit_unconditional",
    "contains",
    "coverage",
    "symmetric_difference_error",
]

_EPS = 1e-9
_KNN_CHUNK = 512


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise FrechetUQError(f"alpha must lie in (0, 1), got {alpha}")


def quantile_rank(n: int, alpha: float, convention: str = "conformal") -> int:
    """1-based order-statistic index used for the level ``1 - alpha`` quantile.

    ``"conformal"`` gives ``ceil((1 - alpha)(n + 1))``, which may exceed ``n``;
    ``"plugin"`` gives ``ceil((1 - alpha) n)``.
    """
    _check_alpha(alpha)
    if convention == "conformal":
        target = (1.0 - alpha) * (n + 1)
    elif convention == "plugin":
        target = (1.0 - alpha) * n
    else:
        raise FrechetUQError(f"unknown quantile convention {convention!r}")
    return max(1, math.ceil(target - _EPS))


def _order_statistic(values, keys, rank):
    """``rank``-th smallest of ``values`` (ties by ``keys``), inf past the end."""
    if rank > len(values):
        return np.inf
    order = np.lexsort((keys, values))
    return float(values[order[rank - 1]])


def _k_smallest(dist, tiebreak, k, n):
    """Row-wise k smallest columns of ``dist`` in (distance, tiebreak, index) order."""
    if k < n:
        cand = np.argpartition(dist, k - 1, axis=1)[:, :k]
        kth = np.take_along_axis(dist, cand, axis=1).max(axis=1)
        # rows with ties at the k-th distance fall back to a full ordering
        exact = np.count_nonzero(dist <= kth[:, None], axis=1) == k
    else:
        cand = np.broadcast_to(np.arange(n), dist.shape)
        exact = np.ones(dist.shape[0], dtype=bool)
    out = np.empty((dist.shape[0], k), dtype=np.intp)
    if exact.any():
        c = cand[exact]
        d = np.take_along_axis(dist[exact], c, axis=1)
        order = np.lexsort((c, tiebreak[c], d), axis=-1)
        out[exact] = np.take_along_axis(c, order, axis=1)
    for i in np.flatnonzero(~exact):
        idx = np.arange(n)
        out[i] = np.lexsort((idx, tiebreak, dist[i]))[:k]
    return out


class SplitIndices(NamedTuple):
    train: np.ndarray
    test: np.ndarray
    calib: np.ndarray | None = None


def split(n: int, fractions, seed=None) -> SplitIndices:
    """Random disjoint index sets with sizes ``floor(f * n)`` for each fraction."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) not in (2, 3):
        raise FrechetUQError("fractions must be (train, test) or (train, test, calib)")
    if any(f <= 0 for f in fractions) or sum(fractions) > 1 + _EPS:
        raise FrechetUQError(f"fractions must be positive and sum to at most 1, got {fractions}")
    sizes = [int(math.floor(f * n + _EPS)) for f in fractions]
    if any(s == 0 for s in sizes):
        raise EmptyDataError(f"split of n={n} with fractions {fractions} leaves an empty set")
    perm = np.random.default_rng(seed).permutation(n)
    bounds = np.cumsum([0] + sizes)
    parts = [np.sort(perm[bounds[i]:bounds[i + 1]]) for i in range(len(sizes))]
    return SplitIndices(*parts)


@dataclass(frozen=True)
class ResidualSample:
    """Pseudo-residuals with their predictors and tie-breaking keys."""

    residuals: np.ndarray
    predictors: np.ndarray
    tiebreak: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.residuals, dtype=float)
        X = as_predictors(self.predictors) if np.size(self.predictors) else \
            np.zeros((r.shape[0], 0))
        u = np.asarray(self.tiebreak, dtype=float)
        if not (r.ndim == 1 and X.shape[0] == r.shape[0] == u.shape[0]):
            raise DimensionMismatchError(
                f"residuals {r.shape}, predictors {X.shape} and tiebreak {u.shape} disagree"
            )
        if not np.all(np.isfinite(r)):
            raise FrechetUQError("residuals must be finite")
        object.__setattr__(self, "residuals", r)
        object.__setattr__(self, "predictors", X)
        object.__setattr__(self, "tiebreak", u)

    def __len__(self):
        return self.residuals.shape[0]

    @classmethod
    def from_values(cls, residuals, predictors=None, seed=None) -> "ResidualSample":
        r = np.asarray(residuals, dtype=float)
        X = np.zeros((r.shape[0], 0)) if predictors is None else predictors
        return cls(r, X, np.random.default_rng(seed).uniform(size=r.shape[0]))


def residuals(model, X_test, Y_test, space: Space | None = None, seed=None) -> ResidualSample:
    """Pseudo-residuals ``d2(Y_i, center(X_i))`` with seeded tie-breaking draws.

    ``model`` is anything :func:`as_center` accepts.
    """
    center = as_center(model)
    X_test = as_predictors(X_test)
    space = space if space is not None else getattr(model, "space", None)
    if space is None:
        raise FrechetUQError("a space is required when the center is not a fitted model")
    Y_test = space.as_points(Y_test, name="test responses")
    if Y_test.shape[0] != X_test.shape[0]:
        raise DimensionMismatchError(
            f"{X_test.shape[0]} test predictor rows but {Y_test.shape[0]} responses"
        )
    r = space.d2_rows(Y_test, center(X_test))
    return ResidualSample(r, X_test, np.random.default_rng(seed).uniform(size=r.shape[0]))


# ---------------------------------------------------------------------------
# radius rules


@dataclass(frozen=True)
class ConstantRadius:
    value: float

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float)) if np.ndim(X) else np.zeros((1, 0))
        return np.full(X.shape[0], self.value)

    def to_dict(self):
        return {"type": "constant", "value": _enc(self.value)}


@dataclass(frozen=True)
class KnnRadius:
    """Local quantile of the residuals of the ``k`` nearest held-out points."""

    sample: ResidualSample
    k: int
    alpha: float

    def __post_init__(self):
        _check_alpha(self.alpha)
        if not 1 <= self.k <= len(self.sample):
            raise FrechetUQError(
                f"k={self.k} outside [1, {len(self.sample)}]", code="K_RANGE"
            )

    @property
    def rank(self) -> int:
        return quantile_rank(self.k, self.alpha, "plugin")

    def neighbors(self, X, k: int | None = None) -> np.ndarray:
        """Indices of the k nearest sample points, ordered by (distance, key, index)."""
        k = self.k if k is None else k
        X = np.atleast_2d(np.asarray(X, dtype=float))
        P = self.sample.predictors
        if X.shape[1] != P.shape[1]:
            raise DimensionMismatchError(
                f"queries have {X.shape[1]} predictors, sample has {P.shape[1]}"
            )
        n2 = P.shape[0]
        out = np.empty((X.shape[0], k), dtype=np.intp)
        for start in range(0, X.shape[0], _KNN_CHUNK):
            Q = X[start:start + _KNN_CHUNK]
            # direct differences keep exact ties exact (the Gram identity does not)
            dist = cdist(Q, P)
            out[start:start + Q.shape[0]] = _k_smallest(dist, self.sample.tiebreak, k, n2)
        return out

    def radius_from_neighbors(self, nbr) -> np.ndarray:
        res = self.sample.residuals[nbr[:, : self.k]]
        order = np.lexsort((self.sample.tiebreak[nbr[:, : self.k]], res), axis=-1)
        return np.take_along_axis(res, order[:, self.rank - 1:self.rank], axis=-1)[:, 0]

    def __call__(self, X) -> np.ndarray:
        return self.radius_from_neighbors(self.neighbors(X))

    def to_dict(self):
        return {
            "type": "knn",
            "k": self.k,
            "alpha": self.alpha,
            "residuals": self.sample.residuals.tolist(),
            "predictors": self.sample.predictors.tolist(),
            "tiebreak": self.sample.tiebreak.tolist(),
        }


@dataclass(frozen=True)
class ConformalKnnRadius:
    """``max(base(x) + offset, 0)`` with a calibrated offset."""

    base: KnnRadius
    offset: float

    def __call__(self, X) -> np.ndarray:
        return np.maximum(self.base(X) + self.offset, 0.0)

    def to_dict(self):
        d = self.base.to_dict()
        d.update(type="conformal_knn", offset=_enc(self.offset))
        return d


def _enc(value):
    return "inf" if np.isinf(value) else float(value)


def _dec(value):
    return np.inf if value == "inf" else float(value)


def radius_rule_from_dict(d: dict):
    kind = d["type"]
    if kind == "constant":
        return ConstantRadius(_dec(d["value"]))
    sample = ResidualSample(
        np.asarray(d["residuals"], dtype=float),
        np.asarray(d["predictors"], dtype=float),
        np.asarray(d["tiebreak"], dtype=float),
    )
    base = KnnRadius(sample, int(d["k"]), float(d["alpha"]))
    if kind == "knn":
        return base
    if kind == "conformal_knn":
        return ConformalKnnRadius(base, _dec(d["offset"]))
    raise FrechetUQError(f"unknown radius rule {kind!r}")


# ---------------------------------------------------------------------------
# fitting


def fit_homoscedastic(sample: ResidualSample, alpha: float,
                      convention: str = "conformal") -> ConstantRadius:
    """Constant radius: the ``ceil((1-alpha)(n2+1))``-th smallest residual.

    With exchangeable data the resulting region covers a fresh response
    with probability at least ``1 - alpha`` whatever the center model.
    ``convention="plugin"`` uses ``ceil((1-alpha) n2)`` instead.
    """
    n2 = len(sample)
    if n2 == 0:
        raise EmptyDataError("cannot fit a radius from an empty residual sample")
    rank = quantile_rank(n2, alpha, convention)
    return ConstantRadius(_order_statistic(sample.residuals, sample.tiebreak, rank))


def fit_heteroscedastic_knn(sample: ResidualSample, alpha: float, k: int) -> KnnRadius:
    if len(sample) == 0:
        raise EmptyDataError("cannot fit a radius from an empty residual sample")
    if sample.predictors.shape[1] == 0:
        raise FrechetUQError("kNN radii need the predictors of the residual sample")
    return KnnRadius(sample, int(k), float(alpha))


def fit_heteroscedastic_conformal(sample: ResidualSample, calib: ResidualSample,
                                  alpha: float, k: int) -> ConformalKnnRadius:
    """kNN radius on ``sample``, offset-calibrated on the disjoint ``calib`` split.

    Scores on the calibration split are ``residual - knn_radius(x)``; the
    offset is their ``ceil((1-alpha)(m+1))``-th smallest value.
    """
    if len(calib) == 0:
        raise EmptyDataError("the calibration split is empty", code="MODE_ARGS")
    base = fit_heteroscedastic_knn(sample, alpha, k)
    scores = calib.residuals - base(calib.predictors)
    rank = quantile_rank(len(calib), alpha, "conformal")
    return ConformalKnnRadius(base, _order_statistic(scores, calib.tiebreak, rank))


# ---------------------------------------------------------------------------
# regions


def as_center(center) -> Callable[[np.ndarray], np.ndarray]:
    """Normalise a center spec to a function mapping (q, p) queries to (q, ...) points."""
    if isinstance(center, GlobalFrechetModel):
        return lambda X: center.predict(np.atleast_2d(X))
    if isinstance(center, np.ndarray):
        return lambda X: np.broadcast_to(center, (np.atleast_2d(X).shape[0],) + center.shape)
    if callable(center):
        return center
    raise FrechetUQError(f"cannot use {type(center).__name__} as a region center")


@dataclass(frozen=True)
class PredictionRegion:
    """Closed ball ``B(center(x), radius(x))`` under the space's d2.

    ``center`` is a fitted model, a fixed point (unconditional regions) or a
    callable mapping a (q, p) array of queries to a stack of q points.
    """

    center: object
    radius_rule: object
    alpha: float
    space: Space

    def __post_init__(self):
        _check_alpha(self.alpha)

    def center_at(self, X) -> np.ndarray:
        return as_center(self.center)(_queries(X))

    def radius_at(self, X) -> np.ndarray:
        return self.radius_rule(_queries(X))

    def contains_many(self, X, Y) -> np.ndarray:
        X = _queries(X, len(self.space.as_points(Y)))
        Y = self.space.as_points(Y)
        if X.shape[0] != Y.shape[0]:
            raise DimensionMismatchError(f"{X.shape[0]} queries but {Y.shape[0]} responses")
        return self.space.d2_rows(Y, self.center_at(X)) <= self.radius_at(X)

    def contains(self, x, y) -> bool:
        x = np.zeros(0) if x is None else np.asarray(x, dtype=float)
        return bool(self.contains_many(x[None], self.space.as_points(y))[0])

    def to_dict(self, model_ref: str | None = None) -> dict:
        if isinstance(self.center, np.ndarray):
            center = {"type": "point", "value": self.center.tolist()}
        elif model_ref is not None:
            center = {"type": "model", "path": model_ref}
        else:
            raise FrechetUQError("serialising a model-centered region needs a model reference")
        return {
            "kind": "prediction_region",
            "space": self.space.to_dict(),
            "alpha": self.alpha,
            "center": center,
            "radius": self.radius_rule.to_dict(),
        }


def _queries(X, n=None) -> np.ndarray:
    if X is None:
        return np.zeros((1 if n is None else n, 0))
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None]
    return X


def fit_unconditional(Y, alpha: float, space: Space, split_fraction: float | None = None,
                      seed=None) -> PredictionRegion:
    """Tolerance region around the Fréchet mean of a sample without predictors.

    By default the center and the radius are estimated from the same sample,
    which makes the region slightly optimistic. With ``split_fraction`` the
    center is estimated on that fraction of the sample and the radius on the
    rest.
    """
    Y = space.as_points(Y, name="responses")
    if Y.shape[0] < 2:
        raise EmptyDataError("an unconditional region needs at least two responses")
    rng = np.random.default_rng(seed)
    if split_fraction is None:
        center_idx = calib_idx = np.arange(Y.shape[0])
    else:
        parts = split(Y.shape[0], (split_fraction, 1.0 - split_fraction), rng)
        center_idx, calib_idx = parts.train, parts.test
    center = space.barycenter(Y[center_idx], np.ones(center_idx.size))
    dist = space.d2_rows(Y[calib_idx], center[None])
    sample = ResidualSample(dist, np.zeros((dist.size, 0)), rng.uniform(size=dist.size))
    return PredictionRegion(center, fit_homoscedastic(sample, alpha), alpha, space)


def contains(region: PredictionRegion, x, y) -> bool:
    return region.contains(x, y)


def coverage(region: PredictionRegion, X_eval, Y_eval) -> float:
    """Fraction of evaluation pairs falling inside the region.

    The evaluation data must not have been used to fit the region.
    """
    Y_eval = region.space.as_points(Y_eval)
    if Y_eval.shape[0] == 0:
        raise EmptyDataError("empty evaluation set")
    return float(np.mean(region.contains_many(X_eval, Y_eval)))


def symmetric_difference_error(region_a: PredictionRegion, region_b: PredictionRegion,
                               X_eval, Y_eval) -> float:
    """Monte Carlo estimate of the mass where exactly one region holds ``Y``."""
    Y_eval = region_a.space.as_points(Y_eval)
    if Y_eval.shape[0] == 0:
        raise EmptyDataError("empty evaluation set")
    a = region_a.contains_many(X_eval, Y_eval)
    b = region_b.contains_many(X_eval, Y_eval)
    return float(np.mean(a ^ b))
