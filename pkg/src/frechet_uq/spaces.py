"""Metric spaces for regression responses.

Three concrete spaces are supported, each with a regression distance ``d1``
(used by the Fréchet fit) and a region distance ``d2`` (used for ball-shaped
prediction regions):

* :class:`EuclideanSpace` -- vectors in R^m.
* :class:`WassersteinSpace` -- one-dimensional distributions represented by
  their quantile functions on a fixed grid of probability levels.
* :class:`LaplacianSpace` -- graph Laplacians of r-node weighted graphs.

Points are plain numpy arrays of shape ``space.point_shape``; collections of
points are stacked along a leading axis. Every space has a closed-form
weighted barycenter (weighted average followed by a projection back onto the
space), which is what makes global Fréchet regression cheap.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np
from scipy.optimize import isotonic_regression

from .errors import (
    DegenerateWeightsError,
    DimensionMismatchError,
    EmptyDataError,
    FrechetUQError,
    InvalidLaplacianError,
    InvalidPointError,
)

__all__ = [
    "Space",
    "EuclideanSpace",
    "WassersteinSpace",
    "LaplacianSpace",
    "midpoint_grid",
    "empirical_quantiles",
    "distance_d1",
    "distance_d2",
    "weighted_barycenter",
    "space_from_dict",
]

LAPLACIAN_TOL = 1e-8


def midpoint_grid(M: int = 100) -> np.ndarray:
    """Probability levels ``(i - 0.5) / M`` for ``i = 1..M``."""
    if M < 1:
        raise FrechetUQError(f"grid size must be positive, got {M}")
    return (np.arange(1, M + 1) - 0.5) / M


def empirical_quantiles(samples, grid: np.ndarray) -> np.ndarray:
    """Empirical quantile function of raw series evaluated on ``grid``.

    Uses the left-continuous inverse of the empirical CDF, i.e. the
    ``ceil(u * n)``-th order statistic at level ``u``. ``samples`` may be a
    single series of shape (n,) or a batch of shape (N, n); the result has
    shape ``grid.shape`` or (N, len(grid)) respectively.
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[-1]
    if n == 0:
        raise EmptyDataError("cannot compute quantiles of an empty series")
    idx = np.ceil(np.asarray(grid) * n - 1e-9).astype(int) - 1
    idx = np.clip(idx, 0, n - 1)
    return np.sort(samples, axis=-1)[..., idx]


@dataclass(frozen=True)
class Space:
    """Base class for response spaces.

    Subclasses set ``kind``, the allowed ``d2`` choices and implement
    ``_d1_rows``, ``_d2_rows`` and ``project``.
    """

    kind: ClassVar[str] = ""
    d2_choices: ClassVar[tuple[str, ...]] = ("same",)

    @property
    def point_shape(self) -> tuple[int, ...]:
        raise NotImplementedError

    def _check_d2(self, d2):
        if d2 not in self.d2_choices:
            raise FrechetUQError(
                f"d2={d2!r} is not valid for {self.kind} space; "
                f"choose one of {self.d2_choices}"
            )

    # -- shape handling -------------------------------------------------

    def as_points(self, values, name="points") -> np.ndarray:
        """Coerce ``values`` to a stacked float array of shape (n, *point_shape)."""
        arr = np.asarray(values, dtype=float)
        shape = self.point_shape
        if arr.shape == shape:
            arr = arr[None]
        if arr.shape[1:] != shape:
            raise DimensionMismatchError(
                f"{name} have shape {arr.shape[1:]} but the {self.kind} space "
                f"expects points of shape {shape}"
            )
        return arr

    def _pair(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if a.shape[-len(self.point_shape):] != self.point_shape or \
                b.shape[-len(self.point_shape):] != self.point_shape:
            raise DimensionMismatchError(
                f"cannot compare points of shape {a.shape} and {b.shape} in a "
                f"{self.kind} space with point shape {self.point_shape}"
            )
        return a, b

    # -- distances ------------------------------------------------------

    def d1(self, a, b):
        """d1 between two points, or row-wise between stacks of points."""
        a, b = self._pair(a, b)
        out = self._d1_rows(a, b)
        return float(out) if np.ndim(out) == 0 else out

    def d2(self, a, b):
        """The region distance; falls back to d1 when ``d2_choice == "same"``."""
        a, b = self._pair(a, b)
        out = self._d1_rows(a, b) if self.d2_choice == "same" else self._d2_rows(a, b)
        return float(out) if np.ndim(out) == 0 else out

    def d1_rows(self, A, B) -> np.ndarray:
        """Row-wise d1 between broadcastable stacks of points."""
        A, B = self._pair(A, B)
        return self._d1_rows(A, B)

    def d2_rows(self, A, B) -> np.ndarray:
        A, B = self._pair(A, B)
        if self.d2_choice == "same":
            return self._d1_rows(A, B)
        return self._d2_rows(A, B)

    # -- barycenters ----------------------------------------------------

    def project(self, values: np.ndarray) -> np.ndarray:
        """Map a stack of unconstrained averages back onto the space."""
        return values

    def barycenters(self, points, weight_matrix) -> np.ndarray:
        """Weighted barycenters for each row of ``weight_matrix``.

        ``points`` has shape (n, *point_shape) and ``weight_matrix`` has shape
        (q, n). Each row is normalised by its sum, which must be nonzero.
        """
        points = self.as_points(points)
        W = np.atleast_2d(np.asarray(weight_matrix, dtype=float))
        if W.shape[1] != points.shape[0]:
            raise DimensionMismatchError(
                f"{W.shape[1]} weights given for {points.shape[0]} points"
            )
        if points.shape[0] == 0:
            raise EmptyDataError("cannot average an empty set of points")
        totals = W.sum(axis=1)
        scale = np.max(np.abs(W), axis=1)
        if np.any(np.abs(totals) <= 1e-12 * np.maximum(scale, 1e-300)):
            raise DegenerateWeightsError("weights sum to zero; barycenter undefined")
        flat = points.reshape(points.shape[0], -1)
        avg = (W / totals[:, None]) @ flat
        return self.project(avg.reshape((W.shape[0],) + self.point_shape))

    def barycenter(self, points, weights) -> np.ndarray:
        return self.barycenters(points, np.asarray(weights, dtype=float)[None])[0]

    # -- validation and serialisation ------------------------------------

    def validate(self, points) -> np.ndarray:
        points = self.as_points(points)
        if not np.all(np.isfinite(points)):
            raise InvalidPointError(f"{self.kind} points contain non-finite values")
        return points

    def to_dict(self) -> dict:
        raise NotImplementedError

    def describe(self) -> str:
        return f"{self.kind}{self.point_shape} d2={self.d2_choice}"


@dataclass(frozen=True)
class EuclideanSpace(Space):
    """R^m with the Euclidean norm as d1.

    ``d2`` may be ``"same"``, ``"euclidean"`` (identical to d1) or ``"sup"``.
    """

    m: int = 1
    d2_choice: str = "same"

    kind: ClassVar[str] = "euclidean"
    d2_choices: ClassVar[tuple[str, ...]] = ("same", "euclidean", "sup")

    def __post_init__(self):
        if self.m < 1:
            raise FrechetUQError(f"dimension m must be >= 1, got {self.m}")
        self._check_d2(self.d2_choice)

    @property
    def point_shape(self):
        return (self.m,)

    def _d1_rows(self, A, B):
        return np.sqrt(np.sum((A - B) ** 2, axis=-1))

    def _d2_rows(self, A, B):
        if self.d2_choice == "sup":
            return np.max(np.abs(A - B), axis=-1)
        return self._d1_rows(A, B)

    def to_dict(self):
        return {"kind": self.kind, "m": self.m, "d2": self.d2_choice}


@dataclass(frozen=True)
class WassersteinSpace(Space):
    """Distributions on the real line as quantile functions on a grid.

    d1 is the 2-Wasserstein distance, approximated by the root mean squared
    difference of the quantile values over the grid. ``d2`` may be ``"same"``,
    ``"sup"`` (largest absolute quantile gap) or ``"euclidean"`` (Euclidean
    norm of the vector of quantile gaps, i.e. ``sqrt(M) * d1``).
    """

    grid: np.ndarray = field(default_factory=midpoint_grid)
    bounds: tuple[float, float] | None = None
    d2_choice: str = "same"

    kind: ClassVar[str] = "wasserstein"
    d2_choices: ClassVar[tuple[str, ...]] = ("same", "sup", "euclidean")

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 1 or grid.size == 0:
            raise FrechetUQError("quantile grid must be a non-empty vector")
        if np.any(grid <= 0) or np.any(grid >= 1) or np.any(np.diff(grid) <= 0):
            raise FrechetUQError("quantile grid must be strictly increasing inside (0, 1)")
        object.__setattr__(self, "grid", grid)
        if self.bounds is not None:
            lo, hi = map(float, self.bounds)
            if not lo < hi:
                raise FrechetUQError(f"support bounds must satisfy lo < hi, got {self.bounds}")
            object.__setattr__(self, "bounds", (lo, hi))
        self._check_d2(self.d2_choice)

    def __eq__(self, other):
        return (
            isinstance(other, WassersteinSpace)
            and np.array_equal(self.grid, other.grid)
            and self.bounds == other.bounds
            and self.d2_choice == other.d2_choice
        )

    def __hash__(self):
        return hash((self.kind, self.grid.tobytes(), self.bounds, self.d2_choice))

    @property
    def M(self) -> int:
        return self.grid.size

    @property
    def point_shape(self):
        return (self.grid.size,)

    def _d1_rows(self, A, B):
        return np.sqrt(np.mean((A - B) ** 2, axis=-1))

    def _d2_rows(self, A, B):
        if self.d2_choice == "sup":
            return np.max(np.abs(A - B), axis=-1)
        return np.sqrt(np.sum((A - B) ** 2, axis=-1))

    def project(self, values):
        # isotonic projection only where the average is not already monotone
        out = np.array(values, dtype=float, copy=True)
        bad = np.any(np.diff(out, axis=-1) < 0, axis=-1)
        for i in np.flatnonzero(bad):
            out[i] = isotonic_regression(out[i]).x
        if self.bounds is not None:
            np.clip(out, self.bounds[0], self.bounds[1], out=out)
        return out

    def validate(self, points):
        points = super().validate(points)
        if np.any(np.diff(points, axis=-1) < 0):
            raise InvalidPointError("quantile functions must be non-decreasing on the grid")
        if self.bounds is not None and (
            np.any(points < self.bounds[0]) or np.any(points > self.bounds[1])
        ):
            raise InvalidPointError(f"quantile values fall outside the bounds {self.bounds}")
        return points

    def from_series(self, series) -> np.ndarray:
        """Convert raw series (one per row) to quantile functions on this grid."""
        return self.project(empirical_quantiles(series, self.grid))

    def to_dict(self):
        return {
            "kind": self.kind,
            "grid": self.grid.tolist(),
            "bounds": None if self.bounds is None else list(self.bounds),
            "d2": self.d2_choice,
        }


@dataclass(frozen=True)
class LaplacianSpace(Space):
    """Graph Laplacians of weighted graphs on ``r`` nodes.

    Members are symmetric, have zero row sums and off-diagonal entries in
    ``[-edge_bound, 0]``. d1 is the Frobenius distance.
    """

    r: int = 2
    edge_bound: float = np.inf
    d2_choice: str = "same"

    kind: ClassVar[str] = "laplacian"
    d2_choices: ClassVar[tuple[str, ...]] = ("same", "frobenius")

    def __post_init__(self):
        if self.r < 2:
            raise FrechetUQError(f"a graph Laplacian needs r >= 2 nodes, got {self.r}")
        if not self.edge_bound >= 0:
            raise FrechetUQError(f"edge bound must be non-negative, got {self.edge_bound}")
        self._check_d2(self.d2_choice)

    @property
    def point_shape(self):
        return (self.r, self.r)

    def _d1_rows(self, A, B):
        return np.sqrt(np.sum((A - B) ** 2, axis=(-2, -1)))

    def _d2_rows(self, A, B):
        return self._d1_rows(A, B)

    def project(self, values):
        """Symmetrise, clip edge weights and rebalance the diagonal.

        This is a cheap surrogate for the exact Frobenius projection onto the
        (convex) set of Laplacians; see :meth:`project_exact` for a hook.
        """
        L = 0.5 * (values + np.swapaxes(values, -1, -2))
        off = ~np.eye(self.r, dtype=bool)
        L = np.where(off, np.clip(L, -self.edge_bound, 0.0), 0.0)
        diag = -L.sum(axis=-1)
        idx = np.arange(self.r)
        L[..., idx, idx] = diag
        return L

    def project_exact(self, values):  # pragma: no cover - extension point
        raise NotImplementedError("exact Frobenius projection requires a QP solver")

    def validate(self, points):
        points = super().validate(points)
        tol = LAPLACIAN_TOL
        if np.any(np.abs(points - np.swapaxes(points, -1, -2)) > tol):
            raise InvalidLaplacianError("Laplacian is not symmetric")
        if np.any(np.abs(points.sum(axis=-1)) > tol):
            raise InvalidLaplacianError("Laplacian rows do not sum to zero")
        off = ~np.eye(self.r, dtype=bool)
        offd = points[:, off]
        if np.any(offd > tol) or np.any(offd < -self.edge_bound - tol):
            raise InvalidLaplacianError(
                f"off-diagonal entries must lie in [-{self.edge_bound}, 0]"
            )
        if np.any(np.diagonal(points, axis1=-2, axis2=-1) < -tol):
            raise InvalidLaplacianError("Laplacian has a negative diagonal entry")
        return points

    def to_dict(self):
        bound = None if np.isinf(self.edge_bound) else float(self.edge_bound)
        return {"kind": self.kind, "r": self.r, "edge_bound": bound, "d2": self.d2_choice}


def space_from_dict(d: dict) -> Space:
    kind = d.get("kind")
    d2 = d.get("d2", "same")
    if kind == "euclidean":
        return EuclideanSpace(int(d["m"]), d2)
    if kind == "wasserstein":
        bounds = d.get("bounds")
        return WassersteinSpace(np.asarray(d["grid"], dtype=float),
                                None if bounds is None else tuple(bounds), d2)
    if kind == "laplacian":
        bound = d.get("edge_bound")
        return LaplacianSpace(int(d["r"]), np.inf if bound is None else float(bound), d2)
    raise FrechetUQError(f"unknown space kind {kind!r}")


def distance_d1(a, b, space: Space) -> float:
    return space.d1(a, b)


def distance_d2(a, b, space: Space) -> float:
    return space.d2(a, b)


def weighted_barycenter(points, weights, space: Space) -> np.ndarray:
    """Minimiser of ``sum_i w_i d1(y, Y_i)^2`` over the space (up to projection).

    Weights may be negative; they are normalised by their sum.
    """
    points = space.as_points(points)
    weights = np.asarray(weights, dtype=float)
    if points.shape[0] == 0:
        raise EmptyDataError("cannot average an empty set of points")
    if weights.shape != (points.shape[0],):
        raise DimensionMismatchError(
            f"{weights.shape} weights given for {points.shape[0]} points"
        )
    return space.barycenter(points, weights)
