"""Global Fréchet regression.

The conditional Fréchet mean at ``x`` is estimated by the weighted barycenter
of the training responses with signed weights

    w_i(x) = 1 + (X_i - mean)^T  S^{-1}  (x - mean),

where ``S`` is the sample covariance of the predictors. With the default
denominator n the prediction for Euclidean responses is exactly the ordinary
least-squares fit; ``ddof=1`` (denominator n - 1) shrinks the fitted slope
by the factor (n - 1)/n.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, FrechetUQError, SingularCovarianceError
from .spaces import Space

__all__ = ["GlobalFrechetModel", "fit", "weights_at", "predict", "predict_without_variable"]

MAX_CONDITION = 1e12


def as_predictors(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DimensionMismatchError(f"predictors must be a 2-D array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise FrechetUQError("predictors contain missing or non-finite entries")
    return X


@dataclass(frozen=True)
class GlobalFrechetModel:
    """Fitted global Fréchet regression.

    Attributes
    ----------
    mean : (p,) array
        Predictor sample mean.
    cov_inverse : (p, p) array
        Inverse of the predictor sample covariance.
    predictors : (n, p) array
        Training predictors; the weights depend on them.
    responses : (n, *point_shape) array
        Training responses.
    space : Space
    ddof : int
        Delta degrees of freedom of the covariance (0 or 1).
    """

    mean: np.ndarray
    cov_inverse: np.ndarray
    predictors: np.ndarray
    responses: np.ndarray
    space: Space
    ddof: int = 0

    @property
    def n(self) -> int:
        return self.predictors.shape[0]

    @property
    def p(self) -> int:
        return self.predictors.shape[1]

    def _queries(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.p or x.ndim > 2:
            raise DimensionMismatchError(
                f"query has shape {x.shape} but the model has p={self.p} predictors"
            )
        return x

    def weight_matrix(self, Xq) -> np.ndarray:
        """Weights for a batch of queries, shape (q, n)."""
        Xq = np.atleast_2d(self._queries(Xq))
        centered = self.predictors - self.mean
        return 1.0 + (Xq - self.mean) @ self.cov_inverse @ centered.T

    def weights_at(self, x) -> np.ndarray:
        x = self._queries(x)
        if x.ndim != 1:
            raise DimensionMismatchError("weights_at takes a single query vector")
        return self.weight_matrix(x)[0]

    def predict(self, x) -> np.ndarray:
        """Prediction at a single query (1-D ``x``) or a batch (2-D ``x``)."""
        x = self._queries(x)
        out = self.space.barycenters(self.responses, self.weight_matrix(x))
        return out[0] if x.ndim == 1 else out

    def drop(self, j: int) -> "GlobalFrechetModel":
        """Refit on the same training data without predictor column ``j``."""
        if self.p < 2:
            raise FrechetUQError("cannot remove a variable from a model with p = 1", code="NEED_P2")
        if not 0 <= j < self.p:
            raise FrechetUQError(f"variable index {j} out of range for p={self.p}")
        return fit(np.delete(self.predictors, j, axis=1), self.responses, self.space, self.ddof)

    def to_dict(self) -> dict:
        return {
            "kind": "global_frechet",
            "space": self.space.to_dict(),
            "mean": self.mean.tolist(),
            "cov_inverse": self.cov_inverse.tolist(),
            "predictors": self.predictors.tolist(),
            "responses": self.responses.tolist(),
            "ddof": self.ddof,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GlobalFrechetModel":
        from .spaces import space_from_dict

        space = space_from_dict(d["space"])
        X = np.asarray(d["predictors"], dtype=float)
        return cls(
            mean=np.asarray(d["mean"], dtype=float),
            cov_inverse=np.asarray(d["cov_inverse"], dtype=float),
            predictors=X,
            responses=space.as_points(d["responses"]),
            space=space,
            ddof=int(d.get("ddof", 0)),
        )


def fit(X, Y, space: Space, ddof: int = 0) -> GlobalFrechetModel:
    """Fit a global Fréchet regression of responses ``Y`` on predictors ``X``.

    Parameters
    ----------
    ddof : {0, 1}
        Covariance denominator ``n - ddof``. 0 makes Euclidean predictions
        coincide with least squares.

    Raises
    ------
    SingularCovarianceError
        If the predictor covariance is singular or numerically close to it.
    """
    X = as_predictors(X)
    Y = space.as_points(Y, name="responses")
    n, p = X.shape
    if Y.shape[0] != n:
        raise DimensionMismatchError(f"{n} predictor rows but {Y.shape[0]} responses")
    if ddof not in (0, 1):
        raise FrechetUQError(f"ddof must be 0 or 1, got {ddof}")
    if n <= p:
        raise FrechetUQError(f"need more observations than predictors (n={n}, p={p})")
    mean = X.mean(axis=0)
    cov = np.atleast_2d(np.cov(X, rowvar=False, ddof=ddof))
    cond = np.linalg.cond(cov)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularCovarianceError(
            f"predictor covariance is singular (condition number {cond:.3g})"
        )
    cov_inv = np.linalg.inv(cov)
    cov_inv = 0.5 * (cov_inv + cov_inv.T)
    return GlobalFrechetModel(mean, cov_inv, X.copy(), Y.copy(), space, ddof)


def weights_at(model: GlobalFrechetModel, x) -> np.ndarray:
    return model.weights_at(x)


def predict(model: GlobalFrechetModel, x) -> np.ndarray:
    return model.predict(x)


def predict_without_variable(model: GlobalFrechetModel, X, j: int, x) -> np.ndarray:
    """Predict at ``x`` from a model refit on ``X`` without column ``j``.

    ``x`` is given with all ``p`` coordinates; coordinate ``j`` is dropped.
    """
    X = as_predictors(X)
    if X.shape[1] < 2:
        raise FrechetUQError("cannot remove a variable from a model with p = 1", code="NEED_P2")
    reduced = fit(np.delete(X, j, axis=1), model.responses, model.space, model.ddof)
    return reduced.predict(np.delete(np.asarray(x, dtype=float), j, axis=-1))
