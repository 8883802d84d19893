"""Uncertainty quantification for Fréchet regression with metric-space responses."""
from .errors import FrechetUQError
from .frechet import GlobalFrechetModel, fit, predict, predict_without_variable, weights_at
from .regions import (
    PredictionRegion,
    ResidualSample,
    contains,
    coverage,
    fit_heteroscedastic_conformal,
    fit_heteroscedastic_knn,
    fit_homoscedastic,
    fit_unconditional,
    residuals,
    split,
    symmetric_difference_error,
)
from .spaces import (
    EuclideanSpace,
    LaplacianSpace,
    WassersteinSpace,
    distance_d1,
    distance_d2,
    midpoint_grid,
    weighted_barycenter,
)

__version__ = "0.1.0"
