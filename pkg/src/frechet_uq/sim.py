"""Simulation harness for coverage and variable-selection experiments.

Three generative models are available:

``gaussian_homo``
    ``Y = X^T beta + eps`` with equicorrelated Gaussian ``X`` (unit
    variances, off-diagonal ``rho``), ``beta`` a p x s matrix of ones and
    standard Gaussian ``eps`` in R^s.
``gaussian_hetero``
    Same, with noise ``||X||_2 * eps``.
``distributional``
    Each subject has predictors ``X`` and a series of ``n_inner`` values
    ``intercept + slope * sum_{l active} X_l + noise_sd * eps_j``; the
    response is the empirical quantile function of the series.

Every replicate draws from its own RNG stream keyed by ``(seed, n, replicate)``,
so reports do not depend on the order in which replicates run.
"""
from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.stats import chi2

from .errors import FrechetUQError
from .frechet import fit
from .regions import (
    ConstantRadius,
    PredictionRegion,
    fit_heteroscedastic_conformal,
    fit_heteroscedastic_knn,
    fit_homoscedastic,
    residuals,
    split,
    symmetric_difference_error,
)
from .selection import select_variables
from .spaces import EuclideanSpace, WassersteinSpace, empirical_quantiles, midpoint_grid

__all__ = [
    "ExperimentConfig",
    "CoverageReport",
    "SelectionReport",
    "equicorrelation",
    "generate_gaussian",
    "generate_distributional",
    "quantile_responses",
    "generate",
    "make_space",
    "oracle_region",
    "run_coverage_experiment",
    "run_consistency_experiment",
    "run_selection_experiment",
]

MODELS = ("gaussian_homo", "gaussian_hetero", "distributional")
ALGORITHMS = ("homoscedastic", "knn", "conformal")
EXPERIMENTS = ("coverage", "consistency", "selection")


@dataclass
class ExperimentConfig:
    experiment: str = "coverage"
    model: str = "gaussian_homo"
    p: int = 5
    s: int = 2
    rho: float = 0.2
    n_inner: int = 300
    grid_size: int = 100
    intercept: float = 100.0
    slope: float = 5.0
    noise_sd: float = 1.0
    active: tuple[int, ...] | None = None
    algorithm: str | None = None
    d2: str = "same"
    n_values: tuple[int, ...] = (500, 1000, 5000)
    alpha_grid: tuple[float, ...] = (0.05, 0.1, 0.2, 0.5)
    k_values: tuple[int, ...] = (10, 20, 50, 100)
    fractions: tuple[float, ...] = (0.5, 0.5)
    replications: int = 100
    eval_size: int = 2000
    selection_alpha: float = 0.05
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        for name in ("n_values", "alpha_grid", "k_values", "fractions"):
            setattr(self, name, tuple(getattr(self, name)))
        if self.active is not None:
            self.active = tuple(int(a) for a in self.active)
        if self.algorithm is None:
            self.algorithm = "knn" if self.model == "gaussian_hetero" else "homoscedastic"
        if self.algorithm == "conformal" and len(self.fractions) == 2:
            self.fractions = (0.4, 0.4, 0.2)
        self.validate()

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise FrechetUQError(
                f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.model not in MODELS:
            raise FrechetUQError(f"unknown model {self.model!r}; choose from {MODELS}")
        if self.algorithm not in ALGORITHMS:
            raise FrechetUQError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if not 0.0 <= self.rho < 1.0:
            raise FrechetUQError(f"rho must lie in [0, 1), got {self.rho}")
        counts = [self.p, self.s, self.n_inner, self.grid_size, self.replications,
                  self.eval_size, self.workers, *self.n_values, *self.k_values]
        if any(int(c) != c or c < 1 for c in counts):
            raise FrechetUQError("all counts must be positive integers")
        if not self.n_values or not self.alpha_grid:
            raise FrechetUQError("n_values and alpha_grid must be non-empty")
        if any(not 0.0 < a < 1.0 for a in (*self.alpha_grid, self.selection_alpha)):
            raise FrechetUQError("alpha values must lie in (0, 1)")
        if self.active is not None and any(not 0 <= a < self.p for a in self.active):
            raise FrechetUQError(f"active indices must lie in [0, {self.p})")

    def resolved(self) -> dict:
        return asdict(self)


def equicorrelation(p: int, rho: float) -> np.ndarray:
    return (1.0 - rho) * np.eye(p) + rho * np.ones((p, p))


def _predictors(config: ExperimentConfig, n: int, rng) -> np.ndarray:
    try:
        chol = np.linalg.cholesky(equicorrelation(config.p, config.rho))
    except np.linalg.LinAlgError as exc:
        raise FrechetUQError(f"equicorrelation matrix with rho={config.rho} is not "
                             "positive definite") from exc
    return rng.standard_normal((n, config.p)) @ chol.T


def generate_gaussian(config: ExperimentConfig, n: int, seed=None):
    """Draw ``(X, Y)`` from the homoscedastic or heteroscedastic Gaussian model."""
    rng = np.random.default_rng(seed)
    X = _predictors(config, n, rng)
    beta = np.ones((config.p, config.s))
    eps = rng.standard_normal((n, config.s))
    if config.model == "gaussian_hetero":
        eps *= np.linalg.norm(X, axis=1)[:, None]
    return X, X @ beta + eps


def generate_distributional(config: ExperimentConfig, n: int, seed=None):
    """Draw predictors and empirical quantile functions of simulated series."""
    rng = np.random.default_rng(seed)
    X = _predictors(config, n, rng)
    return X, quantile_responses(config, X, rng)


def quantile_responses(config: ExperimentConfig, X, seed=None) -> np.ndarray:
    """Simulate one series per row of ``X`` and return its quantile function."""
    rng = np.random.default_rng(seed)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    active = slice(None) if config.active is None else list(config.active)
    location = config.intercept + config.slope * X[:, active].sum(axis=1)
    noise = rng.standard_normal((X.shape[0], config.n_inner))
    series = location[:, None] + config.noise_sd * noise
    return empirical_quantiles(series, midpoint_grid(config.grid_size))


def generate(config: ExperimentConfig, n: int, seed=None):
    if config.model == "distributional":
        return generate_distributional(config, n, seed)
    return generate_gaussian(config, n, seed)


def make_space(config: ExperimentConfig):
    if config.model == "distributional":
        return WassersteinSpace(midpoint_grid(config.grid_size), None, config.d2)
    return EuclideanSpace(config.s, config.d2)


def _stream(config: ExperimentConfig, n: int, rep: int):
    return np.random.default_rng(np.random.SeedSequence([config.seed, n, rep]))


def _eval_stream(config: ExperimentConfig, n: int, rep: int):
    return np.random.default_rng(np.random.SeedSequence([config.seed, n, rep, 1]))


def _run_tasks(func, config, tasks):
    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(func, [config] * len(tasks), tasks))
    else:
        results = [func(config, t) for t in tasks]
    rows = [row for chunk in results for row in chunk]
    return rows


# ---------------------------------------------------------------------------
# coverage


@dataclass
class CoverageReport:
    """Replicate coverages, one row per (n, alpha, k, replicate)."""

    rows: list[dict]
    runtime: float = 0.0
    config: dict = field(default_factory=dict)

    def summary(self) -> list[dict]:
        groups: dict[tuple, list[float]] = {}
        for row in self.rows:
            groups.setdefault((row["n"], row["alpha"], row["k"]), []).append(row["coverage"])
        out = []
        for (n, alpha, k), values in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1],
                                                                             kv[0][2] or 0)):
            v = np.asarray(values)
            out.append({
                "n": n, "alpha": alpha, "k": k, "replications": v.size,
                "mean": float(v.mean()),
                "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0,
            })
        return out

    def mean(self, n, alpha, k=None) -> float:
        for row in self.summary():
            if row["n"] == n and row["alpha"] == alpha and row["k"] == k:
                return row["mean"]
        raise KeyError((n, alpha, k))

    def coverages(self, n, alpha, k=None) -> np.ndarray:
        return np.array([r["coverage"] for r in self.rows
                         if r["n"] == n and r["alpha"] == alpha and r["k"] == k])


def _coverage_replicate(config: ExperimentConfig, task):
    n, rep = task
    rng = _stream(config, n, rep)
    space = make_space(config)
    X, Y = generate(config, n, rng)
    X_ev, Y_ev = generate(config, config.eval_size, _eval_stream(config, n, rep))
    parts = split(n, config.fractions, rng)
    model = fit(X[parts.train], Y[parts.train], space)
    sample = residuals(model, X[parts.test], Y[parts.test], seed=rng)
    d_eval = space.d2_rows(Y_ev, model.predict(X_ev))
    rows = []
    if config.algorithm == "homoscedastic":
        for alpha in config.alpha_grid:
            radius = fit_homoscedastic(sample, alpha).value
            rows.append(_row(n, alpha, None, rep, np.mean(d_eval <= radius)))
        return rows
    calib = None
    if config.algorithm == "conformal":
        calib = residuals(model, X[parts.calib], Y[parts.calib], seed=rng)
    k_max = max(config.k_values)
    if k_max > len(sample):
        raise FrechetUQError(f"k={k_max} exceeds the test split size {len(sample)}",
                             code="K_RANGE")
    # neighbours of the evaluation points are shared by every (k, alpha)
    nbr = fit_heteroscedastic_knn(sample, 0.5, k_max).neighbors(X_ev)
    for k in config.k_values:
        for alpha in config.alpha_grid:
            if calib is None:
                rule = fit_heteroscedastic_knn(sample, alpha, k)
                radius = rule.radius_from_neighbors(nbr)
            else:
                rule = fit_heteroscedastic_conformal(sample, calib, alpha, k)
                radius = np.maximum(rule.base.radius_from_neighbors(nbr) + rule.offset, 0.0)
            rows.append(_row(n, alpha, k, rep, np.mean(d_eval <= radius)))
    return rows


def _row(n, alpha, k, rep, cov):
    return {"n": n, "alpha": alpha, "k": k, "replicate": rep, "coverage": float(cov)}


def run_coverage_experiment(config: ExperimentConfig) -> CoverageReport:
    """Replicated split-conformal coverage study on fresh evaluation data."""
    start = time.perf_counter()
    tasks = [(n, rep) for n in config.n_values for rep in range(config.replications)]
    rows = _run_tasks(_coverage_replicate, config, tasks)
    rows.sort(key=lambda r: (r["n"], r["k"] or 0, r["alpha"], r["replicate"]))
    return CoverageReport(rows, time.perf_counter() - start, config.resolved())


# ---------------------------------------------------------------------------
# consistency against the oracle region


def oracle_region(config: ExperimentConfig, alpha: float) -> PredictionRegion:
    """Smallest ball with conditional coverage ``1 - alpha`` in the homoscedastic model.

    With standard Gaussian noise in R^s and Euclidean d2, the radius is the
    ``1 - alpha`` quantile of a chi distribution with s degrees of freedom.
    """
    if config.model != "gaussian_homo" or config.d2 not in ("same", "euclidean"):
        raise FrechetUQError("the oracle region is available for gaussian_homo with Euclidean d2")
    beta = np.ones((config.p, config.s))
    radius = math.sqrt(chi2.ppf(1.0 - alpha, config.s))
    return PredictionRegion(lambda X: np.atleast_2d(X) @ beta, ConstantRadius(radius),
                            alpha, make_space(config))


def _consistency_replicate(config: ExperimentConfig, task):
    n, rep = task
    rng = _stream(config, n, rep)
    space = make_space(config)
    X, Y = generate(config, n, rng)
    X_ev, Y_ev = generate(config, config.eval_size, _eval_stream(config, n, rep))
    parts = split(n, config.fractions, rng)
    model = fit(X[parts.train], Y[parts.train], space)
    sample = residuals(model, X[parts.test], Y[parts.test], seed=rng)
    rows = []
    for alpha in config.alpha_grid:
        fitted = PredictionRegion(model, fit_homoscedastic(sample, alpha), alpha, space)
        err = symmetric_difference_error(fitted, oracle_region(config, alpha), X_ev, Y_ev)
        rows.append({"n": n, "alpha": alpha, "k": None, "replicate": rep, "coverage": err})
    return rows


def run_consistency_experiment(config: ExperimentConfig) -> CoverageReport:
    """Symmetric-difference error between fitted and oracle regions.

    The returned report reuses the coverage layout; its ``coverage`` column
    holds the estimated error.
    """
    start = time.perf_counter()
    tasks = [(n, rep) for n in config.n_values for rep in range(config.replications)]
    rows = _run_tasks(_consistency_replicate, config, tasks)
    rows.sort(key=lambda r: (r["n"], r["alpha"], r["replicate"]))
    return CoverageReport(rows, time.perf_counter() - start, config.resolved())


# ---------------------------------------------------------------------------
# variable selection


@dataclass
class SelectionReport:
    """Per-replicate selections plus the Table-1 style summary."""

    rows: list[dict]
    runtime: float = 0.0
    config: dict = field(default_factory=dict)

    def summary(self) -> list[dict]:
        out = []
        for n in sorted({r["n"] for r in self.rows}):
            reps = [r for r in self.rows if r["n"] == n]
            m = len(reps)
            out.append({
                "n": n,
                "replications": m,
                "detect_true_pct": 100.0 * sum(r["true_detected"] for r in reps) / m,
                "one_or_more_fp_pct": 100.0 * sum(r["false_positives"] >= 1 for r in reps) / m,
                "two_or_more_fp_pct": 100.0 * sum(r["false_positives"] >= 2 for r in reps) / m,
            })
        return out

    def rates(self, n) -> dict:
        for row in self.summary():
            if row["n"] == n:
                return row
        raise KeyError(n)


def _selection_replicate(config: ExperimentConfig, task):
    n, rep = task
    rng = _stream(config, n, rep)
    X, Y = generate(config, n, rng)
    reports = select_variables(X, Y, make_space(config), config.selection_alpha,
                               config.fractions[:2], seed=rng)
    active = set(range(config.p) if config.active is None else config.active)
    selected = {r.variable_index for r in reports if r.selected}
    return [{
        "n": n,
        "replicate": rep,
        "true_detected": active <= selected,
        "false_positives": len(selected - active),
        "p_values": [r.p_value_raw for r in reports],
    }]


def run_selection_experiment(config: ExperimentConfig) -> SelectionReport:
    """Repeat :func:`select_variables` and tabulate detections and false positives."""
    if config.model != "distributional":
        raise FrechetUQError("the selection experiment uses the distributional model")
    start = time.perf_counter()
    tasks = [(n, rep) for n in config.n_values for rep in range(config.replications)]
    rows = _run_tasks(_selection_replicate, config, tasks)
    rows.sort(key=lambda r: (r["n"], r["replicate"]))
    return SelectionReport(rows, time.perf_counter() - start, config.resolved())


# ---------------------------------------------------------------------------
# output


def write_csv(path, rows, columns=None):
    """Atomically write ``rows`` (dicts) as CSV with round-trip float precision."""
    columns = list(rows[0].keys()) if columns is None else columns
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row[c]) for c in columns])
    os.replace(tmp, path)


def format_value(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (list, tuple)):
        return ";".join(format_value(v) for v in value)
    return str(value)


def config_fields() -> dict:
    return {f.name: f for f in fields(ExperimentConfig)}
