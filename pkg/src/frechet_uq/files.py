"""Reading datasets and reading/writing model, region and config files.

All writers go through :func:`atomic_write` so a failing command never
leaves a partial file behind.
"""
from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import fields
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError, EmptyDataError, FrechetUQError, InvalidLaplacianError
from .frechet import GlobalFrechetModel
from .regions import PredictionRegion, radius_rule_from_dict
from .sim import ExperimentConfig
from .spaces import EuclideanSpace, LaplacianSpace, Space, WassersteinSpace, midpoint_grid, \
    space_from_dict


def atomic_write(path, text: str):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Read a numeric CSV with a header row."""
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise FrechetUQError(f"cannot read {path}: {exc.strerror}", code="IO_ERROR") from exc
    if len(rows) < 2:
        raise EmptyDataError(f"{path} has no data rows")
    header, body = rows[0], rows[1:]
    if any(len(r) != len(header) for r in body):
        raise DimensionMismatchError(f"{path}: rows do not all have {len(header)} columns")
    try:
        values = np.array([[float(c) for c in r] for r in body])
    except ValueError as exc:
        raise FrechetUQError(f"{path}: non-numeric entry ({exc})", code="DATA_PARSE") from exc
    if not np.all(np.isfinite(values)):
        raise FrechetUQError(f"{path}: missing or non-finite entries", code="DATA_PARSE")
    return [h.strip() for h in header], values


def build_space(kind: str, values: np.ndarray, d2: str = "same", grid=None, bounds=None,
                edge_bound=None, series: bool = False, grid_size: int = 100):
    """Construct the response space and the stacked responses from a raw table."""
    ncol = values.shape[1]
    if kind == "euclidean":
        space = EuclideanSpace(ncol, d2)
        return space, space.validate(values)
    if kind == "wasserstein":
        if series:
            space = WassersteinSpace(midpoint_grid(grid_size), bounds, d2)
            return space, space.from_series(values)
        grid = midpoint_grid(ncol) if grid is None else np.asarray(grid, dtype=float)
        if grid.size != ncol:
            raise DimensionMismatchError(
                f"quantile grid has {grid.size} levels but responses have {ncol} columns"
            )
        space = WassersteinSpace(grid, bounds, d2)
        return space, space.validate(values)
    if kind == "laplacian":
        r = int(round(np.sqrt(ncol)))
        if r * r != ncol:
            raise DimensionMismatchError(f"{ncol} columns is not a flattened r x r matrix")
        mats = values.reshape(-1, r, r)
        if edge_bound is None:
            off = mats[:, ~np.eye(r, dtype=bool)]
            edge_bound = float(max(-off.min(), 0.0)) if off.size else 0.0
        space = LaplacianSpace(r, edge_bound, d2)
        try:
            return space, space.validate(mats)
        except InvalidLaplacianError:
            raise
        except FrechetUQError as exc:
            raise InvalidLaplacianError(str(exc)) from exc
    raise FrechetUQError(f"unknown space {kind!r}")


def points_to_rows(space: Space, points) -> np.ndarray:
    points = space.as_points(points)
    return points.reshape(points.shape[0], -1)


def save_json(path, obj):
    atomic_write(path, json.dumps(obj, indent=1) + "\n")


def load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise FrechetUQError(f"cannot read {path}: {exc.strerror}", code="IO_ERROR") from exc
    except json.JSONDecodeError as exc:
        raise FrechetUQError(f"{path} is not a valid model/region file: {exc}",
                             code="DATA_PARSE") from exc


def save_model(path, model: GlobalFrechetModel):
    save_json(path, model.to_dict())


def load_model(path) -> GlobalFrechetModel:
    d = load_json(path)
    if d.get("kind") != "global_frechet":
        raise FrechetUQError(f"{path} is not a model file", code="DATA_PARSE")
    return GlobalFrechetModel.from_dict(d)


def save_region(path, region: PredictionRegion, model_path=None):
    ref = None if model_path is None else str(Path(model_path).resolve())
    save_json(path, region.to_dict(ref))


def load_region(path) -> PredictionRegion:
    d = load_json(path)
    if d.get("kind") != "prediction_region":
        raise FrechetUQError(f"{path} is not a region file", code="DATA_PARSE")
    space = space_from_dict(d["space"])
    c = d["center"]
    center = load_model(c["path"]) if c["type"] == "model" else space.as_points(c["value"])[0]
    return PredictionRegion(center, radius_rule_from_dict(d["radius"]), float(d["alpha"]), space)


# ---------------------------------------------------------------------------
# experiment configs: flat ``key = value`` lines, '#' comments


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    spec = {f.name: f for f in fields(ExperimentConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FrechetUQError(f"{source}:{lineno}: expected 'key = value'", code="CONFIG_PARSE")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in spec:
            raise FrechetUQError(f"{source}:{lineno}: unknown key {key!r}", code="CONFIG_PARSE")
        try:
            values[key] = _parse_value(key, value)
        except ValueError as exc:
            raise FrechetUQError(f"{source}:{lineno}: key {key!r}: {exc}",
                                 code="CONFIG_PARSE") from exc
    try:
        return ExperimentConfig(**values)
    except FrechetUQError as exc:
        raise FrechetUQError(f"{source}: {exc}", code="CONFIG_PARSE") from exc


_INT_KEYS = {"p", "s", "n_inner", "grid_size", "replications", "eval_size", "seed", "workers"}
_FLOAT_KEYS = {"rho", "intercept", "slope", "noise_sd", "selection_alpha"}
_LIST_KEYS = {"n_values": int, "alpha_grid": float, "k_values": int, "fractions": float,
              "active": int}


def _parse_value(key, value):
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    if key in _LIST_KEYS:
        if key == "active" and value.lower() in ("", "all", "none"):
            return None
        return tuple(_LIST_KEYS[key](v) for v in value.split(",") if v.strip())
    if key == "algorithm" and value.lower() in ("", "default", "none"):
        return None
    return value


def format_config(config: ExperimentConfig) -> str:
    lines = []
    for key, value in config.resolved().items():
        if isinstance(value, (tuple, list)):
            value = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
        elif value is None:
            value = "all" if key == "active" else "none"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
