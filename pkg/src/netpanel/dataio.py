"""Panel CSV ingestion, configuration files and result serialization.

The on-disk panel format is long: one row per observed (unit, period) cell
with columns ``unit_id``, ``period``, ``y``, optional covariate columns,
and optional ``lat``/``lon`` coordinates.  Unit ids may be arbitrary
hashables; they are mapped to dense 0-based ids by sorted order.  Periods
are mapped to consecutive integers by sorted distinct values.  Both
mappings go into the run manifest so outputs are reproducible.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .exceptions import ConfigError, DuplicateCell, IoError, NonContiguousWindow, SchemaError
from .panel import PanelData, PanelLayout, build_layout

__all__ = [
    "PanelCsvSchema",
    "LoadedPanel",
    "load_panel_csv",
    "save_panel_csv",
    "neighborhood_average",
    "write_json",
    "read_json",
    "build_manifest",
]


@dataclass(frozen=True)
class PanelCsvSchema:
    """Column contract for long-format panel files."""

    unit_col: str = "unit_id"
    period_col: str = "period"
    y_col: str = "y"
    covariates: tuple = ()
    lat_col: str = "lat"
    lon_col: str = "lon"
    log_y: bool = False


@dataclass(frozen=True)
class LoadedPanel:
    """A parsed panel: layout, data, optional coordinates and id mappings."""

    layout: PanelLayout
    data: PanelData
    coords: np.ndarray | None
    unit_ids: list
    period_values: list


def load_panel_csv(path, schema: PanelCsvSchema | None = None) -> LoadedPanel:
    """Read a long-format panel CSV and build the layout and data blocks.

    Enforces unique (unit, period) cells and contiguous per-unit windows.
    With ``schema.log_y`` the outcome is log-transformed on load (values
    must then be positive).
    """
    schema = schema or PanelCsvSchema()
    try:
        df = pd.read_csv(path, float_precision="round_trip")
    except OSError as exc:
        raise IoError(f"cannot read panel csv {path}: {exc}") from exc
    for col in (schema.unit_col, schema.period_col, schema.y_col, *schema.covariates):
        if col not in df.columns:
            raise SchemaError(f"missing required column {col!r}", column=col)

    dup = df.duplicated([schema.unit_col, schema.period_col])
    if dup.any():
        row = df[dup].iloc[0]
        raise DuplicateCell(row[schema.unit_col], row[schema.period_col])

    unit_ids = sorted(df[schema.unit_col].unique().tolist())
    period_values = sorted(df[schema.period_col].unique().tolist())
    unit_map = {u: i for i, u in enumerate(unit_ids)}
    period_map = {p: t for t, p in enumerate(period_values)}
    N, TP1 = len(unit_ids), len(period_values)
    if TP1 < 2:
        raise SchemaError("panel needs at least two distinct periods")

    iu = df[schema.unit_col].map(unit_map).to_numpy()
    it = df[schema.period_col].map(period_map).to_numpy()
    d = np.zeros((N, TP1), dtype=np.int8)
    d[iu, it] = 1
    try:
        layout = build_layout(d)
    except NonContiguousWindow as exc:
        raise NonContiguousWindow(
            exc.unit, periods=[period_values[t] for t in (exc.periods or [])]
        ) from exc

    y_raw = df[schema.y_col].to_numpy(dtype=float)
    if schema.log_y:
        if np.any(y_raw <= 0):
            raise SchemaError("log transform requires strictly positive outcomes", column=schema.y_col)
        y_raw = np.log(y_raw)
    k = len(schema.covariates)
    x_raw = (
        df[list(schema.covariates)].to_numpy(dtype=float) if k else np.empty((len(df), 0))
    )
    if not np.isfinite(y_raw).all() or (k and not np.isfinite(x_raw).all()):
        raise SchemaError("panel contains non-finite outcome or covariate values")

    local = layout._local_index[it, iu]
    Y = [np.zeros(layout.period_counts[t]) for t in range(TP1)]
    X = [np.zeros((layout.period_counts[t], k)) for t in range(TP1)]
    for t in range(TP1):
        mask = it == t
        Y[t][local[mask]] = y_raw[mask]
        if k:
            X[t][local[mask]] = x_raw[mask]
    data = PanelData.from_lists(Y, X, layout)

    coords = None
    if schema.lat_col in df.columns and schema.lon_col in df.columns:
        coords = np.full((N, 2), np.nan)
        lat = df[schema.lat_col].to_numpy(dtype=float)
        lon = df[schema.lon_col].to_numpy(dtype=float)
        coords[iu, 0] = lat
        coords[iu, 1] = lon
        if not np.isfinite(coords).all():
            raise SchemaError("some units lack coordinates", column=schema.lat_col)

    return LoadedPanel(
        layout=layout, data=data, coords=coords, unit_ids=unit_ids, period_values=period_values
    )


def save_panel_csv(
    path,
    layout: PanelLayout,
    data: PanelData,
    coords: np.ndarray | None = None,
    covariate_names=None,
) -> None:
    """Write a panel to the long CSV format (shortest-roundtrip floats)."""
    k = data.k
    names = list(covariate_names) if covariate_names else [f"x{j+1}" for j in range(k)]
    if len(names) != k:
        raise ValueError(f"need {k} covariate names, got {len(names)}")
    cols = ["unit_id", "period", "y", *names]
    if coords is not None:
        cols += ["lat", "lon"]
    try:
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for t in range(layout.T + 1):
                ids = layout.ids(t)
                for r, unit in enumerate(ids):
                    row = [str(int(unit)), str(t), repr(float(data.Y[t][r]))]
                    row += [repr(float(v)) for v in data.X[t][r]]
                    if coords is not None:
                        row += [repr(float(coords[unit, 0])), repr(float(coords[unit, 1]))]
                    fh.write(",".join(row) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write panel csv to {path}: {exc}") from exc


def neighborhood_average(
    values: np.ndarray, coords: np.ndarray, d_km: float, chunk: int = 2048
) -> tuple[np.ndarray, int]:
    """Average of ``values`` over each unit's distance-band neighbors.

    Units with no neighbors within ``d_km`` keep their own value; the count
    of such units is returned alongside.  Useful for building
    neighborhood-level covariates before estimation.
    """
    from .weights import build_distance_band

    adjacency = build_distance_band(coords, d_km, chunk=chunk)
    A = adjacency.A
    deg = np.asarray(A.sum(axis=1)).ravel()
    sums = A @ np.asarray(values, dtype=float)
    out = np.where(deg > 0, sums / np.maximum(deg, 1.0), values)
    return out, int(np.sum(deg == 0))


def write_json(path, payload: dict) -> None:
    try:
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if dataclasses.is_dataclass(obj):
        return dataclasses.asdict(obj)
    raise TypeError(f"cannot serialize {type(obj)!r}")


def build_manifest(config: dict, seed, extras: dict | None = None) -> dict:
    """Reproducibility manifest: config hash, seed and library versions."""
    import scipy

    canonical = json.dumps(config, sort_keys=True, default=_json_default)
    manifest = {
        "config": config,
        "config_sha256": hashlib.sha256(canonical.encode("utf8")).hexdigest(),
        "seed": seed,
        "versions": {
            "netpanel": "0.1.0",
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pd.__version__,
            "python": platform.python_version(),
        },
    }
    if extras:
        manifest.update(extras)
    return manifest
