"""Command-line interface: simulate, estimate, montecarlo, weights.

Configuration comes from a JSON file (``--config``) with flag overrides;
flags win.  Every run writes a ``manifest.json`` (config hash, seed,
library versions) sufficient to reproduce its outputs exactly.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import dataio
from .dgp import DgpConfig, simulate_dataset
from .estimator import FitOptions, fit
from .exceptions import ConfigError, NetPanelError
from .inference import confidence_intervals, z_quantile
from .montecarlo import MCConfig, compare_correction, export_standardized, run_mc
from .panel import Theta, unbalancedness
from .weights import (
    build_distance_band,
    build_network,
    build_rook_adjacency,
    check_spectral_condition,
    load_edge_list,
    save_edge_list,
)

__all__ = ["main", "run"]

STAR_THRESHOLDS = ((0.01, "***"), (0.05, "**"), (0.10, "*"))


def _stars(p: float) -> str:
    for thr, mark in STAR_THRESHOLDS:
        if p < thr:
            return mark
    return ""


def _normal_p(z: float) -> float:
    from scipy.stats import norm

    return float(2.0 * norm.sf(abs(z)))


def _parse_theta0(values) -> Theta:
    vec = np.asarray(values, dtype=float)
    if vec.size < 6:
        raise ConfigError("theta0 needs at least (rho, lambda, nu, gamma, beta, sigma2)")
    return Theta.from_vector(vec)


def _dgp_from_config(cfg: dict) -> DgpConfig:
    try:
        return DgpConfig(
            N=int(cfg["N"]),
            T=int(cfg["T"]),
            theta0=_parse_theta0(cfg["theta0"]),
            p=cfg.get("p"),
            target_up=cfg.get("target_up"),
            burn_in=int(cfg.get("burn_in", 20)),
            error_dist=cfg.get("error_dist", "normal"),
            seed=int(cfg.get("seed", 0)),
            rook_dims=tuple(cfg["rook_dims"]) if cfg.get("rook_dims") else None,
        )
    except KeyError as exc:
        raise ConfigError(f"dgp config missing {exc}") from exc


def _build_adjacency(cfg: dict, loaded):
    spec = cfg.get("weights", {})
    given = [key for key in ("rook", "distance_km", "edge_list") if spec.get(key) is not None]
    if len(given) != 1:
        raise ConfigError("weights must specify exactly one of rook / distance_km / edge_list")
    N = loaded.layout.N
    if given[0] == "rook":
        rows, cols = (int(v) for v in spec["rook"])
        if rows * cols != N:
            raise ConfigError(f"rook grid {rows}x{cols} does not cover {N} units")
        return build_rook_adjacency(rows, cols)
    if given[0] == "distance_km":
        if loaded.coords is None:
            raise ConfigError("distance-band weights need lat/lon columns in the panel")
        return build_distance_band(loaded.coords, float(spec["distance_km"]))
    return load_edge_list(spec["edge_list"], n_nodes=N)


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _run_simulate(cfg: dict) -> int:
    dgp_cfg = _dgp_from_config({**cfg.get("dgp", {}), "seed": cfg.get("seed", cfg.get("dgp", {}).get("seed", 0))})
    out = _out_dir(cfg)
    layout, network, data, alpha = simulate_dataset(dgp_cfg)
    dataio.save_panel_csv(out / "panel.csv", layout, data)
    dataio.write_json(
        out / "truth.json",
        {
            "theta0": dgp_cfg.theta0.to_vector(),
            "alpha": alpha,
            "unbalancedness": unbalancedness(layout),
            "n": layout.n,
        },
    )
    manifest = dataio.build_manifest(cfg, dgp_cfg.seed, {"mode": "simulate", "p": dgp_cfg.p})
    dataio.write_json(out / "manifest.json", manifest)
    print(f"wrote {out/'panel.csv'} (N={layout.N}, T={layout.T}, n={layout.n}, "
          f"UP={unbalancedness(layout):.4f})")
    return 0


def _estimate_report(result, names, levels=(0.95, 0.90)) -> str:
    est = result.theta_bc.to_vector()
    raw = result.theta_hat.to_vector()
    se = result.se
    lines = [
        "Dynamic network panel QMLE (bias-corrected estimates; raw in result.json)",
        "",
        f"{'parameter':<12}{'estimate':>12}{'std.err':>12}{'z':>9}{'p':>9}  sig",
    ]
    for j, name in enumerate(names):
        if not np.isfinite(est[j]):
            lines.append(f"{name:<12}{'dropped':>12}")
            continue
        z = est[j] / se[j] if se[j] > 0 else np.inf
        p = _normal_p(z)
        lines.append(
            f"{name:<12}{est[j]:>12.4f}{se[j]:>12.4f}{z:>9.2f}{p:>9.4f}  {_stars(p)}"
        )
    d = result.diagnostics
    lines += [
        "",
        f"n = {d['n']}, effective units = {d['n_effective_units']}, "
        f"UP = {d['unbalancedness']:.4f}",
        f"log-likelihood = {result.loglik:.4f}",
        f"raw estimates: {np.array2string(raw, precision=4, floatmode='fixed')}",
        "significance: *** p<0.01, ** p<0.05, * p<0.1 (two-sided normal)",
    ]
    if d["boundary"]:
        lines.append("WARNING: rho estimate is at the boundary of its interval")
    if d["dropped_columns"]:
        lines.append(f"NOTE: dropped columns {d['dropped_columns']}")
    return "\n".join(lines) + "\n"


def _run_estimate(cfg: dict) -> int:
    if "data" not in cfg:
        raise ConfigError("estimate mode needs a 'data' path")
    schema = dataio.PanelCsvSchema(
        covariates=tuple(cfg.get("covariates", ())),
        log_y=bool(cfg.get("log_y", False)),
    )
    loaded = dataio.load_panel_csv(cfg["data"], schema)
    adjacency = _build_adjacency(cfg, loaded)
    network = build_network(
        adjacency, loaded.layout, cross_self_links=bool(cfg.get("cross_self_links", False))
    )
    options = FitOptions(
        rho_bounds=tuple(cfg.get("rho_bounds", (-0.995, 0.995))),
        robust=bool(cfg.get("robust", False)),
        bias_correction=bool(cfg.get("bias_correction", True)),
    )
    result = fit(loaded.layout, network, loaded.data, options)
    out = _out_dir(cfg)
    names = result.param_names
    levels = tuple(cfg.get("levels", (0.95, 0.90)))
    cis = confidence_intervals(result.theta_bc.to_vector(), result.se, levels)
    payload = {
        "param_names": names,
        "theta_hat": result.theta_hat.to_vector(),
        "theta_bc": result.theta_bc.to_vector(),
        "se_raw": result.se_raw,
        "se_robust": result.se_robust,
        "bias_vector": result.bias_vector,
        "loglik": result.loglik,
        "vcov_raw": result.vcov_raw,
        "vcov_robust": result.vcov_robust,
        "alpha_hat": result.alpha_hat,
        "confidence_intervals": {
            str(level): {"lower": lo, "upper": hi} for level, (lo, hi) in cis.items()
        },
        "diagnostics": {
            k: v
            for k, v in result.diagnostics.items()
            if k not in ("grid_rho", "grid_lcc")
        },
        "unit_ids": loaded.unit_ids,
        "period_values": loaded.period_values,
    }
    dataio.write_json(out / "result.json", payload)
    (out / "report.txt").write_text(_estimate_report(result, names, levels))
    dataio.write_json(out / "manifest.json", dataio.build_manifest(cfg, cfg.get("seed"), {"mode": "estimate"}))
    print((out / "report.txt").read_text())
    return 0


def _run_montecarlo(cfg: dict) -> int:
    dgp_cfg = _dgp_from_config({**cfg.get("dgp", {}), "seed": cfg.get("seed", cfg.get("dgp", {}).get("seed", 0))})
    mc = MCConfig(
        dgp=dgp_cfg,
        replications=int(cfg.get("reps", 300)),
        levels=tuple(cfg.get("levels", (0.95, 0.90))),
        parallelism=int(cfg.get("parallelism", 1)),
        bias_correction=bool(cfg.get("bias_correction", True)),
        robust=bool(cfg.get("robust", False)),
        rho_bounds=tuple(cfg.get("rho_bounds", (-0.995, 0.995))),
    )
    report = run_mc(mc)
    out = _out_dir(cfg)
    dataio.write_json(out / "result.json", report.to_dict())
    table = report.text_table()
    if mc.bias_correction:
        ratios = compare_correction(report)
        table += "\nbias ratios (raw/corrected): " + np.array2string(
            ratios["bias_ratio"], precision=2, floatmode="fixed"
        ) + "\n"
    (out / "report.txt").write_text(table)
    summary = export_standardized(report, out / "standardized.csv")
    dataio.write_json(out / "standardized_summary.json", summary)
    dataio.write_json(out / "manifest.json", dataio.build_manifest(cfg, dgp_cfg.seed, {"mode": "montecarlo", "p": dgp_cfg.p}))
    print(table)
    return 0


def _run_weights(cfg: dict) -> int:
    out = _out_dir(cfg)
    spec = cfg.get("weights", {})
    if spec.get("rook"):
        rows, cols = (int(v) for v in spec["rook"])
        adjacency = build_rook_adjacency(rows, cols)
    elif spec.get("distance_km") is not None:
        if "coords" not in cfg:
            raise ConfigError("weights mode with distance_km needs a 'coords' csv (lat, lon columns)")
        import pandas as pd

        df = pd.read_csv(cfg["coords"])
        for col in ("lat", "lon"):
            if col not in df.columns:
                raise ConfigError(f"coords file missing column {col!r}")
        adjacency = build_distance_band(df[["lat", "lon"]].to_numpy(), float(spec["distance_km"]))
    elif spec.get("edge_list"):
        adjacency = load_edge_list(spec["edge_list"])
    else:
        raise ConfigError("weights mode needs one of rook / distance_km / edge_list")
    save_edge_list(adjacency, out / "edge_list.txt")
    degrees = adjacency.degrees()
    report = {
        "n_nodes": adjacency.N,
        "n_edges": int(adjacency.A.nnz // 2),
        "isolated": int(np.sum(degrees == 0)),
        "degree_min": int(degrees.min()) if degrees.size else 0,
        "degree_max": int(degrees.max()) if degrees.size else 0,
        "degree_mean": float(degrees.mean()) if degrees.size else 0.0,
    }
    dataio.write_json(out / "weights_report.json", report)
    dataio.write_json(out / "manifest.json", dataio.build_manifest(cfg, cfg.get("seed"), {"mode": "weights"}))
    print(f"wrote {out/'edge_list.txt'}: {report['n_nodes']} nodes, {report['n_edges']} edges")
    return 0


_MODES = {
    "simulate": _run_simulate,
    "estimate": _run_estimate,
    "montecarlo": _run_montecarlo,
    "weights": _run_weights,
}


def run(cfg: dict) -> int:
    """Dispatch a merged configuration dict to its mode handler."""
    mode = cfg.get("mode")
    if mode not in _MODES:
        raise ConfigError(f"mode must be one of {sorted(_MODES)}, got {mode!r}")
    return _MODES[mode](cfg)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=str, help="JSON config file")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", type=str, help="output directory")
    p.add_argument("--rho-bounds", type=str, help="rho interval as 'a,b'")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="netpanel",
        description="Dynamic network panels with unit entry/exit: simulate, estimate, replicate.",
    )
    sub = parser.add_subparsers(dest="mode", required=True)

    p_sim = sub.add_parser("simulate", help="draw one synthetic panel and write it as CSV")
    _add_common(p_sim)

    p_est = sub.add_parser("estimate", help="fit the model to a panel CSV")
    _add_common(p_est)
    p_est.add_argument("--data", type=str, help="panel csv path")
    p_est.add_argument("--covariates", type=str, help="comma-separated covariate columns")
    p_est.add_argument("--robust", action="store_true", default=None, help="moment-robust standard errors")
    p_est.add_argument("--log-y", action="store_true", default=None, help="log-transform the outcome")
    p_est.add_argument("--distance-km", type=float, help="distance-band threshold in km")
    p_est.add_argument("--rook", type=str, help="rook grid as 'RxC'")
    p_est.add_argument("--edge-list", type=str, help="adjacency edge-list path")

    p_mc = sub.add_parser("montecarlo", help="run a replication study")
    _add_common(p_mc)
    p_mc.add_argument("--reps", type=int, help="number of replications")
    p_mc.add_argument("--parallelism", type=int, help="worker processes")
    p_mc.add_argument("--robust", action="store_true", default=None)

    p_w = sub.add_parser("weights", help="build and export an adjacency")
    _add_common(p_w)
    p_w.add_argument("--coords", type=str, help="csv with lat/lon columns")
    p_w.add_argument("--distance-km", type=float)
    p_w.add_argument("--rook", type=str, help="rook grid as 'RxC'")
    p_w.add_argument("--edge-list", type=str)

    args = parser.parse_args(argv)
    cfg = dataio.read_json(args.config) if args.config else {}
    cfg["mode"] = args.mode

    # flags win over the config file
    if args.seed is not None:
        cfg["seed"] = args.seed
        cfg.setdefault("dgp", {})
        cfg["dgp"]["seed"] = args.seed
    if args.out is not None:
        cfg["out"] = args.out
    if args.rho_bounds is not None:
        lo, hi = (float(v) for v in args.rho_bounds.split(","))
        cfg["rho_bounds"] = (lo, hi)
    if getattr(args, "data", None) is not None:
        cfg["data"] = args.data
    if getattr(args, "covariates", None) is not None:
        cfg["covariates"] = [c for c in args.covariates.split(",") if c]
    if getattr(args, "robust", None) is not None:
        cfg["robust"] = True
    if getattr(args, "log_y", None) is not None:
        cfg["log_y"] = True
    if getattr(args, "reps", None) is not None:
        cfg["reps"] = args.reps
    if getattr(args, "parallelism", None) is not None:
        cfg["parallelism"] = args.parallelism
    if getattr(args, "coords", None) is not None:
        cfg["coords"] = args.coords
    for key in ("distance_km", "rook", "edge_list"):
        val = getattr(args, key, None)
        if val is not None:
            cfg.setdefault("weights", {})
            if key == "rook":
                rows, cols = (int(v) for v in val.lower().split("x"))
                cfg["weights"]["rook"] = [rows, cols]
            else:
                cfg["weights"][key] = val

    try:
        return run(cfg)
    except NetPanelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
