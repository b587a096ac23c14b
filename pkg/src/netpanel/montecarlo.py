"""Replication harness: bias / SD / RMSE / coverage tables and
standardized-estimate exports over repeated simulate-fit cycles.

Replications are embarrassingly parallel; every replication derives its
random streams from (seed, replication, purpose), so reports are identical
for any degree of parallelism and any execution order.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dgp import DgpConfig, simulate_dataset
from .estimator import FitOptions, fit
from .exceptions import NetPanelError, TooManyFailures
from .inference import z_quantile
from .panel import Theta

__all__ = ["MCConfig", "MCReport", "run_mc", "compare_correction", "export_standardized"]

STAT_ROWS = ("BIAS", "SD", "RMSE", "95%CP", "90%CP")


@dataclass
class MCConfig:
    """Monte Carlo experiment configuration."""

    dgp: DgpConfig
    replications: int = 300
    levels: tuple = (0.95, 0.90)
    parallelism: int = 1
    bias_correction: bool = True
    robust: bool = False
    rho_bounds: tuple = (-0.995, 0.995)
    grid_points: int = 41

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be positive")

    def fit_options(self) -> FitOptions:
        return FitOptions(
            rho_bounds=self.rho_bounds,
            grid_points=self.grid_points,
            bias_correction=self.bias_correction,
            robust=self.robust,
        )


@dataclass
class MCReport:
    """Aggregated Monte Carlo results.

    ``stats`` maps variant ("raw", "corrected") -> statistic -> array over
    parameters; ``standardized`` maps variant -> (R_ok, p) array of
    (estimate - truth) / SE draws.
    """

    config_summary: dict
    param_names: list
    theta0: np.ndarray
    replications: int
    failures: list
    stats: dict
    standardized: dict
    per_rep: dict
    flags: dict = field(default_factory=dict)

    @property
    def n_ok(self) -> int:
        return self.replications - len(self.failures)

    def to_dict(self) -> dict:
        """JSON-serializable view of the report."""
        return {
            "config": self.config_summary,
            "param_names": self.param_names,
            "theta0": self.theta0.tolist(),
            "replications": self.replications,
            "failures": self.failures,
            "flags": self.flags,
            "stats": {
                variant: {k: np.asarray(v).tolist() for k, v in rows.items()}
                for variant, rows in self.stats.items()
            },
        }

    def to_json(self, indent=2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    def text_table(self) -> str:
        """Aligned text table, one block per estimator variant."""
        width = max(9, max(len(nm) for nm in self.param_names) + 2)
        head = " " * 8 + "".join(nm.rjust(width) for nm in self.param_names)
        lines = [
            f"replications: {self.replications} (failed: {len(self.failures)})",
            f"theta0:  {np.array2string(self.theta0, precision=4, floatmode='fixed')}",
            "",
        ]
        titles = {"raw": "Before bias correction", "corrected": "After bias correction"}
        for variant in ("raw", "corrected"):
            if variant not in self.stats:
                continue
            lines.append(titles[variant])
            lines.append(head)
            for stat in STAT_ROWS:
                if stat not in self.stats[variant]:
                    continue
                row = self.stats[variant][stat]
                cells = "".join(
                    (f"{x:.4f}" if np.isfinite(x) else "   --").rjust(width) for x in row
                )
                lines.append(stat.ljust(8) + cells)
            lines.append("")
        return "\n".join(lines)


def _replication(config: MCConfig, rep: int) -> dict:
    try:
        layout, network, data, _ = simulate_dataset(config.dgp, rep)
        result = fit(layout, network, data, config.fit_options())
        return {
            "rep": rep,
            "raw": result.theta_hat.to_vector(),
            "corrected": result.theta_bc.to_vector(),
            "se": result.se,
            "boundary": bool(result.diagnostics["boundary"]),
            "dropped": list(result.diagnostics["dropped_columns"]),
        }
    except (NetPanelError, np.linalg.LinAlgError, MemoryError) as exc:
        return {"rep": rep, "error": f"{type(exc).__name__}: {exc}"}


def _replication_star(args):
    return _replication(*args)


def run_mc(config: MCConfig) -> MCReport:
    """Run the full experiment and aggregate bias/SD/RMSE/coverage.

    Failed replications (singular designs, degenerate draws) are excluded
    from the aggregates and recorded; more than 5% failures aborts.
    """
    config.dgp.resolve_p()  # calibrate once; all replications share p
    reps = range(config.replications)
    if config.parallelism > 1:
        with ProcessPoolExecutor(max_workers=config.parallelism) as pool:
            results = list(pool.map(_replication_star, [(config, r) for r in reps], chunksize=4))
    else:
        results = [_replication(config, r) for r in reps]
    results.sort(key=lambda r: r["rep"])

    failures = [{"rep": r["rep"], "error": r["error"]} for r in results if "error" in r]
    if len(failures) > 0.05 * config.replications:
        raise TooManyFailures(len(failures), config.replications)
    ok = [r for r in results if "error" not in r]

    theta0 = config.dgp.theta0.to_vector()
    names = Theta.names(config.dgp.theta0.k)
    est = {v: np.array([r[v] for r in ok]) for v in ("raw", "corrected")}
    se = np.array([r["se"] for r in ok])

    flags = {
        "boundary_count": int(sum(r["boundary"] for r in ok)),
        "dropped_any": sorted({c for r in ok for c in r["dropped"]}),
        "sd_undefined": len(ok) < 2,
    }

    stats, standardized = {}, {}
    variants = ("raw", "corrected") if config.bias_correction else ("raw",)
    for variant in variants:
        e = est[variant]
        err = e - theta0[None, :]
        bias = np.nanmean(err, axis=0)
        sd = np.nanstd(e, axis=0, ddof=1) if len(ok) > 1 else np.zeros(e.shape[1])
        rmse = np.sqrt(np.nanmean(err**2, axis=0))
        rows = {"BIAS": bias, "SD": sd, "RMSE": rmse}
        for level in config.levels:
            z = z_quantile(level)
            covered = np.abs(err) <= z * se
            rows[f"{level:.0%}CP"] = np.nanmean(
                np.where(np.isfinite(err), covered, np.nan), axis=0
            )
        stats[variant] = rows
        with np.errstate(divide="ignore", invalid="ignore"):
            standardized[variant] = err / se
    per_rep = {"estimates": est, "se": se, "reps": [r["rep"] for r in ok]}

    return MCReport(
        config_summary=_summarize_config(config),
        param_names=names,
        theta0=theta0,
        replications=config.replications,
        failures=failures,
        stats=stats,
        standardized=standardized,
        per_rep=per_rep,
        flags=flags,
    )


def _summarize_config(config: MCConfig) -> dict:
    dgp = config.dgp
    return {
        "N": dgp.N,
        "T": dgp.T,
        "p": dgp.p,
        "target_up": dgp.target_up,
        "burn_in": dgp.burn_in,
        "error_dist": dgp.error_dist,
        "seed": dgp.seed,
        "rook_dims": list(dgp.rook_dims),
        "theta0": dgp.theta0.to_vector().tolist(),
        "replications": config.replications,
        "levels": list(config.levels),
        "bias_correction": config.bias_correction,
        "robust": config.robust,
        "rho_bounds": list(config.rho_bounds),
    }


def compare_correction(report: MCReport) -> dict:
    """Per-parameter |bias| and RMSE ratios of raw over corrected."""
    if "corrected" not in report.stats:
        raise ValueError("report has no corrected variant")
    raw, bc = report.stats["raw"], report.stats["corrected"]
    with np.errstate(divide="ignore", invalid="ignore"):
        bias_ratio = np.abs(raw["BIAS"]) / np.abs(bc["BIAS"])
        rmse_ratio = raw["RMSE"] / bc["RMSE"]
    return {
        "param_names": report.param_names,
        "bias_ratio": bias_ratio,
        "rmse_ratio": rmse_ratio,
    }


def export_standardized(report: MCReport, path) -> dict:
    """Write standardized draws to CSV, one column per variant/parameter.

    Returns a summary dict of per-column sample means and variances (they
    approach 0 and 1 when the asymptotic approximation is accurate).
    """
    cols = []
    header = []
    for variant, draws in report.standardized.items():
        for j, nm in enumerate(report.param_names):
            header.append(f"{variant}_{nm}")
            cols.append(draws[:, j])
    table = np.column_stack(cols) if cols else np.empty((0, 0))
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in table:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    summary = {}
    for name, col in zip(header, cols):
        finite = col[np.isfinite(col)]
        summary[name] = {
            "mean": float(finite.mean()) if finite.size else float("nan"),
            "variance": float(finite.var(ddof=1)) if finite.size > 1 else float("nan"),
            "count": int(finite.size),
        }
    return summary
