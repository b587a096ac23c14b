"""Dynamic network panels with unit entry and exit.

Simulation, quasi-maximum-likelihood estimation, incidental-parameter bias
correction and inference for panels where units join and leave over time
and outcomes propagate through a time-varying network.
"""

from .dgp import (
    DgpConfig,
    calibrate_p,
    draw_errors,
    draw_windows,
    expected_unbalancedness,
    gen_exogenous,
    simulate,
    simulate_dataset,
)
from .estimator import (
    EstimationResult,
    FitOptions,
    ParamSpace,
    bias_correct,
    bootstrap_expected_score,
    expected_score_bias,
    fit,
    hessian,
)
from .inference import (
    ResidualMoments,
    VcovReport,
    confidence_intervals,
    lq_cross_moments,
    lq_form_moments,
    residual_moments,
    sandwich_vcov,
    score_variance,
)
from .likelihood import (
    ConcentratedLikelihood,
    LogDetEngine,
    RegressorBlocks,
    build_regressors,
)
from .montecarlo import MCConfig, MCReport, compare_correction, export_standardized, run_mc
from .operators import ModelOperators
from .panel import (
    PanelData,
    PanelLayout,
    Theta,
    build_layout,
    unbalancedness,
    within_project,
)
from .rng import stream
from .weights import (
    Adjacency,
    TimeVaryingNetwork,
    build_distance_band,
    build_network,
    build_rook_adjacency,
    check_spectral_condition,
    load_edge_list,
    save_edge_list,
    slice_row_normalize,
)

__version__ = "0.1.0"

__all__ = [
    "Adjacency",
    "ConcentratedLikelihood",
    "DgpConfig",
    "EstimationResult",
    "FitOptions",
    "LogDetEngine",
    "MCConfig",
    "MCReport",
    "ModelOperators",
    "PanelData",
    "PanelLayout",
    "ParamSpace",
    "RegressorBlocks",
    "ResidualMoments",
    "Theta",
    "TimeVaryingNetwork",
    "VcovReport",
    "bias_correct",
    "bootstrap_expected_score",
    "build_distance_band",
    "build_layout",
    "build_network",
    "build_regressors",
    "build_rook_adjacency",
    "calibrate_p",
    "check_spectral_condition",
    "compare_correction",
    "confidence_intervals",
    "draw_errors",
    "draw_windows",
    "expected_score_bias",
    "expected_unbalancedness",
    "export_standardized",
    "fit",
    "gen_exogenous",
    "hessian",
    "load_edge_list",
    "lq_cross_moments",
    "lq_form_moments",
    "residual_moments",
    "run_mc",
    "sandwich_vcov",
    "save_edge_list",
    "score_variance",
    "simulate",
    "simulate_dataset",
    "slice_row_normalize",
    "stream",
    "unbalancedness",
    "within_project",
]
