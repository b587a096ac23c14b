"""QMLE fitting and incidental-parameter bias correction.

The estimator maximizes the profile criterion in rho (coarse grid plus
golden-section refinement), recovers the remaining coefficients in closed
form, and computes a one-step bias correction

    theta_bc = theta_hat - H^(-1) b(theta_hat),

where H = -(1/n) d2 L / d theta d theta' and b(theta) is the per-observation
expected score (1/n) E_theta[score], evaluated analytically under the model
at theta, conditional on the period-0 outcomes and the observed design.
Concentrating out the N unit effects makes the expected score nonzero at
the truth (the incidental-parameters effect, of order 1/T), which is what
this correction removes.

The expectation reduces to traces of per-period response operators: with
S_t = I - rho W_t and B_t = S_t^(-1)(lam C1_t + nu C2_t), the response of
Y_t to the period-s shock is Phi_{t,s} = B_t B_{t-1} ... B_{s+1} S_s^(-1),
and every term of E[score] is a trace of Phi blocks against the
fixed-effects projector.  A single backward sweep accumulates all of them
with O(T) linear solves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import inference
from .exceptions import NonFiniteEntry, SingularHessian
from .likelihood import ConcentratedLikelihood
from .operators import ModelOperators
from .panel import PanelData, PanelLayout, Theta, unbalancedness, within_project
from .weights import TimeVaryingNetwork

__all__ = [
    "FitOptions",
    "EstimationResult",
    "fit",
    "hessian",
    "expected_score_bias",
    "bias_correct",
    "bootstrap_expected_score",
    "ParamSpace",
]


@dataclass
class FitOptions:
    """Tuning knobs for :func:`fit`.

    ``robust`` switches on the sandwich covariance built from exact
    linear-quadratic moments with estimated third/fourth moments; the
    default covariance is the inverse Hessian.
    """

    rho_bounds: tuple = (-0.995, 0.995)
    grid_points: int = 41
    rho_tol: float = 1e-9
    bias_correction: bool = True
    correction_iterations: int = 1
    robust: bool = False
    logdet_method: str = "auto"
    dense_limit: int = 1200
    robust_n_limit: int = 6000
    hessian_step: float = 1e-4
    hessian_step_min: float = 1e-5


class ParamSpace:
    """Mapping between the full parameter vector and estimated entries.

    Full ordering is (rho, lambda, nu, gamma, beta', sigma2).  Entries are
    inactive when a regressor column is identically zero after the within
    projection (e.g. no entrants) or when the spatial lag is absent.
    """

    def __init__(self, names, active):
        self.names = list(names)
        self.active = np.asarray(active, dtype=bool)
        self.size = len(self.names)

    @property
    def active_names(self):
        return [nm for nm, a in zip(self.names, self.active) if a]

    def compress(self, full) -> np.ndarray:
        return np.asarray(full, dtype=float)[self.active]

    def expand(self, act, fill=np.nan) -> np.ndarray:
        out = np.full(self.size, fill, dtype=float)
        out[self.active] = act
        return out

    def expand_matrix(self, act, fill=np.nan) -> np.ndarray:
        out = np.full((self.size, self.size), fill, dtype=float)
        idx = np.flatnonzero(self.active)
        out[np.ix_(idx, idx)] = act
        return out

    @staticmethod
    def from_workspace(cl: ConcentratedLikelihood) -> "ParamSpace":
        names = ["rho", *cl.regressors.names, "sigma2"]
        active = np.concatenate(
            ([cl.rho_identified], cl.active_columns, [True])
        )
        return ParamSpace(names, active)


@dataclass
class EstimationResult:
    """Raw and bias-corrected estimates with covariance and diagnostics.

    ``vcov_raw``/``vcov_robust`` hold the asymptotic covariance of the
    scaled estimator; per-coordinate standard errors of the estimates are
    ``sqrt(diag(vcov)/n)``, exposed as ``se_raw``/``se_robust``.  Entries
    for dropped parameters are NaN throughout.
    """

    theta_hat: Theta
    theta_bc: Theta
    alpha_hat: np.ndarray
    hessian: np.ndarray
    vcov_raw: np.ndarray
    vcov_robust: np.ndarray | None
    loglik: float
    bias_vector: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.diagnostics["n"]

    @property
    def param_names(self):
        return self.diagnostics["param_names"]

    @property
    def se_raw(self) -> np.ndarray:
        return np.sqrt(np.diag(self.vcov_raw) / self.n)

    @property
    def se_robust(self) -> np.ndarray | None:
        if self.vcov_robust is None:
            return None
        return np.sqrt(np.diag(self.vcov_robust) / self.n)

    @property
    def se(self) -> np.ndarray:
        se_rob = self.se_robust
        return se_rob if se_rob is not None else self.se_raw


def expected_score_bias(ops: ModelOperators, theta: Theta, n_delta: int) -> np.ndarray:
    """Per-observation expected score b(theta) under the model at theta.

    Conditional on period-0 outcomes and the nonstochastic design, the
    regressor block decomposes into a deterministic part plus linear maps
    of past shocks.  Deterministic parts are uncorrelated with the error
    and contribute nothing; the stochastic lag channels contribute trace
    terms through the fixed-effects projector P:

    * lag columns (j = 1, 2):   E[Z_j' Q V] = -sigma2 * tr(L_j' P)
    * spatial-lag coordinate:   E[score_rho] = -tr(P G) - tr(L_delta' G' P)
    * variance coordinate:      E[score_sigma2] = -N_eff / (2 sigma2)

    where L_j stacks the blocks C_j,t Phi_{t-1,s}.  Sums run over the data
    horizon only: shocks before period 1 are independent of the
    estimation-sample errors, so no truncation parameter appears.

    Returns the full-length vector (rho, lambda, nu, gamma, beta', sigma2);
    the gamma and beta components are exactly zero.
    """
    layout = ops.layout
    T, N, n = layout.T, layout.N, layout.n
    inv_counts = np.divide(
        1.0,
        layout.obs_counts,
        out=np.zeros(N, dtype=float),
        where=layout.obs_counts > 0,
    )

    tr_pg = 0.0
    for t in range(1, T + 1):
        tr_pg += float(ops.g_diag(t) @ inv_counts[layout.ids(t)])

    # Backward sweep over three trace families: the two lag channels
    # against P, and the delta-weighted channel against G'P.
    totals = np.zeros(3)
    R = None
    for s in range(T - 1, 0, -1):
        t = s + 1
        ids_t = layout.ids(t)
        w = inv_counts[ids_t]
        n_s = layout.period_counts[s]
        U = np.zeros((n_s, 3 * N))
        U[:, ids_t] = (ops.C1[t].T.multiply(w)).toarray()
        U[:, N + ids_t] = (ops.C2[t].T.multiply(w)).toarray()
        g_cols = ops.g_dense(t).T * w[None, :]  # columns of G_t' scaled by 1/T_i
        U[:, 2 * N + ids_t] = ops.lag_operator(t).T @ g_cols
        if R is None:
            R = U
        else:
            R = U + ops.lag_operator(t).T @ ops.solve_T(t, R)
        ids_s = layout.ids(s)
        sel = np.concatenate([ids_s, N + ids_s, 2 * N + ids_s])
        r_sel = R[:, sel].reshape(n_s, 3, ids_s.size)
        s_inv = ops.s_inv(s)
        for m in range(3):
            totals[m] += float(np.einsum("rc,rc->", s_inv, r_sel[:, m, :]))

    b = np.zeros(n_delta + 2)
    b[0] = -(tr_pg + totals[2]) / n
    b[1] = -totals[0] / n
    b[2] = -totals[1] / n
    b[-1] = -layout.n_effective_units / (2.0 * theta.sigma2 * n)
    return b


def hessian(
    cl: ConcentratedLikelihood,
    theta: Theta,
    space: ParamSpace,
    step: float = 1e-4,
    step_min: float = 1e-5,
):
    """H = -(1/n) d2 L^c / d theta d theta' by central differences of the score.

    Per-coordinate steps are ``max(step_min, step * |theta_j|)``.  Returns
    ``(H_active, symmetry_gap)`` where the gap is the max absolute
    asymmetry before symmetrization (a derivative-accuracy diagnostic).
    """
    v0 = theta.to_vector()
    idx = np.flatnonzero(space.active)
    p = idx.size
    jac = np.empty((p, p))
    for col, j in enumerate(idx):
        h = max(step_min, step * abs(v0[j]))
        vp, vm = v0.copy(), v0.copy()
        vp[j] += h
        vm[j] -= h
        s_plus = space.compress(cl.score(Theta.from_vector(vp)))
        s_minus = space.compress(cl.score(Theta.from_vector(vm)))
        jac[:, col] = (s_plus - s_minus) / (2.0 * h)
    if not np.isfinite(jac).all():
        raise NonFiniteEntry("non-finite entry in the numerical Hessian")
    gap = float(np.max(np.abs(jac - jac.T))) if p else 0.0
    H = -0.5 * (jac + jac.T) / cl.n
    return H, gap


def bias_correct(theta_vec_active: np.ndarray, H_active: np.ndarray, b_active: np.ndarray) -> np.ndarray:
    """One-step corrected parameter vector theta - H^(-1) b."""
    try:
        adjustment = np.linalg.solve(H_active, b_active)
    except np.linalg.LinAlgError as exc:
        raise SingularHessian(str(exc)) from exc
    if not np.isfinite(adjustment).all():
        raise SingularHessian("bias adjustment is non-finite")
    return theta_vec_active - adjustment


def bootstrap_expected_score(
    cl: ConcentratedLikelihood,
    theta: Theta,
    alpha: np.ndarray,
    reps: int,
    rng: np.random.Generator,
):
    """Monte Carlo estimate of b(theta) to cross-check the analytic version.

    Redraws Gaussian errors with variance sigma2, regenerates outcomes
    forward from the observed period-0 cross-section with the exogenous
    parts held fixed, and averages the per-observation score at theta.
    (The expected score depends on the error law only through its first
    two moments, so Gaussian draws are fully general here.)

    Returns ``(mean, mc_se)`` over the full parameter ordering.
    """
    if reps < 100:
        raise ValueError("use at least 100 bootstrap replications")
    layout, network, data = cl.layout, cl.network, cl.data
    gamma = theta.gamma if np.isfinite(theta.gamma) else 0.0
    lam = theta.lam if np.isfinite(theta.lam) else 0.0
    nu = theta.nu if np.isfinite(theta.nu) else 0.0
    sigma = np.sqrt(theta.sigma2)
    alpha_fill = np.nan_to_num(alpha, nan=0.0)
    ops = ModelOperators(layout, network, theta.rho, lam, nu)
    tr_g = cl.logdet.trace_g(theta.rho)
    delta_zeroed = np.nan_to_num(theta.delta, nan=0.0)

    draws = np.empty((reps, cl.n_delta + 2))
    for r in range(reps):
        y = [None] * (layout.T + 1)
        y[0] = data.Y[0]
        z_rows = []
        wy_rows = []
        for t in range(1, layout.T + 1):
            ids_t = layout.ids(t)
            f = layout.newly_listed(t)
            lag_net = network.M[t] @ y[t - 1] if y[t - 1].size else np.zeros(ids_t.size)
            lag_own = np.zeros(ids_t.size)
            loc_t, loc_prev = layout.carry_pairs(t)
            lag_own[loc_t] = y[t - 1][loc_prev]
            v = sigma * rng.standard_normal(ids_t.size)
            rhs = (
                lam * (1.0 - f) * lag_net
                + nu * lag_own
                + gamma * f
                + data.X[t] @ theta.beta
                + alpha_fill[ids_t]
                + v
            )
            y[t] = ops.solve(t, rhs)
            z_rows.append(np.column_stack([(1.0 - f) * lag_net, lag_own, f, data.X[t]]))
            wy_rows.append(network.W[t] @ y[t])
        Z = np.vstack(z_rows)
        wy = np.concatenate(wy_rows)
        y_stack = np.concatenate(y[1:])
        resid = within_project(y_stack - theta.rho * wy - Z @ delta_zeroed, layout)
        s = np.empty(cl.n_delta + 2)
        s[0] = -tr_g + (wy @ resid) / theta.sigma2
        s[1:-1] = (Z.T @ resid) / theta.sigma2
        s[-1] = -0.5 * cl.n / theta.sigma2 + 0.5 * (resid @ resid) / theta.sigma2**2
        draws[r] = s / cl.n
    mean = draws.mean(axis=0)
    mc_se = draws.std(axis=0, ddof=1) / np.sqrt(reps)
    return mean, mc_se


def fit(
    layout: PanelLayout,
    network: TimeVaryingNetwork,
    data: PanelData,
    options: FitOptions | None = None,
) -> EstimationResult:
    """Estimate the model, correct the incidental-parameter bias, and
    assemble covariance matrices.

    Steps: profile rho over its admissible interval (grid plus
    golden-section, interval below ``rho_tol``); recover delta, sigma2 and
    the fixed effects in closed form; Hessian by central differences of
    the analytic score; one-step expected-score bias correction; inverse
    Hessian covariance and, optionally, the moment-robust sandwich.
    """
    opts = options or FitOptions()
    cl = ConcentratedLikelihood(
        layout,
        network,
        data,
        rho_bounds=opts.rho_bounds,
        logdet_method=opts.logdet_method,
    )
    space = ParamSpace.from_workspace(cl)

    rho_hat, opt_info = cl.maximize(grid_points=opts.grid_points, tol=opts.rho_tol)
    delta_hat, sigma2_hat, lcc = cl.profile(rho_hat)
    theta_hat = Theta(
        rho=rho_hat if cl.rho_identified else 0.0,
        lam=delta_hat[0],
        nu=delta_hat[1],
        gamma=delta_hat[2],
        beta=delta_hat[3:],
        sigma2=sigma2_hat,
    )
    alpha_hat = cl.recover_alpha(rho_hat, delta_hat)
    resid = cl.residuals(rho_hat, delta_hat)

    H_act, sym_gap = hessian(
        cl, theta_hat, space, step=opts.hessian_step, step_min=opts.hessian_step_min
    )
    score_at_hat = space.compress(cl.score(theta_hat))

    theta_vec = theta_hat.to_vector()
    bias_full = np.zeros(space.size)
    corrections = []
    if opts.bias_correction:
        current = theta_vec.copy()
        for _ in range(max(1, opts.correction_iterations)):
            cur_theta = Theta.from_vector(np.where(np.isfinite(current), current, theta_vec))
            ops = ModelOperators(
                layout,
                network,
                cur_theta.rho,
                cur_theta.lam,
                cur_theta.nu,
                dense_limit=opts.dense_limit,
            )
            b_full = expected_score_bias(ops, cur_theta, cl.n_delta)
            b_act = space.compress(b_full)
            corrected_act = bias_correct(space.compress(theta_vec), H_act, b_act)
            corrections.append(corrected_act)
            current = space.expand(corrected_act)
            current[~space.active] = theta_vec[~space.active]
        theta_bc_vec = space.expand(corrections[-1])
        # keep dropped coordinates as in the raw estimate (NaN)
        theta_bc_vec[~space.active] = theta_vec[~space.active]
        bias_full = space.expand(corrections[-1] - space.compress(theta_vec), fill=0.0)
        if theta_bc_vec[-1] <= 0:
            theta_bc_vec[-1] = theta_vec[-1]  # refuse a negative corrected variance
        theta_bc = Theta.from_vector(theta_bc_vec)
    else:
        theta_bc = Theta.from_vector(theta_vec.copy())

    try:
        vcov_act = np.linalg.inv(H_act)
    except np.linalg.LinAlgError as exc:
        raise SingularHessian(str(exc)) from exc
    vcov_act = 0.5 * (vcov_act + vcov_act.T)
    vcov_raw = space.expand_matrix(vcov_act)

    moments = inference.residual_moments(resid, layout, int(cl.active_columns.sum()))
    vcov_robust = None
    if opts.robust:
        psi = inference.score_variance(
            cl,
            theta_hat,
            moments,
            alpha_hat,
            space,
            dense_limit=opts.dense_limit,
            n_limit=opts.robust_n_limit,
        )
        report = inference.sandwich_vcov(H_act, psi, cl.n, space.active_names)
        vcov_robust = space.expand_matrix(report.vcov)

    diagnostics = {
        "n": cl.n,
        "param_names": space.names,
        "active_params": space.active.copy(),
        "dropped_columns": cl.dropped_columns,
        "rho_identified": cl.rho_identified,
        "boundary": opt_info["boundary"],
        "grid_rho": opt_info["grid_rho"],
        "grid_lcc": opt_info["grid_lcc"],
        "score_sup_norm": float(np.max(np.abs(score_at_hat))) if score_at_hat.size else 0.0,
        "hessian_symmetry_gap": sym_gap,
        "coverage_share": layout.coverage,
        "unbalancedness": unbalancedness(layout),
        "n_effective_units": layout.n_effective_units,
        "logdet_method": cl.logdet.method,
        "zero_lag_network_rows": _count_zero_lag_rows(cl),
        "residual_moments": moments.as_dict(),
        "layout_checks": layout.assumption_diagnostics(),
        "correction_iterations": len(corrections),
    }

    return EstimationResult(
        theta_hat=theta_hat,
        theta_bc=theta_bc,
        alpha_hat=alpha_hat,
        hessian=space.expand_matrix(H_act),
        vcov_raw=vcov_raw,
        vcov_robust=vcov_robust,
        loglik=float(lcc),
        bias_vector=bias_full,
        diagnostics=diagnostics,
    )


def _count_zero_lag_rows(cl: ConcentratedLikelihood) -> int:
    """Non-entrant rows whose lagged-network regressor is structurally zero."""
    layout, network = cl.layout, cl.network
    count = 0
    for t in range(1, layout.T + 1):
        f = layout.newly_listed(t)
        row_sums = np.asarray(network.M[t].sum(axis=1)).ravel()
        count += int(np.sum((f == 0) & (row_sums == 0)))
    return count
