"""Moment-based inference: residual moments, linear-quadratic form moments,
robust score variance, sandwich covariance and confidence intervals.

Every component of the concentrated score is, at the generating parameters,
exactly a linear-quadratic form V'BV + c'V in the stacked errors with
explicit kernels.  For i.i.d. errors with moments (sigma2, mu3, mu4) the
mean and (co)variance of such forms are available in closed form, which
gives a finite-sample estimate of the score variance without assuming
normality.  Under normal errors the extra third/fourth-moment terms vanish
and the sandwich collapses to the inverse Hessian.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm as _norm

from .exceptions import ShapeMismatch
from .operators import ModelOperators
from .panel import PanelLayout, Theta, within_project

__all__ = [
    "ResidualMoments",
    "residual_moments",
    "lq_form_moments",
    "lq_cross_moments",
    "score_variance",
    "VcovReport",
    "sandwich_vcov",
    "confidence_intervals",
    "z_quantile",
]

# hard-coded two-sided normal quantiles (6 decimals) for bit-reproducible reports
_Z_TABLE = {0.95: 1.959964, 0.90: 1.644854, 0.99: 2.575829}


def z_quantile(level: float) -> float:
    """Two-sided normal critical value for a confidence level in (0, 1)."""
    if not 0.0 < level < 1.0:
        raise ValueError("confidence level must be in (0, 1)")
    key = round(level, 6)
    if key in _Z_TABLE:
        return _Z_TABLE[key]
    return float(np.round(_norm.ppf(0.5 * (1.0 + level)), 6))


@dataclass(frozen=True)
class ResidualMoments:
    """Second, third and fourth central moments estimated from residuals.

    ``sigma2_hat`` uses the within-projection degrees-of-freedom adjustment
    (divide by n minus effective units minus regressor columns); ``mu3_hat``
    and ``mu4_hat`` are simple plug-ins over the n within-residuals.
    """

    sigma2_hat: float
    mu3_hat: float
    mu4_hat: float

    def as_dict(self) -> dict:
        return {"sigma2": self.sigma2_hat, "mu3": self.mu3_hat, "mu4": self.mu4_hat}


def residual_moments(resid: np.ndarray, layout: PanelLayout, n_regressors: int) -> ResidualMoments:
    """Estimate error moments from within-projected residuals."""
    resid = np.asarray(resid, dtype=float)
    n = resid.size
    dof = max(n - layout.n_effective_units - n_regressors, 1)
    centered = resid - resid.mean()
    sigma2 = float(centered @ centered) / dof
    mu3 = float(np.mean(centered**3))
    mu4 = float(np.mean(centered**4))
    return ResidualMoments(sigma2_hat=sigma2, mu3_hat=mu3, mu4_hat=mu4)


def _as_kernel(B) -> np.ndarray | None:
    if B is None:
        return None
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ShapeMismatch("quadratic kernel must be square")
    return B


def lq_form_moments(B, c, moments: ResidualMoments):
    """Exact mean and variance of V'BV + c'V for i.i.d. errors.

        E   = sigma2 * tr(B)
        Var = sigma4 (tr(BB') + tr(B^2)) + (mu4 - 3 sigma4) sum_i B_ii^2
              + 2 mu3 sum_i B_ii c_i + sigma2 c'c

    ``B`` may be None (purely linear form) and ``c`` may be None (purely
    quadratic form).
    """
    B = _as_kernel(B)
    s2, mu3, mu4 = moments.sigma2_hat, moments.mu3_hat, moments.mu4_hat
    mean = 0.0
    var = 0.0
    if B is not None:
        d = np.diag(B)
        mean += s2 * float(d.sum())
        var += s2**2 * (float(np.sum(B * B)) + float(np.sum(B * B.T)))
        var += (mu4 - 3.0 * s2**2) * float(d @ d)
        if c is not None:
            var += 2.0 * mu3 * float(d @ np.asarray(c, dtype=float))
    if c is not None:
        c = np.asarray(c, dtype=float)
        var += s2 * float(c @ c)
    return mean, var


def lq_cross_moments(B1, c1, B2, c2, moments: ResidualMoments) -> float:
    """Exact covariance of two linear-quadratic forms in the same errors."""
    B1, B2 = _as_kernel(B1), _as_kernel(B2)
    s2, mu3, mu4 = moments.sigma2_hat, moments.mu3_hat, moments.mu4_hat
    cov = 0.0
    if B1 is not None and B2 is not None:
        d1, d2 = np.diag(B1), np.diag(B2)
        cov += s2**2 * (float(np.sum(B1 * B2.T)) + float(np.sum(B1 * B2)))
        cov += (mu4 - 3.0 * s2**2) * float(d1 @ d2)
    if B1 is not None and c2 is not None:
        cov += mu3 * float(np.diag(B1) @ np.asarray(c2, dtype=float))
    if B2 is not None and c1 is not None:
        cov += mu3 * float(np.diag(B2) @ np.asarray(c1, dtype=float))
    if c1 is not None and c2 is not None:
        cov += s2 * float(np.asarray(c1, dtype=float) @ np.asarray(c2, dtype=float))
    return cov


def _fixed_effects_projector(layout: PanelLayout) -> np.ndarray:
    """Dense P = D (D'D)^+ D' over the stacked estimation sample."""
    n = layout.n
    P = np.zeros((n, n))
    order = layout._unit_order
    starts = layout._unit_starts
    counts = layout.obs_counts[layout._units_in_sample]
    bounds = np.append(starts, order.size)
    for u in range(counts.size):
        rows = order[bounds[u] : bounds[u + 1]]
        P[np.ix_(rows, rows)] = 1.0 / counts[u]
    return P


def score_variance(
    cl,
    theta: Theta,
    moments: ResidualMoments,
    alpha: np.ndarray,
    space,
    dense_limit: int = 1200,
    n_limit: int = 6000,
) -> np.ndarray:
    """Estimated per-observation variance of the score at theta.

    Builds the exact linear-quadratic representation of every score
    component under the model at theta (conditional on period-0 outcomes):
    quadratic kernels from the shock-response operators and the
    fixed-effects projector, linear parts from the deterministic outcome
    path.  Returns Var(score)/n on the active parameter set, ordered as in
    ``space``.  Memory is O(n^2); refuses samples larger than ``n_limit``.
    """
    layout, network, data = cl.layout, cl.network, cl.data
    n, T = cl.n, layout.T
    if n > n_limit:
        raise MemoryError(
            f"robust score variance needs dense n x n kernels; n={n} exceeds "
            f"the limit {n_limit} (raise FitOptions.robust_n_limit to override)"
        )
    s2 = theta.sigma2  # kernel scale: the score is evaluated at theta
    lam = theta.lam if np.isfinite(theta.lam) else 0.0
    nu = theta.nu if np.isfinite(theta.nu) else 0.0
    ops = ModelOperators(layout, network, theta.rho, lam, nu, dense_limit=dense_limit)

    rows = [None] + [layout.rows(t) for t in range(1, T + 1)]

    # Shock-response maps of the two lag channels, dense over the stack.
    # cur holds [Phi_{t-1,1} ... Phi_{t-1,t-1}] side by side, so each period
    # needs one sparse multiply per channel and one solve.
    L1 = np.zeros((n, n))
    L2 = np.zeros((n, n))
    cur = None
    for t in range(1, T + 1):
        if cur is not None:
            c1b = ops.C1[t] @ cur
            c2b = ops.C2[t] @ cur
            stop = rows[t].start
            L1[rows[t], :stop] = c1b
            L2[rows[t], :stop] = c2b
            prop = ops.solve(t, lam * c1b + nu * c2b)
            cur = np.hstack([prop, ops.s_inv(t)])
        else:
            cur = ops.s_inv(t).copy()

    # Quadratic kernels, stored untransposed: each entry X with kernel
    # B = X' (X_sig is symmetric, so the convention is uniform).  Keeping
    # the natural row-major orientation makes the trace contractions below
    # single-pass.
    x_rho = lam * L1 + nu * L2
    x_rho[np.diag_indices(n)] += 1.0
    for t in range(1, T + 1):
        x_rho[rows[t], :] = ops.g_dense(t) @ x_rho[rows[t], :]
    X_rho = within_project(x_rho, layout)
    X_rho /= s2
    del x_rho
    X_lam = within_project(L1, layout)
    X_lam /= s2
    del L1
    X_nu = within_project(L2, layout)
    X_nu /= s2
    del L2
    X_sig = -_fixed_effects_projector(layout)
    X_sig[np.diag_indices(n)] += 1.0
    X_sig /= 2.0 * s2**2

    # linear parts from the deterministic outcome path
    ydet = ops.deterministic_outcome(data, theta, alpha)
    wy_det = np.concatenate([network.W[t] @ ydet[t] for t in range(1, T + 1)])
    c_rho = within_project(wy_det, layout) / s2
    zdet_cols = []
    for t in range(1, T + 1):
        f = layout.newly_listed(t)
        lag_net = network.M[t] @ ydet[t - 1] if ydet[t - 1].size else np.zeros(f.size)
        lag_own = np.zeros(f.size)
        loc_t, loc_prev = layout.carry_pairs(t)
        lag_own[loc_t] = ydet[t - 1][loc_prev]
        zdet_cols.append(np.column_stack([(1.0 - f) * lag_net, lag_own, f, data.X[t]]))
    zdet = within_project(np.vstack(zdet_cols), layout) / s2

    kernels = {"rho": X_rho, "lambda": X_lam, "nu": X_nu, "sigma2": X_sig}
    linears = {"rho": c_rho, "sigma2": None}
    for j, name in enumerate(cl.regressors.names):
        kernels.setdefault(name, None)
        linears[name] = zdet[:, j]

    s2e, mu3, mu4 = moments.sigma2_hat, moments.mu3_hat, moments.mu4_hat
    names = space.active_names
    p = len(names)
    psi = np.zeros((p, p))
    diags = {nm: np.diag(X) for nm, X in kernels.items() if X is not None}
    for a in range(p):
        Xa, ca = kernels.get(names[a]), linears.get(names[a])
        for b in range(a, p):
            Xb, cb = kernels.get(names[b]), linears.get(names[b])
            cov = 0.0
            if Xa is not None and Xb is not None:
                # kernels are B = X', so tr(B_a B_b) = <X_a, X_b'> and
                # tr(B_a B_b') = <X_a, X_b>
                cov += s2e**2 * (
                    float(np.einsum("ij,ji->", Xa, Xb)) + float(np.einsum("ij,ij->", Xa, Xb))
                )
                cov += (mu4 - 3.0 * s2e**2) * float(diags[names[a]] @ diags[names[b]])
            if Xa is not None and cb is not None:
                cov += mu3 * float(diags[names[a]] @ cb)
            if Xb is not None and ca is not None:
                cov += mu3 * float(diags[names[b]] @ ca)
            if ca is not None and cb is not None:
                cov += s2e * float(ca @ cb)
            psi[a, b] = psi[b, a] = cov
    return psi / n


@dataclass(frozen=True)
class VcovReport:
    """Sandwich covariance with rate-aware standard errors.

    ``vcov`` is the asymptotic covariance of the scaled estimator
    H^(-1) V H^(-1); dividing its diagonal by the sample size gives the
    squared standard errors in ``se``.  The listing-effect coordinate
    inherits its slower rate automatically through the Hessian.
    """

    vcov: np.ndarray
    se: np.ndarray
    names: tuple
    intervals: dict = field(default_factory=dict)


def sandwich_vcov(
    hessian: np.ndarray,
    score_var: np.ndarray,
    n: int,
    names,
    estimates: np.ndarray | None = None,
    levels=(0.95, 0.90),
) -> VcovReport:
    """H^(-1) V H^(-1) with V the per-observation score variance.

    Passing ``score_var = hessian`` reproduces the Gaussian inverse-Hessian
    covariance exactly.  When ``estimates`` is given, two-sided confidence
    intervals are attached for each level.
    """
    hessian = np.asarray(hessian, dtype=float)
    h_inv = np.linalg.inv(hessian)
    vcov = h_inv @ np.asarray(score_var, dtype=float) @ h_inv
    vcov = 0.5 * (vcov + vcov.T)
    se = np.sqrt(np.clip(np.diag(vcov), 0.0, None) / n)
    intervals = {}
    if estimates is not None:
        intervals = confidence_intervals(np.asarray(estimates, dtype=float), se, levels)
    return VcovReport(vcov=vcov, se=se, names=tuple(names), intervals=intervals)


def confidence_intervals(estimates: np.ndarray, se: np.ndarray, levels=(0.95, 0.90)) -> dict:
    """Normal-theory two-sided intervals, one (lower, upper) pair per level."""
    estimates = np.asarray(estimates, dtype=float)
    se = np.asarray(se, dtype=float)
    if estimates.shape != se.shape:
        raise ShapeMismatch("estimates and standard errors must align")
    out = {}
    for level in levels:
        z = z_quantile(level)
        out[float(level)] = (estimates - z * se, estimates + z * se)
    return out
