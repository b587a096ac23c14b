"""Concentrated Gaussian log-likelihood for the dynamic network panel.

The model for the stacked estimation sample (periods 1..T) is

    Y = rho W Y + Z delta + D alpha + V,

where W is block-diagonal over periods, Z stacks per-period regressor
blocks (lagged-network term, own lag, listing indicator, covariates) and D
selects unit fixed effects.  Concentrating alpha out replaces residuals by
their within-projection Q; concentrating delta and sigma2 as well leaves a
one-dimensional profile criterion in rho,

    Lcc(rho) = -(n/2) (ln 2*pi + 1) - (n/2) ln sigma2_hat(rho) + ln|I - rho W|,

which is what the estimator maximizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import (
    MissingInitialPeriod,
    ShapeMismatch,
    SingularAtRho,
    SingularDesign,
)
from .panel import PanelData, PanelLayout, Theta, unit_means, within_project
from .weights import TimeVaryingNetwork

__all__ = [
    "RegressorBlocks",
    "build_regressors",
    "LogDetEngine",
    "ConcentratedLikelihood",
    "golden_section_max",
]

DELTA_BASE_NAMES = ("lambda", "nu", "gamma")


@dataclass(frozen=True)
class RegressorBlocks:
    """Per-period regressor matrices and their stacked form.

    Columns are ordered (lagged-network term, own lag, listing indicator,
    covariates).  The lagged-network column is zeroed for units in their
    first active period, the own-lag column is zero for units absent in the
    previous period, and the listing column is their 0/1 entry indicator.
    """

    blocks: tuple
    Z: np.ndarray
    names: tuple

    @property
    def n_columns(self) -> int:
        return self.Z.shape[1]


def build_regressors(layout: PanelLayout, network: TimeVaryingNetwork, data: PanelData) -> RegressorBlocks:
    """Assemble Z_t for t = 1..T from outcomes, weights and covariates."""
    if len(data.Y) != layout.T + 1 or data.Y[0].shape[0] != layout.period_counts[0]:
        raise MissingInitialPeriod("period-0 outcomes are required to build lagged regressors")
    blocks = []
    for t in range(1, layout.T + 1):
        n_t = layout.period_counts[t]
        f = layout.newly_listed(t)
        y_prev = data.Y[t - 1]
        lag_net = network.M[t] @ y_prev if y_prev.size else np.zeros(n_t)
        lag_own = np.zeros(n_t)
        loc_t, loc_prev = layout.carry_pairs(t)
        lag_own[loc_t] = y_prev[loc_prev]
        Z_t = np.column_stack([(1.0 - f) * lag_net, lag_own, f, data.X[t]])
        blocks.append(Z_t)
    k = data.k
    beta_names = tuple(f"beta_{j+1}" for j in range(k)) if k != 1 else ("beta",)
    return RegressorBlocks(
        blocks=tuple(blocks),
        Z=np.vstack(blocks),
        names=DELTA_BASE_NAMES + beta_names,
    )


def _symmetric_slice_eigs(W: sp.csr_matrix) -> np.ndarray | None:
    """Real eigenvalues of a row-normalized slice of a symmetric 0/1 adjacency.

    W = diag(1/deg) A with A symmetric binary, so W is similar to the
    symmetric matrix deg^(-1/2) A deg^(-1/2) on the non-isolated block;
    isolated rows contribute zero eigenvalues.  Returns None if W does not
    have that structure.
    """
    n_t = W.shape[0]
    deg = W.getnnz(axis=1)
    if n_t == 0:
        return np.empty(0)
    if W.nnz == 0:
        return np.zeros(n_t)
    recon = W.data * np.repeat(deg, np.diff(W.indptr))
    if np.max(np.abs(recon - 1.0)) > 1e-10:
        return None
    sub = np.nonzero(deg)[0]
    A = (W[sub][:, sub].toarray().T * deg[sub]).T  # recover the binary slice
    if np.max(np.abs(A - A.T)) > 1e-10:
        return None
    d_isqrt = 1.0 / np.sqrt(deg[sub])
    M = A * np.outer(d_isqrt, d_isqrt)
    evals = np.linalg.eigvalsh(M)
    return np.concatenate([evals, np.zeros(n_t - sub.size)])


class LogDetEngine:
    """Evaluate ln|I - rho W_t| summed over estimation periods.

    Two strategies: ``eig`` precomputes the eigenvalues of every W_t once
    (each rho evaluation is then linear in the cross-section sizes) and
    ``lu`` factorizes I - rho W_t per call.  ``auto`` picks ``eig`` for
    cross-sections up to ``size_limit`` and ``lu`` above it.
    """

    def __init__(self, W_list, method: str = "auto", size_limit: int = 1500):
        self.W_list = [sp.csr_matrix(W) for W in W_list]
        max_nt = max((W.shape[0] for W in self.W_list), default=0)
        if method == "auto":
            method = "eig" if max_nt <= size_limit else "lu"
        if method not in ("eig", "lu"):
            raise ValueError(f"unknown log-det method {method!r}")
        self.method = method
        self._eigs = None
        if method == "eig":
            eigs = []
            for W in self.W_list:
                ev = _symmetric_slice_eigs(W)
                if ev is None:
                    ev = np.linalg.eigvals(W.toarray()) if W.shape[0] else np.empty(0)
                eigs.append(ev)
            self._eigs = eigs

    def log_det(self, rho: float) -> float:
        """ln|I - rho W| = sum_t ln|I - rho W_t|."""
        if self.method == "eig":
            total = 0.0
            for ev in self._eigs:
                if ev.size == 0:
                    continue
                factors = np.abs(1.0 - rho * ev)
                if np.any(factors < 1e-300):
                    raise SingularAtRho(rho)
                total += float(np.log(factors).sum())
            return total
        total = 0.0
        for t, W in enumerate(self.W_list):
            n_t = W.shape[0]
            if n_t == 0 or W.nnz == 0:
                continue
            S = (sp.identity(n_t, format="csc") - rho * W.tocsc()).tocsc()
            try:
                lu = spla.splu(S)
            except RuntimeError as exc:
                raise SingularAtRho(rho, t + 1) from exc
            diag = lu.U.diagonal()
            if np.any(np.abs(diag) < 1e-300):
                raise SingularAtRho(rho, t + 1)
            total += float(np.log(np.abs(diag)).sum())
        return total

    def trace_g(self, rho: float) -> float:
        """tr(W (I - rho W)^(-1)) summed over periods (d/d rho of -log_det)."""
        if self.method == "eig":
            total = 0.0
            for ev in self._eigs:
                if ev.size == 0:
                    continue
                denom = 1.0 - rho * ev
                if np.any(np.abs(denom) < 1e-300):
                    raise SingularAtRho(rho)
                total += float(np.real(ev / denom).sum())
            return total
        total = 0.0
        for t, W in enumerate(self.W_list):
            n_t = W.shape[0]
            if n_t == 0 or W.nnz == 0:
                continue
            S = (sp.identity(n_t, format="csc") - rho * W.tocsc()).tocsc()
            try:
                lu = spla.splu(S)
            except RuntimeError as exc:
                raise SingularAtRho(rho, t + 1) from exc
            s_inv = lu.solve(np.eye(n_t))
            total += float(W.multiply(s_inv.T).sum())
        return total


def golden_section_max(f, lo: float, hi: float, tol: float = 1e-9):
    """Maximize a unimodal scalar function on [lo, hi] by golden section.

    Returns ``(x, f(x))`` once the bracketing interval is shorter than
    ``tol``.  Deterministic: no randomness, no early stopping heuristics.
    """
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = float(lo), float(hi)
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


class ConcentratedLikelihood:
    """Workspace for the concentrated likelihood and its derivatives.

    Builds and caches the stacked regressors, the spatially lagged
    outcome, and their within-projections, so that profiling delta and
    sigma2 at each rho costs two small linear solves.

    Exactly-zero within-projected regressor columns (e.g. the listing
    indicator when no unit enters after period 1) are dropped and recorded
    in ``dropped_columns``; the remaining cross-product must be well
    conditioned or ``SingularDesign`` is raised.
    """

    def __init__(
        self,
        layout: PanelLayout,
        network: TimeVaryingNetwork,
        data: PanelData,
        rho_bounds=(-0.995, 0.995),
        logdet_method: str = "auto",
        rcond_tol: float = 1e-12,
    ):
        self.layout = layout
        self.network = network
        self.data = data
        self.rho_bounds = (float(rho_bounds[0]), float(rho_bounds[1]))
        if not self.rho_bounds[0] < self.rho_bounds[1]:
            raise ValueError("rho bounds must be an increasing pair")

        self.regressors = build_regressors(layout, network, data)
        self.Z = self.regressors.Z
        self.y = data.stacked_y(layout)
        self.Wy = np.concatenate(
            [network.W[t] @ data.Y[t] for t in range(1, layout.T + 1)]
        )
        self.n = layout.n

        self.Qy = within_project(self.y, layout)
        self.QWy = within_project(self.Wy, layout)
        self.QZ = within_project(self.Z, layout)

        col_scale = 1.0 + np.linalg.norm(self.Z, axis=0)
        qnorm = np.linalg.norm(self.QZ, axis=0)
        self.active_columns = qnorm > 1e-13 * col_scale
        self.dropped_columns = tuple(
            name for name, keep in zip(self.regressors.names, self.active_columns) if not keep
        )
        QZa = self.QZ[:, self.active_columns]
        self._ztz = QZa.T @ QZa
        if QZa.shape[1]:
            eigs = np.linalg.eigvalsh(self._ztz)
            rcond = eigs[0] / eigs[-1] if eigs[-1] > 0 else 0.0
            if rcond < rcond_tol:
                vec = np.linalg.eigh(self._ztz)[1][:, 0]
                col = int(np.flatnonzero(self.active_columns)[np.argmax(np.abs(vec))])
                raise SingularDesign(
                    f"within-projected regressors are rank deficient "
                    f"(rcond={rcond:.2e}); offending column {col} "
                    f"({self.regressors.names[col]})",
                    column=col,
                )
        self._zty = QZa.T @ self.Qy
        self._ztwy = QZa.T @ self.QWy

        self.rho_identified = bool(np.linalg.norm(self.Wy) > 0.0)
        self.logdet = LogDetEngine(
            [network.W[t] for t in range(1, layout.T + 1)], method=logdet_method
        )

    # ------------------------------------------------------------------

    @property
    def n_delta(self) -> int:
        return self.Z.shape[1]

    def delta_full(self, delta_active: np.ndarray) -> np.ndarray:
        """Pad an active-column delta with NaN at dropped columns."""
        full = np.full(self.n_delta, np.nan)
        full[self.active_columns] = delta_active
        return full

    def _delta_active(self, delta: np.ndarray) -> np.ndarray:
        delta = np.asarray(delta, dtype=float)
        if delta.shape != (self.n_delta,):
            raise ShapeMismatch(f"delta must have length {self.n_delta}")
        act = delta[self.active_columns]
        if not np.isfinite(act).all():
            raise ValueError("delta has non-finite entries on active columns")
        return act

    def log_det_S(self, rho: float) -> float:
        """ln|I - rho W| over the estimation periods."""
        return self.logdet.log_det(rho)

    def profile(self, rho: float):
        """Concentrate delta and sigma2 at the given rho.

        Returns ``(delta_hat, sigma2_hat, Lcc)`` with ``delta_hat`` on the
        full column set (NaN at dropped columns).
        """
        rhs = self._zty - rho * self._ztwy
        delta_a = np.linalg.solve(self._ztz, rhs) if rhs.size else rhs
        resid = (self.Qy - rho * self.QWy) - self.QZ[:, self.active_columns] @ delta_a
        sigma2 = float(resid @ resid) / self.n
        lcc = (
            -0.5 * self.n * (np.log(2.0 * np.pi) + 1.0)
            - 0.5 * self.n * np.log(sigma2)
            + self.log_det_S(rho)
        )
        return self.delta_full(delta_a), sigma2, lcc

    def residuals(self, rho: float, delta: np.ndarray) -> np.ndarray:
        """Within-projected residuals Q(S(rho) y - Z delta)."""
        delta_a = self._delta_active(delta)
        return (self.Qy - rho * self.QWy) - self.QZ[:, self.active_columns] @ delta_a

    def loglik(self, theta: Theta) -> float:
        """Concentrated log-likelihood (fixed effects profiled out)."""
        resid = self.residuals(theta.rho, theta.delta)
        return float(
            -0.5 * self.n * np.log(2.0 * np.pi)
            - 0.5 * self.n * np.log(theta.sigma2)
            + self.log_det_S(theta.rho)
            - 0.5 * (resid @ resid) / theta.sigma2
        )

    def score(self, theta: Theta) -> np.ndarray:
        """Analytic gradient of the concentrated log-likelihood.

        Ordered (rho, lambda, nu, gamma, beta', sigma2); entries for
        dropped regressor columns are NaN (not estimated).
        """
        resid = self.residuals(theta.rho, theta.delta)
        sigma2 = theta.sigma2
        s_rho = -self.logdet.trace_g(theta.rho) + (self.Wy @ resid) / sigma2
        s_delta_a = (self.QZ[:, self.active_columns].T @ resid) / sigma2
        s_sigma2 = -0.5 * self.n / sigma2 + 0.5 * (resid @ resid) / sigma2**2
        out = np.empty(self.n_delta + 2)
        out[0] = s_rho
        out[1:-1] = self.delta_full(s_delta_a)
        out[-1] = s_sigma2
        return out

    def recover_alpha(self, rho: float, delta: np.ndarray) -> np.ndarray:
        """Fixed effects maximizing the joint likelihood at (rho, delta).

        Each unit's estimate is the mean of (S(rho) y - Z delta) over its
        observed estimation periods; units never observed in periods 1..T
        get NaN.
        """
        delta_a = self._delta_active(delta)
        u = (self.y - rho * self.Wy) - self.Z[:, self.active_columns] @ delta_a
        return unit_means(u, self.layout)

    def maximize(self, grid_points: int = 41, tol: float = 1e-9):
        """Profile criterion maximization: coarse grid, then golden section.

        Returns ``(rho_hat, info)`` where info carries the grid trace and a
        boundary flag.  When the spatially lagged outcome is identically
        zero, rho is not identified and is pinned at zero.
        """
        lo, hi = self.rho_bounds
        if not self.rho_identified:
            delta, sigma2, lcc = self.profile(0.0)
            return 0.0, {
                "grid_rho": np.array([0.0]),
                "grid_lcc": np.array([lcc]),
                "boundary": False,
                "rho_identified": False,
            }
        grid = np.linspace(lo, hi, grid_points)
        vals = np.array([self.profile(r)[2] for r in grid])
        i = int(np.argmax(vals))
        a = grid[max(i - 1, 0)]
        b = grid[min(i + 1, grid_points - 1)]
        rho_hat, _ = golden_section_max(lambda r: self.profile(r)[2], a, b, tol=tol)
        boundary = min(abs(rho_hat - lo), abs(hi - rho_hat)) < 1e-4
        return float(rho_hat), {
            "grid_rho": grid,
            "grid_lcc": vals,
            "boundary": bool(boundary),
            "rho_identified": True,
        }
