"""Per-period linear operators of the fitted model.

Shared by the bias correction and the robust score variance: both need the
lag-transition channels, solvers for S_t = I - rho W_t, and pieces of
G_t = W_t S_t^(-1).
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .panel import PanelData, PanelLayout, Theta
from .weights import TimeVaryingNetwork

__all__ = ["ModelOperators"]


class ModelOperators:
    """Caches, for t = 1..T: the lag channels C1_t = (I - F_t) M_t and
    C2_t (the carry matrix), a solver for S_t = I - rho W_t (dense inverse
    up to ``dense_limit`` units, sparse LU beyond), and the diagonal of
    G_t = W_t S_t^(-1).  NaN lag coefficients (dropped parameters) are
    treated as zero.
    """

    def __init__(
        self,
        layout: PanelLayout,
        network: TimeVaryingNetwork,
        rho: float,
        lam: float,
        nu: float,
        dense_limit: int = 1200,
    ):
        self.layout = layout
        self.network = network
        self.rho = float(rho)
        self.lam = float(lam) if np.isfinite(lam) else 0.0
        self.nu = float(nu) if np.isfinite(nu) else 0.0
        T = layout.T
        self.C1 = [None] * (T + 1)
        self.C2 = [None] * (T + 1)
        self._dense_inv = [None] * (T + 1)
        self._splu = [None] * (T + 1)
        self._g_diag = [None] * (T + 1)
        for t in range(1, T + 1):
            n_t, n_prev = layout.period_counts[t], layout.period_counts[t - 1]
            f = layout.newly_listed(t)
            self.C1[t] = sp.csr_matrix(sp.diags(1.0 - f) @ network.M[t])
            loc_t, loc_prev = layout.carry_pairs(t)
            self.C2[t] = sp.csr_matrix(
                (np.ones(loc_t.size), (loc_t, loc_prev)), shape=(n_t, n_prev)
            )
            W = network.W[t]
            if n_t <= dense_limit:
                S = np.eye(n_t) - self.rho * W.toarray()
                self._dense_inv[t] = np.linalg.inv(S)
            else:
                S = (sp.identity(n_t, format="csc") - self.rho * W.tocsc()).tocsc()
                self._splu[t] = spla.splu(S)

    def s_inv(self, t: int) -> np.ndarray:
        """Dense S_t^(-1), materialized on demand for sparse periods."""
        if self._dense_inv[t] is None:
            n_t = self.layout.period_counts[t]
            self._dense_inv[t] = self._splu[t].solve(np.eye(n_t))
        return self._dense_inv[t]

    def solve(self, t: int, B: np.ndarray) -> np.ndarray:
        """S_t^(-1) B."""
        if self._splu[t] is not None:
            return self._splu[t].solve(np.ascontiguousarray(B))
        return self._dense_inv[t] @ B

    def solve_T(self, t: int, B: np.ndarray) -> np.ndarray:
        """S_t^(-T) B."""
        if self._splu[t] is not None:
            return self._splu[t].solve(np.ascontiguousarray(B), trans="T")
        return self._dense_inv[t].T @ B

    def lag_operator(self, t: int) -> sp.csr_matrix:
        """lam C1_t + nu C2_t, the lag transition into period t."""
        return self.lam * self.C1[t] + self.nu * self.C2[t]

    def g_dense(self, t: int) -> np.ndarray:
        """Dense G_t = W_t S_t^(-1)."""
        return self.network.W[t] @ self.s_inv(t)

    def g_diag(self, t: int) -> np.ndarray:
        if self._g_diag[t] is None:
            W = self.network.W[t]
            if W.nnz == 0:
                self._g_diag[t] = np.zeros(W.shape[0])
            else:
                self._g_diag[t] = np.asarray(
                    W.multiply(self.s_inv(t).T).sum(axis=1)
                ).ravel()
        return self._g_diag[t]

    def deterministic_outcome(self, data: PanelData, theta: Theta, alpha: np.ndarray):
        """Expected outcomes under the model at theta, conditional on Y_0.

        Runs the recursion with shocks set to zero, observed period-0
        outcomes as the initial condition, and the supplied fixed effects
        (NaN entries, units outside the estimation sample, count as zero;
        they only ever feed other units' lag terms).
        """
        layout = self.layout
        gamma = theta.gamma if np.isfinite(theta.gamma) else 0.0
        alpha = np.nan_to_num(np.asarray(alpha, dtype=float), nan=0.0)
        ydet = [None] * (layout.T + 1)
        ydet[0] = np.asarray(data.Y[0], dtype=float).copy()
        for t in range(1, layout.T + 1):
            ids_t = layout.ids(t)
            f = layout.newly_listed(t)
            if ydet[t - 1].size:
                lag = self.lag_operator(t) @ ydet[t - 1]
            else:
                lag = np.zeros(ids_t.size)
            rhs = lag + gamma * f + data.X[t] @ theta.beta + alpha[ids_t]
            ydet[t] = self.solve(t, rhs)
        return ydet
