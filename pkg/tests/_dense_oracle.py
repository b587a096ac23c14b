"""From-scratch dense constructions used as an independent oracle.

Everything here is built with explicit selection matrices and dense
linear algebra over the stacked sample, with no reuse of the package's
indexed implementations, so agreement is a genuine cross-check.
"""

import numpy as np


def selection_matrix(layout, t):
    """D_t: rows of I_N for the units observed in period t."""
    D = np.zeros((layout.period_counts[t], layout.N))
    D[np.arange(layout.period_counts[t]), layout.ids(t)] = 1.0
    return D


def stacked_selection(layout):
    """D = [D_1', ..., D_T']' over the estimation periods."""
    return np.vstack([selection_matrix(layout, t) for t in range(1, layout.T + 1)])


def projectors(layout):
    """Dense P = D (D'D)^+ D' and Q = I - P."""
    D = stacked_selection(layout)
    DtD = D.T @ D
    P = D @ np.linalg.pinv(DtD) @ D.T
    return P, np.eye(layout.n) - P


def block_diag_W(layout, network):
    """Block-diagonal spatial weights over the stacked sample."""
    n = layout.n
    W = np.zeros((n, n))
    for t in range(1, layout.T + 1):
        r = layout.rows(t)
        W[r, r] = network.W[t].toarray()
    return W


def listing_matrix(layout, t):
    """F_t = D_t'D_t (I - D_{t-1}'D_{t-1}), diagonal over global units."""
    Dt = selection_matrix(layout, t)
    Dp = selection_matrix(layout, t - 1)
    return Dt.T @ Dt @ (np.eye(layout.N) - Dp.T @ Dp)


def dense_regressors(layout, network, data):
    """Z stacked from the literal per-period matrix products."""
    blocks = []
    for t in range(1, layout.T + 1):
        Dt = selection_matrix(layout, t)
        Ft = listing_matrix(layout, t)
        M = network.M[t].toarray()
        col1 = Dt @ (np.eye(layout.N) - Ft) @ Dt.T @ (M @ data.Y[t - 1])
        Dp = selection_matrix(layout, t - 1)
        col2 = Dt @ Dp.T @ data.Y[t - 1]
        col3 = Dt @ Ft @ np.ones(layout.N)
        blocks.append(np.column_stack([col1, col2, col3, data.X[t]]))
    return np.vstack(blocks)


def stacked_y(layout, data):
    return np.concatenate([data.Y[t] for t in range(1, layout.T + 1)])


def log_det_S(layout, network, rho):
    total = 0.0
    for t in range(1, layout.T + 1):
        S = np.eye(layout.period_counts[t]) - rho * network.W[t].toarray()
        sign, logdet = np.linalg.slogdet(S)
        total += logdet
    return total


def joint_loglik(layout, network, data, theta_vec, alpha):
    """L_n(theta, alpha): the full Gaussian likelihood, fixed effects included."""
    rho, delta, sigma2 = theta_vec[0], np.asarray(theta_vec[1:-1]), theta_vec[-1]
    Z = dense_regressors(layout, network, data)
    y = stacked_y(layout, data)
    W = block_diag_W(layout, network)
    D = stacked_selection(layout)
    v = (np.eye(layout.n) - rho * W) @ y - Z @ delta - D @ alpha
    n = layout.n
    return (
        -0.5 * n * np.log(2.0 * np.pi)
        - 0.5 * n * np.log(sigma2)
        + log_det_S(layout, network, rho)
        - 0.5 * (v @ v) / sigma2
    )


def concentrated_loglik(layout, network, data, theta_vec):
    """L_n^c(theta) with alpha profiled out through the dense projector."""
    rho, delta, sigma2 = theta_vec[0], np.asarray(theta_vec[1:-1]), theta_vec[-1]
    Z = dense_regressors(layout, network, data)
    y = stacked_y(layout, data)
    W = block_diag_W(layout, network)
    _, Q = projectors(layout)
    v = Q @ ((np.eye(layout.n) - rho * W) @ y - Z @ delta)
    n = layout.n
    return (
        -0.5 * n * np.log(2.0 * np.pi)
        - 0.5 * n * np.log(sigma2)
        + log_det_S(layout, network, rho)
        - 0.5 * (v @ v) / sigma2
    )


def score(layout, network, data, theta_vec):
    """Analytic gradient of the concentrated likelihood, dense algebra."""
    rho, delta, sigma2 = theta_vec[0], np.asarray(theta_vec[1:-1]), theta_vec[-1]
    Z = dense_regressors(layout, network, data)
    y = stacked_y(layout, data)
    W = block_diag_W(layout, network)
    _, Q = projectors(layout)
    n = layout.n
    S = np.eye(n) - rho * W
    v = Q @ (S @ y - Z @ delta)
    G = W @ np.linalg.inv(S)
    s_rho = -np.trace(G) + (W @ y) @ v / sigma2
    s_delta = Z.T @ Q @ v / sigma2
    s_sigma2 = -0.5 * n / sigma2 + 0.5 * (v @ v) / sigma2**2
    return np.concatenate(([s_rho], s_delta, [s_sigma2]))


def recover_alpha(layout, network, data, rho, delta):
    """alpha_hat = (D'D)^+ D'(S(rho) y - Z delta)."""
    Z = dense_regressors(layout, network, data)
    y = stacked_y(layout, data)
    W = block_diag_W(layout, network)
    D = stacked_selection(layout)
    u = (np.eye(layout.n) - rho * W) @ y - Z @ np.asarray(delta)
    return np.linalg.pinv(D.T @ D) @ D.T @ u
