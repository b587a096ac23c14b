"""Synthetic unbalanced dynamic network panels.

Observation windows are drawn per unit: durations follow a geometric
distribution (nonnegative support) shifted by two and truncated at the full
horizon, and each window is placed uniformly at random within the T+1
periods.  Outcomes follow the dynamic network recursion with a pre-sample
burn-in for the units observed in period 0, during which the network and
covariates are frozen at their period-0 values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import SingularS, Unattainable
from .panel import PanelData, PanelLayout, Theta, build_layout, unbalancedness
from .rng import stream
from .weights import Adjacency, TimeVaryingNetwork, build_network, build_rook_adjacency

__all__ = [
    "DgpConfig",
    "draw_windows",
    "expected_unbalancedness",
    "calibrate_p",
    "gen_exogenous",
    "draw_errors",
    "simulate",
    "simulate_dataset",
    "most_square_grid",
]

ERROR_DISTS = ("normal", "centered_exponential", "laplace")


def most_square_grid(N: int) -> tuple[int, int]:
    """Most-square rows x cols factorization of N (rows <= cols)."""
    r = int(math.isqrt(N))
    while N % r:
        r -= 1
    return r, N // r


@dataclass
class DgpConfig:
    """Configuration of one synthetic panel design.

    Either ``p`` (the geometric duration parameter, on the scale where the
    geometric success probability is p/T) or ``target_up`` (a target
    unbalancedness proportion, resolved by :func:`calibrate_p`) must be
    given.
    """

    N: int
    T: int
    theta0: Theta
    p: float | None = None
    target_up: float | None = None
    burn_in: int = 20
    error_dist: str = "normal"
    seed: int = 0
    rook_dims: tuple[int, int] | None = None

    def __post_init__(self):
        if self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")
        if self.error_dist not in ERROR_DISTS:
            raise ValueError(f"error_dist must be one of {ERROR_DISTS}")
        if self.p is None and self.target_up is None:
            raise ValueError("either p or target_up must be set")
        if self.target_up is not None and not 0.0 <= self.target_up < 1.0:
            raise ValueError("target_up must lie in [0, 1)")
        if self.rook_dims is None:
            self.rook_dims = most_square_grid(self.N)
        elif self.rook_dims[0] * self.rook_dims[1] != self.N:
            raise ValueError("rook_dims must multiply to N")

    @property
    def k(self) -> int:
        return self.theta0.k

    def resolve_p(self) -> float:
        """Return p, calibrating it from ``target_up`` when needed."""
        if self.p is None:
            self.p = calibrate_p(self.N, self.T, self.target_up, stream(self.seed, "calibrate"))
        return self.p


def draw_windows(N: int, T: int, p: float, rng: np.random.Generator) -> PanelLayout:
    """Draw one contiguous observation window per unit.

    Durations are ``2 + G`` with G geometric on {0, 1, ...} with success
    probability p/T, so every unit is observed at least twice.  Durations
    of T+1 or more give a fully observed unit; shorter windows start
    uniformly at random within the T+1 periods.
    """
    q = p / T
    if not 0.0 < q < 1.0:
        raise ValueError(f"p/T must be in (0, 1), got {q}")
    durations = rng.geometric(q, size=N) + 1  # geometric on {1,2,...} -> 2 + G
    lengths = np.minimum(durations, T + 1)
    starts = rng.integers(0, T + 2 - lengths)  # high is exclusive; full windows start at 0
    d = np.zeros((N, T + 1), dtype=np.int8)
    for i in range(N):
        d[i, starts[i] : starts[i] + lengths[i]] = 1
    return build_layout(d)


def _expected_estimation_obs(T: int, q: float) -> float:
    # E[number of periods in 1..T covered by a window], over duration and placement.
    # A window of length L < T+1 covers L periods, one of which is period 0
    # with probability 1/(T+2-L); a full window covers all T estimation periods.
    total = 0.0
    prob_full = (1.0 - q) ** (T - 1)  # duration >= T+1
    for ell in range(2, T + 1):
        p_ell = q * (1.0 - q) ** (ell - 2)
        total += p_ell * (ell - 1.0 / (T + 2 - ell))
    return total + prob_full * T


def expected_unbalancedness(T: int, p: float) -> float:
    """Exact mean unbalancedness proportion implied by the window law."""
    q = p / T
    if not 0.0 < q < 1.0:
        raise ValueError(f"p/T must be in (0, 1), got {q}")
    return 1.0 - _expected_estimation_obs(T, q) / T


def calibrate_p(
    N: int,
    T: int,
    target_up: float,
    rng: np.random.Generator,
    mc_draws: int = 500,
    tol: float = 0.01,
) -> float:
    """Find p so the mean unbalancedness of drawn layouts hits ``target_up``.

    Bisection on the exact expected unbalancedness (monotone in p),
    followed by a Monte Carlo verification over ``mc_draws`` layout draws.
    """
    q_lo, q_hi = 1e-9, 1.0 - 1e-9
    up_lo = expected_unbalancedness(T, q_lo * T)
    up_hi = expected_unbalancedness(T, q_hi * T)
    if not up_lo <= target_up <= up_hi:
        raise Unattainable(target_up, (up_lo, up_hi))
    if target_up <= up_lo:
        return q_lo * T
    for _ in range(200):
        q_mid = 0.5 * (q_lo + q_hi)
        if expected_unbalancedness(T, q_mid * T) < target_up:
            q_lo = q_mid
        else:
            q_hi = q_mid
        if q_hi - q_lo < 1e-14:
            break
    p = 0.5 * (q_lo + q_hi) * T

    # verify by simulation, drawing until the check is statistically clear
    ups: list[float] = []
    goal = max(mc_draws, 200)
    while True:
        while len(ups) < goal:
            try:
                ups.append(unbalancedness(draw_windows(N, T, p, rng)))
            except Exception:
                continue  # empty-period draws are possible at tiny N; skip
        gap = abs(float(np.mean(ups)) - target_up)
        se = float(np.std(ups, ddof=1)) / np.sqrt(len(ups))
        if gap <= max(tol - 2.0 * se, 0.0):
            return p
        if gap > tol + 2.0 * se or len(ups) >= 16 * max(mc_draws, 200):
            raise Unattainable(target_up)
        goal = 2 * len(ups)


def gen_exogenous(layout: PanelLayout, k: int, rng: np.random.Generator):
    """Draw i.i.d. standard-normal covariates and unit fixed effects.

    Returns ``(X, alpha)`` where X is a tuple of (N_t, k) arrays for
    t = 0..T and alpha has length N.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    alpha = rng.standard_normal(layout.N)
    X = tuple(rng.standard_normal((layout.period_counts[t], k)) for t in range(layout.T + 1))
    return X, alpha


def draw_errors(count: int, dist: str, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    """Draw i.i.d. mean-zero errors with variance ``sigma2``.

    ``centered_exponential`` is an exponential shifted by its mean
    (skewness 2); ``laplace`` is scaled to the requested variance
    (excess kurtosis 3).
    """
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    sigma = math.sqrt(sigma2)
    if dist == "normal":
        return sigma * rng.standard_normal(count)
    if dist == "centered_exponential":
        return rng.exponential(scale=sigma, size=count) - sigma
    if dist == "laplace":
        return rng.laplace(scale=sigma / math.sqrt(2.0), size=count)
    raise ValueError(f"unknown error distribution {dist!r}")


def simulate(
    layout: PanelLayout,
    network: TimeVaryingNetwork,
    X,
    alpha: np.ndarray,
    theta0: Theta,
    burn_in: int,
    rng: np.random.Generator,
    error_dist: str = "normal",
) -> PanelData:
    """Generate outcomes for every observed cell of the panel.

    Units observed in period 0 are initialized from N(0, 1) ``burn_in``
    periods before the sample and iterated on the frozen period-0
    cross-section (period-0 weights and covariates).  For t = 1..T the
    cross-section solves

        (I - rho W_t) Y_t = lam * (1 - f_t) .* (M_t Y_{t-1})
                            + nu * carry_t(Y_{t-1}) + gamma * f_t
                            + X_t beta + alpha_t + V_t

    where f_t marks units newly listed at t, so an entrant's equation has
    no lag terms and a single listing-effect contribution.
    """
    rho, lam, nu, gamma, beta, sigma2 = (
        theta0.rho,
        theta0.lam,
        theta0.nu,
        theta0.gamma,
        theta0.beta,
        theta0.sigma2,
    )
    if not np.isfinite(gamma):
        raise ValueError("theta0.gamma must be finite for simulation")
    norm = network.max_row_norm()
    if abs(rho) * norm >= 1.0:
        raise ValueError(f"spectral condition violated: |rho|*max||W_t||_inf = {abs(rho) * norm:.3f} >= 1")

    def factor(W):
        n_t = W.shape[0]
        if n_t == 0:
            return None
        S = (sp.identity(n_t, format="csc") - rho * W.tocsc()).tocsc()
        try:
            lu = spla.splu(S)
        except RuntimeError as exc:  # pragma: no cover - guarded by the norm check
            raise SingularS(-1) from exc
        return lu

    Y = [None] * (layout.T + 1)
    ids0 = layout.ids(0)
    n0 = ids0.size
    lu0 = factor(network.W[0])
    y = rng.standard_normal(n0)
    if n0:
        x0b = X[0] @ beta + alpha[ids0]
        for _ in range(burn_in):
            v = draw_errors(n0, error_dist, sigma2, rng)
            rhs = lam * (network.W[0] @ y) + nu * y + x0b + v
            y = lu0.solve(rhs)
    Y[0] = y

    for t in range(1, layout.T + 1):
        ids_t = layout.ids(t)
        n_t = ids_t.size
        f = layout.newly_listed(t)
        lag_net = network.M[t] @ Y[t - 1] if Y[t - 1].size else np.zeros(n_t)
        lag_own = np.zeros(n_t)
        loc_t, loc_prev = layout.carry_pairs(t)
        lag_own[loc_t] = Y[t - 1][loc_prev]
        v = draw_errors(n_t, error_dist, sigma2, rng)
        rhs = lam * (1.0 - f) * lag_net + nu * lag_own + gamma * f + X[t] @ beta + alpha[ids_t] + v
        lu = factor(network.W[t])
        try:
            Y[t] = lu.solve(rhs)
        except RuntimeError as exc:
            raise SingularS(t) from exc
    return PanelData.from_lists(Y, X, layout)


def simulate_dataset(config: DgpConfig, rep: int = 0):
    """One full draw: layout, network, exogenous parts and outcomes.

    Random streams are keyed by ``(seed, rep, purpose)``, so replications
    are independent and reproducible in any execution order.

    Returns
    -------
    (layout, network, data, alpha)
    """
    p = config.resolve_p()
    layout = draw_windows(config.N, config.T, p, stream(config.seed, rep, "windows"))
    adjacency = build_rook_adjacency(*config.rook_dims)
    network = build_network(adjacency, layout)
    X, alpha = gen_exogenous(layout, config.k, stream(config.seed, rep, "exog"))
    data = simulate(
        layout,
        network,
        X,
        alpha,
        config.theta0,
        config.burn_in,
        stream(config.seed, rep, "errors"),
        error_dist=config.error_dist,
    )
    return layout, network, data, alpha
