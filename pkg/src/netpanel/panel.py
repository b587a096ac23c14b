"""Observation structure and core data types for unbalanced network panels.

A panel tracks N units over periods 0..T.  Period 0 supplies initial
conditions only; the estimation sample stacks periods 1..T.  Each unit is
observed over one contiguous window of periods (entry and exit, no gaps),
so the unbalancedness is "genuine": there are no missing cells inside a
unit's active spell.

Stacking convention (fixed, relied on everywhere downstream): rows are
ordered period-major over t = 1..T, and within a period by ascending unit
id.  The stacked estimation sample has ``n = sum_t N_t`` rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import EmptyPeriod, NonContiguousWindow, ShapeMismatch

__all__ = [
    "PanelLayout",
    "PanelData",
    "Theta",
    "build_layout",
    "within_project",
    "unbalancedness",
    "PARAM_BASE_NAMES",
]

PARAM_BASE_NAMES = ("rho", "lambda", "nu", "gamma")


@dataclass(frozen=True)
class PanelLayout:
    """Who is observed when.

    Attributes
    ----------
    N : int
        Number of units ever observed.
    T : int
        Number of estimation periods (periods are indexed 0..T).
    d : ndarray, shape (N, T+1)
        Binary observation indicators, ``d[i, t] = 1`` if unit i is
        observed in period t.
    index_sets : tuple of ndarray
        For each period t = 0..T, the ascending unit ids observed at t.
    windows : ndarray, shape (N, 2)
        First and last observed period of each unit (inclusive).
    obs_counts : ndarray, shape (N,)
        Number of estimation periods (t = 1..T) in which each unit is
        observed; this is the divisor of the within transformation.
    period_counts : ndarray, shape (T+1,)
        Cross-section size N_t for each period.
    n : int
        Total estimation-sample size, ``sum(period_counts[1:])``.
    """

    N: int
    T: int
    d: np.ndarray
    index_sets: tuple
    windows: np.ndarray
    obs_counts: np.ndarray
    period_counts: np.ndarray
    n: int
    # derived stacking helpers (period-major order over t = 1..T)
    row_unit: np.ndarray = field(repr=False)
    row_period: np.ndarray = field(repr=False)
    offsets: np.ndarray = field(repr=False)
    _local_index: np.ndarray = field(repr=False)
    _unit_order: np.ndarray = field(repr=False)
    _unit_starts: np.ndarray = field(repr=False)
    _units_in_sample: np.ndarray = field(repr=False)

    # -- basic accessors -------------------------------------------------

    def ids(self, t: int) -> np.ndarray:
        """Ascending unit ids observed in period t."""
        return self.index_sets[t]

    def rows(self, t: int) -> slice:
        """Slice of the stacked estimation sample holding period t (t >= 1)."""
        if not 1 <= t <= self.T:
            raise IndexError(f"estimation periods are 1..{self.T}, got {t}")
        return slice(self.offsets[t - 1], self.offsets[t])

    @property
    def n_effective_units(self) -> int:
        """Units with at least one estimation-period observation."""
        return int(np.count_nonzero(self.obs_counts))

    @property
    def coverage(self) -> float:
        """Average fraction of the N x T grid that is observed, n / (N*T)."""
        return self.n / (self.N * self.T)

    # -- selection / embedding views ------------------------------------

    def embed(self, t: int, v: np.ndarray) -> np.ndarray:
        """Scatter a period-t local array into a length-N global array."""
        v = np.asarray(v)
        ids = self.index_sets[t]
        if v.shape[0] != ids.shape[0]:
            raise ShapeMismatch(
                f"period {t} has {ids.shape[0]} units, got array of length {v.shape[0]}"
            )
        out = np.zeros((self.N,) + v.shape[1:], dtype=np.result_type(v, float))
        out[ids] = v
        return out

    def select(self, t: int, v: np.ndarray) -> np.ndarray:
        """Gather the period-t cross-section from a length-N global array."""
        v = np.asarray(v)
        if v.shape[0] != self.N:
            raise ShapeMismatch(f"expected length-{self.N} global array, got {v.shape[0]}")
        return v[self.index_sets[t]]

    def carry(self, t: int, v_prev: np.ndarray) -> np.ndarray:
        """Map a period-(t-1) local array to period-t local indexing.

        Entries for units present at t but absent at t-1 are zero; units
        that left the panel are dropped.
        """
        v_prev = np.asarray(v_prev)
        ids_prev = self.index_sets[t - 1]
        if v_prev.shape[0] != ids_prev.shape[0]:
            raise ShapeMismatch(
                f"period {t-1} has {ids_prev.shape[0]} units, got {v_prev.shape[0]}"
            )
        return self.select(t, self.embed(t - 1, v_prev))

    def newly_listed(self, t: int) -> np.ndarray:
        """Local 0/1 indicator of units whose first observed period is t."""
        ids = self.index_sets[t]
        if t == 0:
            return np.ones(ids.shape[0])
        return (self.d[ids, t - 1] == 0).astype(float)

    def carry_pairs(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        """Local positions (at t, at t-1) of units present in both periods."""
        ids = self.index_sets[t]
        prev_local = self._local_index[t - 1, ids]
        keep = prev_local >= 0
        return np.nonzero(keep)[0], prev_local[keep]

    def local_positions(self, t: int, ids: np.ndarray) -> np.ndarray:
        """Positions of global ``ids`` within period t (-1 when absent)."""
        return self._local_index[t, ids]

    # -- diagnostics -----------------------------------------------------

    def assumption_diagnostics(self) -> dict:
        """Report the regularity ratios used as soft checks, never errors.

        ``min_T_share`` is min_i T_i / T over units that appear in the
        estimation sample; small values make the unit fixed effects noisy.
        ``initial_share`` is N_0 / N; values close to 1 leave few entrants
        to identify the listing effect.
        """
        active = self.obs_counts[self.obs_counts > 0]
        return {
            "min_T_share": float(active.min() / self.T) if active.size else 0.0,
            "initial_share": float(self.period_counts[0] / self.N),
            "n": self.n,
            "unbalancedness": unbalancedness(self),
        }


def build_layout(d: np.ndarray) -> PanelLayout:
    """Validate observation indicators and derive the panel layout.

    Parameters
    ----------
    d : array-like, shape (N, T+1)
        Binary indicators over periods 0..T.  Every row must be a nonempty
        contiguous block of ones.

    Raises
    ------
    NonContiguousWindow
        If some unit's observed periods have a gap.
    EmptyPeriod
        If an estimation period t in 1..T has no observed units.
    """
    d = np.asarray(d)
    if d.ndim != 2 or d.shape[1] < 2:
        raise ShapeMismatch("d must be N x (T+1) with T >= 1")
    if not np.isin(d, (0, 1)).all():
        raise ValueError("observation indicators must be 0/1")
    d = d.astype(np.int8)
    N, TP1 = d.shape
    T = TP1 - 1

    windows = np.zeros((N, 2), dtype=np.int64)
    for i in range(N):
        obs = np.nonzero(d[i])[0]
        if obs.size == 0:
            raise NonContiguousWindow(i, [])
        first, last = obs[0], obs[-1]
        if obs.size != last - first + 1:
            raise NonContiguousWindow(i, obs.tolist())
        windows[i] = (first, last)

    index_sets = tuple(np.nonzero(d[:, t])[0] for t in range(TP1))
    period_counts = np.array([ids.size for ids in index_sets], dtype=np.int64)
    if np.any(period_counts[1:] == 0):
        raise EmptyPeriod(int(np.nonzero(period_counts[1:] == 0)[0][0] + 1))
    obs_counts = d[:, 1:].sum(axis=1).astype(np.int64)
    n = int(period_counts[1:].sum())

    row_unit = np.concatenate([index_sets[t] for t in range(1, TP1)])
    row_period = np.concatenate(
        [np.full(index_sets[t].size, t, dtype=np.int64) for t in range(1, TP1)]
    )
    offsets = np.concatenate(([0], np.cumsum(period_counts[1:])))

    local_index = np.full((TP1, N), -1, dtype=np.int64)
    for t in range(TP1):
        local_index[t, index_sets[t]] = np.arange(index_sets[t].size)

    unit_order = np.argsort(row_unit, kind="stable")
    sorted_units = row_unit[unit_order]
    starts = np.nonzero(np.r_[True, sorted_units[1:] != sorted_units[:-1]])[0]
    units_in_sample = sorted_units[starts]

    return PanelLayout(
        N=N,
        T=T,
        d=d,
        index_sets=index_sets,
        windows=windows,
        obs_counts=obs_counts,
        period_counts=period_counts,
        n=n,
        row_unit=row_unit,
        row_period=row_period,
        offsets=offsets,
        _local_index=local_index,
        _unit_order=unit_order,
        _unit_starts=starts,
        _units_in_sample=units_in_sample,
    )


def unbalancedness(layout: PanelLayout) -> float:
    """Unbalancedness proportion of the estimation sample, 1 - n/(N*T)."""
    return 1.0 - layout.n / (layout.N * layout.T)


def within_project(v: np.ndarray, layout: PanelLayout) -> np.ndarray:
    """Remove each unit's mean over its observed estimation periods.

    This applies the orthogonal projection that annihilates unit fixed
    effects: for every unit, its stacked entries (periods 1..T where the
    unit is observed) are reduced by their average.  Accepts a stacked
    length-n vector or an n x m matrix (column-wise).
    """
    v = np.asarray(v, dtype=float)
    if v.shape[0] != layout.n:
        raise ShapeMismatch(f"expected {layout.n} stacked rows, got {v.shape[0]}")
    squeeze = v.ndim == 1
    if squeeze:
        v = v[:, None]
    order = layout._unit_order
    starts = layout._unit_starts
    sums = np.add.reduceat(v[order], starts, axis=0)
    counts = layout.obs_counts[layout._units_in_sample][:, None]
    means_by_unit = np.zeros((layout.N, v.shape[1]))
    means_by_unit[layout._units_in_sample] = sums / counts
    out = v - means_by_unit[layout.row_unit]
    return out[:, 0] if squeeze else out


def unit_means(v: np.ndarray, layout: PanelLayout) -> np.ndarray:
    """Per-unit means of a stacked array over observed estimation periods.

    Units outside the estimation sample get NaN.
    """
    v = np.asarray(v, dtype=float)
    if v.shape[0] != layout.n:
        raise ShapeMismatch(f"expected {layout.n} stacked rows, got {v.shape[0]}")
    sums = np.add.reduceat(v[layout._unit_order], layout._unit_starts, axis=0)
    counts = layout.obs_counts[layout._units_in_sample]
    means = np.full((layout.N,) + v.shape[1:], np.nan)
    means[layout._units_in_sample] = (sums.T / counts).T
    return means


@dataclass(frozen=True)
class PanelData:
    """Outcomes and covariates aligned to a :class:`PanelLayout`.

    ``Y[t]`` is the length-N_t outcome vector and ``X[t]`` the N_t x k
    covariate matrix for each period t = 0..T.  Period 0 enters only
    through lagged regressors.
    """

    Y: tuple
    X: tuple
    k: int

    @staticmethod
    def from_lists(Y: Sequence[np.ndarray], X: Sequence[np.ndarray], layout: PanelLayout) -> "PanelData":
        Y = tuple(np.asarray(y, dtype=float) for y in Y)
        X = tuple(np.asarray(x, dtype=float) for x in X)
        if len(Y) != layout.T + 1 or len(X) != layout.T + 1:
            raise ShapeMismatch("need one Y and X block per period 0..T")
        k = X[0].shape[1] if X[0].ndim == 2 else 0
        for t in range(layout.T + 1):
            nt = layout.period_counts[t]
            if Y[t].shape != (nt,):
                raise ShapeMismatch(f"Y[{t}] must have shape ({nt},), got {Y[t].shape}")
            if X[t].shape != (nt, k):
                raise ShapeMismatch(f"X[{t}] must have shape ({nt}, {k}), got {X[t].shape}")
            if not (np.isfinite(Y[t]).all() and np.isfinite(X[t]).all()):
                raise ValueError(f"non-finite data in period {t}")
        return PanelData(Y=Y, X=X, k=k)

    def stacked_y(self, layout: PanelLayout) -> np.ndarray:
        """Outcomes stacked over estimation periods 1..T."""
        return np.concatenate(self.Y[1:]) if layout.T >= 1 else np.empty(0)

    def stacked_x(self, layout: PanelLayout) -> np.ndarray:
        """Covariates stacked over estimation periods 1..T."""
        return np.vstack(self.X[1:]) if layout.T >= 1 else np.empty((0, self.k))


@dataclass
class Theta:
    """Model parameters.

    Ordering used for every stacked vector, gradient and covariance:
    ``(rho, lambda, nu, gamma, beta_1..beta_k, sigma2)``.

    Attributes
    ----------
    rho : float
        Coefficient on contemporaneous neighbors' outcomes.
    lam : float
        Coefficient on lagged neighbors' outcomes (zero in a unit's
        entry period).
    nu : float
        Coefficient on the unit's own lagged outcome.
    gamma : float
        Listing effect: a common shift in a unit's first active period,
        replacing the lag terms that do not exist at entry.  May be NaN
        when the panel has no entrants and the effect is dropped.
    beta : ndarray, shape (k,)
        Covariate coefficients.
    sigma2 : float
        Error variance, must be positive.
    """

    rho: float
    lam: float
    nu: float
    gamma: float
    beta: np.ndarray
    sigma2: float

    def __post_init__(self):
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")

    @property
    def k(self) -> int:
        return self.beta.shape[0]

    @property
    def delta(self) -> np.ndarray:
        """Stacked coefficients on the regressor block, (lambda, nu, gamma, beta')."""
        return np.concatenate(([self.lam, self.nu, self.gamma], self.beta))

    def to_vector(self) -> np.ndarray:
        """Full parameter vector (rho, lambda, nu, gamma, beta', sigma2)."""
        return np.concatenate(([self.rho], self.delta, [self.sigma2]))

    @staticmethod
    def from_vector(vec: np.ndarray) -> "Theta":
        vec = np.asarray(vec, dtype=float)
        if vec.size < 5:
            raise ShapeMismatch("parameter vector needs at least (rho, lambda, nu, gamma, sigma2)")
        return Theta(
            rho=float(vec[0]),
            lam=float(vec[1]),
            nu=float(vec[2]),
            gamma=float(vec[3]),
            beta=vec[4:-1].copy(),
            sigma2=float(vec[-1]),
        )

    @staticmethod
    def names(k: int) -> list[str]:
        betas = [f"beta_{j+1}" for j in range(k)] if k != 1 else ["beta"]
        return list(PARAM_BASE_NAMES) + betas + ["sigma2"]
