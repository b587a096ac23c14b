"""Spatial weight matrices: base adjacency and time-varying sliced weights.

The base object is a symmetric binary adjacency A with zero diagonal.
Per-period weights are obtained by slicing A to the units observed in the
relevant periods and row-normalizing: W_t connects period-t units among
themselves, M_t connects period-t units to period-(t-1) units.  Rows with
no in-slice neighbors are kept as all-zero rows, so the spatial term of the
model simply vanishes for isolated units.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import InvalidCoordinate, IoError
from .panel import PanelLayout

__all__ = [
    "Adjacency",
    "TimeVaryingNetwork",
    "build_rook_adjacency",
    "build_distance_band",
    "slice_row_normalize",
    "build_network",
    "check_spectral_condition",
    "save_edge_list",
    "load_edge_list",
]

EARTH_RADIUS_KM = 6371.0088  # mean Earth radius; fixed so edges are reproducible


@dataclass(frozen=True)
class Adjacency:
    """Symmetric binary adjacency with zero diagonal, stored sparse (CSR)."""

    A: sp.csr_matrix

    def __post_init__(self):
        A = sp.csr_matrix(self.A)
        A.eliminate_zeros()
        if A.shape[0] != A.shape[1]:
            raise ValueError("adjacency must be square")
        if A.nnz and not np.isin(A.data, (1, 1.0)).all():
            raise ValueError("adjacency entries must be 0/1")
        if A.diagonal().any():
            raise ValueError("adjacency diagonal must be zero")
        if (A != A.T).nnz:
            raise ValueError("adjacency must be symmetric")
        object.__setattr__(self, "A", A.astype(float))

    @property
    def N(self) -> int:
        return self.A.shape[0]

    def degrees(self) -> np.ndarray:
        return np.asarray(self.A.sum(axis=1)).ravel().astype(int)


def build_rook_adjacency(rows: int, cols: int) -> Adjacency:
    """Rook-contiguity adjacency of a rows x cols grid (shared edges only).

    Cells are numbered row-major: cell (r, c) has id r*cols + c.
    """
    if rows < 1 or cols < 1:
        raise ValueError("grid dimensions must be positive")
    N = rows * cols
    src, dst = [], []
    idx = np.arange(N).reshape(rows, cols)
    # horizontal neighbors
    if cols > 1:
        left = idx[:, :-1].ravel()
        right = idx[:, 1:].ravel()
        src.extend((left, right))
        dst.extend((right, left))
    # vertical neighbors
    if rows > 1:
        up = idx[:-1, :].ravel()
        down = idx[1:, :].ravel()
        src.extend((up, down))
        dst.extend((down, up))
    if src:
        i = np.concatenate(src)
        j = np.concatenate(dst)
        A = sp.csr_matrix((np.ones(i.size), (i, j)), shape=(N, N))
    else:
        A = sp.csr_matrix((N, N))
    return Adjacency(A)


def haversine_km(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Great-circle distance in kilometers between degree coordinates."""
    lat1, lon1, lat2, lon2 = (np.radians(np.asarray(a, dtype=float)) for a in (lat1, lon1, lat2, lon2))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = np.sin(dlat / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def build_distance_band(coords: np.ndarray, d_km: float, chunk: int = 2048) -> Adjacency:
    """Adjacency connecting points within ``d_km`` kilometers of each other.

    Parameters
    ----------
    coords : array-like, shape (N, 2)
        (latitude, longitude) pairs in degrees.
    d_km : float
        Band threshold; two distinct points are connected iff their
        great-circle distance is <= d_km.  Coincident points are connected.
    """
    coords = np.asarray(coords, dtype=float)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise InvalidCoordinate("coords must be an (N, 2) array of (lat, lon)")
    if not np.isfinite(coords).all():
        raise InvalidCoordinate("coordinates must be finite")
    lat, lon = coords[:, 0], coords[:, 1]
    if np.any(np.abs(lat) > 90.0) or np.any(np.abs(lon) > 360.0):
        raise InvalidCoordinate("latitude must be in [-90, 90], longitude in [-360, 360]")
    if not d_km > 0:
        raise ValueError("d_km must be positive")

    N = coords.shape[0]
    rows, cols = [], []
    for start in range(0, N, chunk):
        stop = min(start + chunk, N)
        dist = haversine_km(lat[start:stop, None], lon[start:stop, None], lat[None, :], lon[None, :])
        i_loc, j = np.nonzero(dist <= d_km)
        i = i_loc + start
        keep = i != j
        rows.append(i[keep])
        cols.append(j[keep])
    i = np.concatenate(rows) if rows else np.empty(0, dtype=int)
    j = np.concatenate(cols) if cols else np.empty(0, dtype=int)
    A = sp.csr_matrix((np.ones(i.size), (i, j)), shape=(N, N))
    A.sum_duplicates()
    A.data[:] = 1.0
    return Adjacency(A)


def row_normalize(M: sp.spmatrix) -> sp.csr_matrix:
    """Scale every row to sum to one; all-zero rows stay all-zero."""
    M = sp.csr_matrix(M, dtype=float)
    rs = np.asarray(M.sum(axis=1)).ravel()
    inv = np.divide(1.0, rs, out=np.zeros_like(rs), where=rs != 0)
    return sp.diags(inv) @ M


def slice_row_normalize(adjacency: Adjacency | sp.spmatrix, target_ids, source_ids) -> sp.csr_matrix:
    """Slice the adjacency to target x source units and row-normalize.

    Row r of the result corresponds to ``target_ids[r]``, column c to
    ``source_ids[c]``; each nonzero row sums to exactly one.
    """
    A = adjacency.A if isinstance(adjacency, Adjacency) else sp.csr_matrix(adjacency)
    target_ids = np.asarray(target_ids, dtype=int)
    source_ids = np.asarray(source_ids, dtype=int)
    sliced = A[target_ids][:, source_ids]
    return row_normalize(sliced)


@dataclass(frozen=True)
class TimeVaryingNetwork:
    """Per-period weight matrices aligned to a panel layout.

    ``W[t]`` (t = 0..T) is the N_t x N_t within-period matrix with zero
    diagonal; ``M[t]`` (t = 1..T, stored at index t with ``M[0] = None``)
    is the N_t x N_{t-1} cross-period matrix.  All rows sum to one or are
    all-zero.

    ``symmetric_base`` records that every W_t was obtained by
    row-normalizing a slice of a symmetric nonnegative adjacency, which
    enables a real-eigenvalue fast path for log-determinants.
    """

    W: tuple
    M: tuple
    symmetric_base: bool = False

    @property
    def T(self) -> int:
        return len(self.W) - 1

    def max_row_norm(self) -> float:
        """max_t ||W_t||_inf (maximum absolute row sum over all periods)."""
        norms = []
        for W in self.W:
            if W.shape[0] == 0:
                norms.append(0.0)
                continue
            row_abs = np.asarray(abs(W).sum(axis=1)).ravel()
            norms.append(float(row_abs.max()) if row_abs.size else 0.0)
        return max(norms) if norms else 0.0


def build_network(
    adjacency: Adjacency,
    layout: PanelLayout,
    cross_self_links: bool = False,
) -> TimeVaryingNetwork:
    """Slice a base adjacency into per-period W_t and M_t weights.

    Parameters
    ----------
    adjacency : Adjacency
        Base N x N symmetric binary adjacency (zero diagonal).
    layout : PanelLayout
        Observation structure; determines the slices.
    cross_self_links : bool
        When True, a unit observed in consecutive periods is linked to its
        own previous-period self in M_t before normalization (natural for
        distance-band networks, where self-distance is zero).  Off by
        default, matching adjacency slicing with a zero diagonal.
    """
    if adjacency.N != layout.N:
        raise ValueError(f"adjacency has {adjacency.N} nodes, layout has {layout.N}")
    W = tuple(
        slice_row_normalize(adjacency, layout.ids(t), layout.ids(t)) for t in range(layout.T + 1)
    )
    M = [None]
    for t in range(1, layout.T + 1):
        ids_t, ids_prev = layout.ids(t), layout.ids(t - 1)
        sliced = adjacency.A[ids_t][:, ids_prev]
        if cross_self_links:
            loc_t, loc_prev = layout.carry_pairs(t)
            self_links = sp.csr_matrix(
                (np.ones(loc_t.size), (loc_t, loc_prev)), shape=sliced.shape
            )
            sliced = sp.csr_matrix(sliced + self_links)
            sliced.data[:] = np.minimum(sliced.data, 1.0)
        M.append(row_normalize(sliced))
    return TimeVaryingNetwork(W=W, M=tuple(M), symmetric_base=not cross_self_links)


def check_spectral_condition(network: TimeVaryingNetwork, rho_interval=(-0.995, 0.995)) -> dict:
    """Check sup_rho sup_t ||rho * W_t||_inf < 1 over the rho interval.

    Returns a report dict; never raises.  With row-normalized weights the
    norm is at most one, so any interval inside (-1, 1) passes.
    """
    lo, hi = float(rho_interval[0]), float(rho_interval[1])
    max_norm = network.max_row_norm()
    rho_abs = max(abs(lo), abs(hi))
    return {
        "max_row_norm": max_norm,
        "rho_interval": (lo, hi),
        "sup_product": rho_abs * max_norm,
        "satisfied": rho_abs * max_norm < 1.0,
    }


def save_edge_list(adjacency: Adjacency, path) -> None:
    """Write the adjacency as a 3-column text edge list (i, j, weight)."""
    A = sp.coo_matrix(adjacency.A)
    try:
        with open(path, "w") as fh:
            fh.write(f"# nodes {adjacency.N}\n")
            for i, j, v in zip(A.row, A.col, A.data):
                fh.write(f"{i} {j} {v:g}\n")
    except OSError as exc:
        raise IoError(f"cannot write edge list to {path}: {exc}") from exc


def load_edge_list(path, n_nodes: int | None = None) -> Adjacency:
    """Read a 3-column (i, j, weight) edge list with 0-based ids.

    A ``# nodes N`` header fixes the node count; otherwise it is inferred
    from the largest id.  Weights are binarized and the matrix is
    symmetrized, matching the adjacency contract.
    """
    rows, cols = [], []
    declared = n_nodes
    try:
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    parts = line[1:].split()
                    if len(parts) == 2 and parts[0] == "nodes":
                        declared = int(parts[1])
                    continue
                parts = line.split()
                if len(parts) < 2:
                    raise IoError(f"malformed edge list line: {line!r}")
                i, j = int(parts[0]), int(parts[1])
                if i != j:
                    rows.append(i)
                    cols.append(j)
    except OSError as exc:
        raise IoError(f"cannot read edge list from {path}: {exc}") from exc
    if declared is None:
        declared = (max(max(rows, default=-1), max(cols, default=-1))) + 1
    i = np.array(rows + cols, dtype=int)
    j = np.array(cols + rows, dtype=int)
    A = sp.csr_matrix((np.ones(i.size), (i, j)), shape=(declared, declared))
    A.sum_duplicates()
    if A.nnz:
        A.data[:] = 1.0
    return Adjacency(A)
