import numpy as np
import pytest
import scipy.sparse as sp

from netpanel.exceptions import InvalidCoordinate
from netpanel.panel import build_layout
from netpanel.weights import (
    Adjacency,
    build_distance_band,
    build_network,
    build_rook_adjacency,
    check_spectral_condition,
    haversine_km,
    load_edge_list,
    row_normalize,
    save_edge_list,
    slice_row_normalize,
)


def rook_degrees_oracle(rows, cols):
    """Count neighbors by enumerating the four rook offsets per cell."""
    deg = np.zeros(rows * cols, dtype=int)
    for r in range(rows):
        for c in range(cols):
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < rows and 0 <= cc < cols:
                    deg[r * cols + c] += 1
    return deg


def test_rook_2x2():
    adj = build_rook_adjacency(2, 2)
    assert np.all(adj.degrees() == 2)


def test_rook_1x3():
    adj = build_rook_adjacency(1, 3)
    assert np.array_equal(adj.degrees(), [1, 2, 1])


@pytest.mark.parametrize("rows,cols", [(3, 3), (4, 5), (1, 1), (2, 7)])
def test_rook_matches_offset_enumeration(rows, cols):
    adj = build_rook_adjacency(rows, cols)
    assert np.array_equal(adj.degrees(), rook_degrees_oracle(rows, cols))


def test_rook_3x3_degree_pattern():
    deg = build_rook_adjacency(3, 3).degrees().reshape(3, 3)
    assert deg[1, 1] == 4  # center
    assert deg[0, 0] == deg[0, 2] == deg[2, 0] == deg[2, 2] == 2  # corners
    assert deg[0, 1] == deg[1, 0] == deg[1, 2] == deg[2, 1] == 3  # edges


def test_adjacency_contract_enforced():
    bad = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        Adjacency(bad)  # asymmetric
    with pytest.raises(ValueError):
        Adjacency(sp.csr_matrix(np.eye(2)))  # nonzero diagonal


def test_distance_band_zero_distance_connects():
    coords = np.array([[10.0, 20.0], [10.0, 20.0]])
    adj = build_distance_band(coords, 0.5)
    assert adj.A[0, 1] == 1.0 and adj.A[1, 0] == 1.0


def test_distance_band_threshold_against_haversine_oracle():
    # two points on the equator 0.018 degrees of longitude apart
    coords = np.array([[0.0, 0.0], [0.0, 0.018]])
    R = 6371.0088
    lat1, lon1, lat2, lon2 = np.radians([0.0, 0.0, 0.0, 0.018])
    h = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    dist = 2 * R * np.arcsin(np.sqrt(h))
    assert abs(dist - 2.0) < 0.01  # about 2 km apart
    assert np.isclose(haversine_km(0.0, 0.0, 0.0, 0.018), dist)
    assert build_distance_band(coords, 1.0).A.nnz == 0
    assert build_distance_band(coords, 2.1).A[0, 1] == 1.0


@pytest.mark.parametrize("d_km", [0.5, 1.0, 2.0])
def test_distance_band_application_thresholds(d_km):
    rng = np.random.default_rng(0)
    coords = np.column_stack(
        [-36.85 + 0.02 * rng.standard_normal(40), 174.76 + 0.02 * rng.standard_normal(40)]
    )
    adj = build_distance_band(coords, d_km)
    # symmetric, zero diagonal, and monotone in the threshold
    assert (adj.A != adj.A.T).nnz == 0
    assert adj.A.diagonal().sum() == 0.0
    if d_km > 0.5:
        smaller = build_distance_band(coords, 0.5)
        assert adj.A.nnz >= smaller.A.nnz


def test_distance_band_invalid_coordinates():
    with pytest.raises(InvalidCoordinate):
        build_distance_band(np.array([[95.0, 0.0]]), 1.0)
    with pytest.raises(InvalidCoordinate):
        build_distance_band(np.array([[0.0, np.nan]]), 1.0)


def test_slice_row_normalize_basic():
    A = sp.csr_matrix(np.array([[0, 1, 1], [1, 0, 0], [1, 0, 0]], dtype=float))
    out = slice_row_normalize(A, [0], [0, 1, 2])
    assert np.allclose(out.toarray(), [[0.0, 0.5, 0.5]])


def test_slice_row_normalize_zero_row_stays_zero():
    A = sp.csr_matrix((3, 3))
    out = slice_row_normalize(A, [0, 1], [0, 1, 2])
    assert out.nnz == 0
    assert np.all(np.isfinite(out.toarray()))


def test_row_sums_exactly_one_or_zero_over_random_slices():
    rng = np.random.default_rng(12)
    dense = (rng.random((25, 25)) < 0.15).astype(float)
    dense = np.triu(dense, 1)
    A = sp.csr_matrix(dense + dense.T)
    for _ in range(20):
        tgt = np.sort(rng.choice(25, size=rng.integers(1, 20), replace=False))
        src = np.sort(rng.choice(25, size=rng.integers(1, 20), replace=False))
        out = slice_row_normalize(Adjacency(A), tgt, src)
        sums = np.asarray(out.sum(axis=1)).ravel()
        assert np.all((np.abs(sums - 1.0) < 1e-15) | (sums == 0.0))


def test_row_normalize_idempotent_on_normalized_rows():
    A = sp.csr_matrix(np.array([[0, 2.0, 2.0], [1.0, 0, 0], [0, 0, 0]]))
    once = row_normalize(A)
    twice = row_normalize(once)
    assert np.allclose(once.toarray(), twice.toarray())


def test_slice_diagonal_stays_zero():
    adj = build_rook_adjacency(3, 3)
    out = slice_row_normalize(adj, [0, 1, 4], [0, 1, 4])
    assert np.all(out.diagonal() == 0.0)


def test_network_slicing_invariants(small_dataset):
    layout, network, _, _ = small_dataset
    for t in range(layout.T + 1):
        W = network.W[t]
        assert W.shape == (layout.period_counts[t], layout.period_counts[t])
        assert np.all(W.diagonal() == 0.0)
        sums = np.asarray(W.sum(axis=1)).ravel()
        assert np.all((np.abs(sums - 1.0) < 1e-12) | (sums == 0.0))
    for t in range(1, layout.T + 1):
        M = network.M[t]
        assert M.shape == (layout.period_counts[t], layout.period_counts[t - 1])
        sums = np.asarray(M.sum(axis=1)).ravel()
        assert np.all((np.abs(sums - 1.0) < 1e-12) | (sums == 0.0))


def test_cross_self_links_option():
    d = np.ones((4, 3), dtype=int)
    layout = build_layout(d)
    adj = build_rook_adjacency(2, 2)
    plain = build_network(adj, layout, cross_self_links=False)
    withself = build_network(adj, layout, cross_self_links=True)
    # with self links every continuing unit links to its own past self
    assert np.all(withself.M[1].diagonal() > 0.0)
    assert np.all(plain.M[1].diagonal() == 0.0)
    assert plain.symmetric_base and not withself.symmetric_base


def test_spectral_condition_report(small_dataset):
    _, network, _, _ = small_dataset
    rep = check_spectral_condition(network, (-0.995, 0.995))
    assert rep["satisfied"]
    assert rep["max_row_norm"] <= 1.0 + 1e-12

    # a hand-built period with row sum 1.5 violates the condition at rho=0.8
    W_bad = sp.csr_matrix(np.array([[0.0, 1.5], [0.5, 0.0]]))
    from netpanel.weights import TimeVaryingNetwork

    net_bad = TimeVaryingNetwork(W=(W_bad,), M=(None,))
    rep_bad = check_spectral_condition(net_bad, (-0.8, 0.8))
    assert not rep_bad["satisfied"]
    assert np.isclose(rep_bad["sup_product"], 0.8 * 1.5)


def test_spectral_condition_ignores_empty_rows():
    from netpanel.weights import TimeVaryingNetwork

    W0 = sp.csr_matrix((3, 3))
    W1 = sp.csr_matrix(np.array([[0.0, 1.0, 0], [1.0, 0, 0], [0, 0, 0.0]]))
    net = TimeVaryingNetwork(W=(W0, W1), M=(None, sp.csr_matrix((3, 3))))
    rep = check_spectral_condition(net, (-0.995, 0.995))
    assert rep["max_row_norm"] == 1.0 and rep["satisfied"]


def test_edge_list_roundtrip(tmp_path):
    adj = build_rook_adjacency(3, 4)
    path = tmp_path / "edges.txt"
    save_edge_list(adj, path)
    back = load_edge_list(path)
    assert (back.A != adj.A).nnz == 0
