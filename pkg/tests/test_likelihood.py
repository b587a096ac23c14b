import numpy as np
import pytest
import scipy.sparse as sp

import netpanel as npn
from netpanel.exceptions import SingularDesign
from netpanel.likelihood import ConcentratedLikelihood, LogDetEngine, build_regressors, golden_section_max
from netpanel.panel import Theta, build_layout, unit_means
from netpanel.weights import Adjacency, build_network, row_normalize

import _dense_oracle as oracle


def workspace(ds):
    layout, network, data, _ = ds
    return ConcentratedLikelihood(layout, network, data)


# ---------------------------------------------------------------- regressors


def test_regressor_rows_for_entrants_and_stayers(small_dataset):
    layout, network, data, _ = small_dataset
    blocks = build_regressors(layout, network, data)
    for t in range(1, layout.T + 1):
        Z_t = blocks.blocks[t - 1]
        f = layout.newly_listed(t)
        # entrant rows: no lag terms, a unit listing indicator
        assert np.all(Z_t[f == 1.0, 0] == 0.0)
        assert np.all(Z_t[f == 1.0, 1] == 0.0)
        assert np.all(Z_t[f == 1.0, 2] == 1.0)
        assert np.all(Z_t[f == 0.0, 2] == 0.0)
        assert set(np.unique(Z_t[:, 2])) <= {0.0, 1.0}
    total_entrants = sum(b[:, 2].sum() for b in blocks.blocks)
    assert total_entrants <= layout.N - layout.period_counts[0]


def test_regressors_match_dense_toy():
    # two units, one joins in period 1; lagged terms computed by hand
    d = np.array([[1, 1, 1], [0, 1, 1]])
    layout = build_layout(d)
    A = Adjacency(sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]])))
    network = build_network(A, layout)
    Y = [np.array([2.0]), np.array([1.0, 3.0]), np.array([0.5, -1.0])]
    X = [np.full((1, 1), 7.0), np.full((2, 1), 8.0), np.full((2, 1), 9.0)]
    data = npn.PanelData.from_lists(Y, X, layout)
    blocks = build_regressors(layout, network, data)
    # t=1: unit 0 has no in-slice neighbor at t=0 (only itself was present),
    # unit 1 enters: row (0, 0, 1, x)
    assert np.allclose(blocks.blocks[0][1], [0.0, 0.0, 1.0, 8.0])
    # unit 0 stays: neighbor set at t-1 is {unit 1} absent, so M row is zero
    assert np.allclose(blocks.blocks[0][0], [0.0, 2.0, 0.0, 8.0])
    # t=2: both present at t-1; M_2 links each to the other
    assert np.allclose(blocks.blocks[1][0], [3.0, 1.0, 0.0, 9.0])
    assert np.allclose(blocks.blocks[1][1], [1.0, 3.0, 0.0, 9.0])


def test_regressors_match_dense_oracle(tiny_dataset):
    layout, network, data, _ = tiny_dataset
    blocks = build_regressors(layout, network, data)
    assert np.allclose(blocks.Z, oracle.dense_regressors(layout, network, data), atol=1e-12)


# ----------------------------------------------------------------- log dets


def test_log_det_zero_at_rho_zero(small_dataset):
    cl = workspace(small_dataset)
    assert cl.log_det_S(0.0) == 0.0


def test_log_det_zero_network():
    W = [sp.csr_matrix((4, 4)), sp.csr_matrix((3, 3))]
    engine = LogDetEngine(W, method="eig")
    for rho in (-0.9, 0.0, 0.7):
        assert engine.log_det(rho) == 0.0


def test_log_det_two_unit_closed_form():
    W = [sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))]
    for method in ("eig", "lu"):
        engine = LogDetEngine(W, method=method)
        assert abs(engine.log_det(0.5) - np.log(0.75)) < 1e-12


def _random_row_normalized(rng, n, symmetric):
    dense = (rng.random((n, n)) < 0.1).astype(float)
    np.fill_diagonal(dense, 0.0)
    if symmetric:
        dense = np.triu(dense, 1)
        dense = dense + dense.T
    return row_normalize(sp.csr_matrix(dense))


@pytest.mark.parametrize("symmetric", [True, False])
def test_eig_and_lu_strategies_agree(symmetric):
    rng = np.random.default_rng(3 if symmetric else 4)
    W_list = [_random_row_normalized(rng, n, symmetric) for n in (150, 200, 80)]
    eig = LogDetEngine(W_list, method="eig")
    lu = LogDetEngine(W_list, method="lu")
    for rho in np.linspace(-0.99, 0.99, 101):
        assert abs(eig.log_det(rho) - lu.log_det(rho)) < 1e-8


def test_trace_g_matches_logdet_derivative(small_dataset):
    cl = workspace(small_dataset)
    h = 1e-6
    for rho in (-0.4, 0.0, 0.55):
        fd = (cl.log_det_S(rho + h) - cl.log_det_S(rho - h)) / (2 * h)
        assert abs(-cl.logdet.trace_g(rho) - fd) < 1e-6


def test_golden_section_finds_quadratic_peak():
    x, fx = golden_section_max(lambda x: -((x - 0.3) ** 2), -1.0, 1.0, tol=1e-10)
    assert abs(x - 0.3) < 1e-9


# ---------------------------------------------------------------- profiling


def test_profile_at_zero_rho_is_within_ols():
    theta = Theta(rho=0.0, lam=0.0, nu=0.0, gamma=0.5, beta=np.array([1.0]), sigma2=1.0)
    cfg = npn.DgpConfig(N=50, T=8, theta0=theta, target_up=0.3, seed=31)
    layout, network, data, _ = npn.simulate_dataset(cfg)
    cl = ConcentratedLikelihood(layout, network, data)
    delta, sigma2, _ = cl.profile(0.0)
    qz = npn.within_project(cl.Z, layout)
    qy = npn.within_project(cl.y, layout)
    ols = np.linalg.lstsq(qz, qy, rcond=None)[0]
    assert np.allclose(delta, ols, atol=1e-8)
    resid = qy - qz @ ols
    assert np.isclose(sigma2, resid @ resid / layout.n)


def test_profile_criterion_single_peaked(small_dataset):
    cl = workspace(small_dataset)
    grid = np.linspace(-0.9, 0.9, 41)
    vals = np.array([cl.profile(r)[2] for r in grid])
    assert np.all(np.isfinite(vals))
    i = int(np.argmax(vals))
    assert 0 < i < 40  # interior peak
    assert np.all(np.diff(vals[: i + 1]) > 0)
    assert np.all(np.diff(vals[i:]) < 0)


def test_loglik_identity_at_profiled_parameters(small_dataset):
    cl = workspace(small_dataset)
    for rho in (-0.2, 0.1, 0.5):
        delta, sigma2, lcc = cl.profile(rho)
        th = Theta(rho=rho, lam=delta[0], nu=delta[1], gamma=delta[2], beta=delta[3:], sigma2=sigma2)
        assert abs(cl.loglik(th) - lcc) < 1e-9


def test_loglik_decreases_away_from_profiled_sigma2(small_dataset):
    cl = workspace(small_dataset)
    delta, sigma2, lcc = cl.profile(0.2)

    def at(s2):
        return cl.loglik(
            Theta(rho=0.2, lam=delta[0], nu=delta[1], gamma=delta[2], beta=delta[3:], sigma2=s2)
        )

    assert at(sigma2) > at(sigma2 * 1.3) > at(sigma2 * 1.8)
    assert at(sigma2) > at(sigma2 * 0.7) > at(sigma2 * 0.4)


def test_loglik_matches_dense_oracle(tiny_dataset):
    layout, network, data, _ = tiny_dataset
    cl = ConcentratedLikelihood(layout, network, data)
    rng = np.random.default_rng(8)
    for _ in range(5):
        vec = np.array([rng.uniform(-0.6, 0.6), *rng.normal(0, 0.4, 4), rng.uniform(0.5, 2.0)])
        ours = cl.loglik(Theta.from_vector(vec))
        dense = oracle.concentrated_loglik(layout, network, data, vec)
        assert abs(ours - dense) < 1e-9


def test_recover_alpha_matches_means_and_oracle(tiny_dataset):
    layout, network, data, _ = tiny_dataset
    cl = ConcentratedLikelihood(layout, network, data)
    zero_delta = np.zeros(cl.n_delta)
    a0 = cl.recover_alpha(0.0, zero_delta)
    assert np.allclose(a0, unit_means(cl.y, layout), equal_nan=True)
    # shifting all outcomes shifts every alpha by the same constant
    shifted = [y + 3.0 for y in data.Y]
    data_shift = npn.PanelData.from_lists(shifted, list(data.X), layout)
    cl2 = ConcentratedLikelihood(layout, network, data_shift)
    a1 = cl2.recover_alpha(0.0, zero_delta)
    ok = ~np.isnan(a0)
    assert np.allclose(a1[ok] - a0[ok], 3.0)
    # dense (D'D)^-1 D' computation
    rng = np.random.default_rng(2)
    delta = rng.normal(0, 0.3, cl.n_delta)
    ours = cl.recover_alpha(0.35, delta)
    dense = oracle.recover_alpha(layout, network, data, 0.35, delta)
    assert np.allclose(ours[ok], dense[ok], atol=1e-9)


def test_sigma2_strictly_positive(small_dataset):
    cl = workspace(small_dataset)
    for rho in np.linspace(-0.9, 0.9, 7):
        assert cl.profile(rho)[1] > 0.0


def test_loglik_invariant_to_unit_relabeling(small_dataset):
    layout, network, data, _ = small_dataset
    cl = ConcentratedLikelihood(layout, network, data)
    th = Theta(rho=0.3, lam=0.1, nu=0.2, gamma=0.8, beta=np.array([0.9]), sigma2=1.1)
    base = cl.loglik(th)

    rng = np.random.default_rng(5)
    perm = rng.permutation(layout.N)  # new id of old unit i is perm[i]
    inv = np.argsort(perm)
    d_new = layout.d[inv]
    layout2 = build_layout(d_new)
    # rebuild the adjacency with permuted ids
    import scipy.sparse as sp

    A_old = sp.coo_matrix(np.zeros((layout.N, layout.N)))
    # the rook adjacency used by the fixture
    from netpanel.dgp import most_square_grid
    from netpanel.weights import build_rook_adjacency

    A = build_rook_adjacency(*most_square_grid(layout.N)).A.tocoo()
    A_new = sp.csr_matrix((A.data, (perm[A.row], perm[A.col])), shape=A.shape)
    network2 = build_network(Adjacency(A_new), layout2)
    Y2, X2 = [], []
    for t in range(layout.T + 1):
        order = np.argsort(perm[layout.ids(t)])
        Y2.append(data.Y[t][order])
        X2.append(data.X[t][order])
    data2 = npn.PanelData.from_lists(Y2, X2, layout2)
    cl2 = ConcentratedLikelihood(layout2, network2, data2)
    assert abs(cl2.loglik(th) - base) < 1e-10


def test_singular_design_detection(small_dataset):
    layout, network, data, _ = small_dataset
    X_dup = [np.hstack([x, x]) for x in data.X]  # duplicated covariate
    data_dup = npn.PanelData.from_lists(list(data.Y), X_dup, layout)
    with pytest.raises(SingularDesign):
        ConcentratedLikelihood(layout, network, data_dup)
