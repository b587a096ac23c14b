import numpy as np
import pytest

import netpanel as npn
from netpanel.panel import Theta

THETA0 = Theta(rho=0.5, lam=0.2, nu=0.1, gamma=1.0, beta=np.array([1.0]), sigma2=1.0)


def make_dataset(N=30, T=8, seed=42, target_up=0.3, theta0=THETA0, error_dist="normal"):
    cfg = npn.DgpConfig(
        N=N, T=T, theta0=theta0, target_up=target_up, seed=seed, error_dist=error_dist
    )
    return npn.simulate_dataset(cfg)


@pytest.fixture(scope="session")
def small_dataset():
    """N=30, T=8 unbalanced panel with all channels active."""
    return make_dataset()


@pytest.fixture(scope="session")
def tiny_dataset():
    """N=6, T=3 panel used by the dense-oracle comparisons."""
    return make_dataset(N=6, T=3, seed=5)


@pytest.fixture(scope="session")
def theta0():
    return THETA0
