import numpy as np
import pytest

from clustered_stackelberg.game import (
    GameSpec,
    QuadraticFollowerCost,
    QuadraticLeaderCost,
    SmoothnessConstants,
    Unconstrained,
    WholeSpace,
)
from clustered_stackelberg.network import LeaderGraph
from clustered_stackelberg.scenarios import build_lq


def scalar_game(leader_set=None):
    """One leader, one follower: s = 1/2 (y - x)^2, theta = 1/2 x^2 + x y."""
    f = QuadraticFollowerCost([[1.0]], [0.0], [[-1.0]])
    L = QuadraticLeaderCost([[1.0, 1.0], [1.0, 0.0]], [0.0, 0.0], slice(0, 1), 1)
    consts = SmoothnessConstants(mu=1, l_theta0=1, l_theta1=1, l_s0=1, l_s1=1, l_s2=0, m_theta=3, l_phi=3)
    return GameSpec([1], [1], [0], [L], [f], [leader_set or WholeSpace(1)], [Unconstrained(1)], consts)


@pytest.fixture
def scalar_spec():
    return scalar_game()


@pytest.fixture(scope="session")
def lq2():
    """Two leaders, three followers, mixed dimensions."""
    return build_lq(cluster_sizes=(1, 2), leader_dims=(2, 1), follower_dims=(2, 1, 2), rng_seed=3)


@pytest.fixture(scope="session")
def lq3():
    return build_lq(cluster_sizes=(2, 2, 2), leader_dims=(2, 1, 2), follower_dims=(1, 2, 3, 1, 2, 1), rng_seed=1)


@pytest.fixture
def k2():
    return LeaderGraph.from_edges(2, [(0, 1)])


@pytest.fixture
def path3():
    return LeaderGraph.from_edges(3, [(0, 1), (1, 2)])


def fd_grad(f, v, h=1e-6):
    v = np.asarray(v, dtype=float)
    g = np.zeros_like(v)
    for k in range(v.size):
        e = np.zeros_like(v)
        e[k] = h
        g[k] = (f(v + e) - f(v - e)) / (2 * h)
    return g
