import numpy as np
import pytest

from clustered_stackelberg.game import GameSpec, QuadraticLeaderCost
from clustered_stackelberg.leaders import affine_pseudo_gradient, pseudo_gradient
from clustered_stackelberg.oracle import OracleError, fixed_point_residual, solve_se_lq, verify_equilibrium
from clustered_stackelberg.scenarios import build_cellular

from conftest import scalar_game


def _shifted_scalar():
    """theta = 1/2 x^2 + x y - 3 x, so Phi = 3/2 x^2 - 3 x and x* = y* = 1."""
    base = scalar_game()
    L = QuadraticLeaderCost([[1.0, 1.0], [1.0, 0.0]], [-3.0, 0.0], slice(0, 1), 1)
    return GameSpec([1], [1], [0], [L], base.follower_costs, base.leader_sets, base.follower_sets, base.constants)


def test_scalar_equilibrium_at_origin(scalar_spec):
    sol = solve_se_lq(scalar_spec, x0=[5.0])
    assert np.allclose(sol.x, 0, atol=1e-10) and np.allclose(sol.y, 0, atol=1e-10)
    assert np.isclose(sol.beta, 3 / 9)


def test_shifted_scalar_equilibrium():
    sol = solve_se_lq(_shifted_scalar())
    assert np.allclose(sol.x, 1.0, atol=1e-10) and np.allclose(sol.y, 1.0, atol=1e-10)


@pytest.mark.parametrize("fixture", ["lq2", "lq3"])
def test_matches_linear_solve(fixture, request):
    spec = request.getfixturevalue(fixture)
    sol = solve_se_lq(spec)
    G, c = affine_pseudo_gradient(spec)
    assert np.allclose(sol.x, np.linalg.solve(G, -c), atol=1e-9)
    assert np.linalg.norm(pseudo_gradient(sol.x, spec)) <= 1e-8
    assert fixed_point_residual(spec, sol.x, sol.beta) <= 1e-9


def test_projected_equilibrium_on_box():
    from clustered_stackelberg.game import Box
    base = _shifted_scalar()
    spec = GameSpec([1], [1], [0], base.leader_costs, base.follower_costs, [Box([-1.0], [0.5])],
                    base.follower_sets, base.constants)
    sol = solve_se_lq(spec)
    assert np.allclose(sol.x, 0.5)
    assert verify_equilibrium(spec, sol.x, sol.y).passed


def test_rejects_constrained_followers():
    with pytest.raises(OracleError):
        solve_se_lq(build_cellular(rng_seed=0))


def test_rejects_non_monotone_game():
    base = scalar_game()
    L = QuadraticLeaderCost([[-5.0, 0.0], [0.0, 0.0]], [0.0, 0.0], slice(0, 1), 1)
    spec = GameSpec([1], [1], [0], [L], base.follower_costs, base.leader_sets, base.follower_sets, base.constants)
    with pytest.raises(OracleError, match="monotone"):
        solve_se_lq(spec)


def test_verification_accepts_solution_and_rejects_perturbation(lq3):
    sol = solve_se_lq(lq3)
    rep = verify_equilibrium(lq3, sol.x, sol.y)
    assert rep.passed, rep.failures
    bad = sol.x + 0.5
    rep = verify_equilibrium(lq3, bad, sol.y)
    assert not rep.passed
    assert any(f.startswith("follower") for f in rep.failures)
    assert any(f.startswith("leader") for f in rep.failures)
