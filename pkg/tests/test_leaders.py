import numpy as np
import pytest

from clustered_stackelberg.consensus import assemble_leader_sensitivity
from clustered_stackelberg.game import Box
from clustered_stackelberg.leaders import (
    StepSchedule,
    affine_pseudo_gradient,
    follower_solution,
    hypergradient_estimate,
    hypergradient_exact,
    implicit_cost,
    monotonicity_constants,
    projected_step,
    pseudo_gradient,
    step_at,
)
from clustered_stackelberg.sensitivity import assemble_cluster_blocks, exact_cluster_jhi

from conftest import fd_grad


def test_scalar_hypergradient_is_three_x(scalar_spec):
    for x0 in (-2.0, 0.0, 0.7):
        x = np.array([x0])
        assert np.allclose(hypergradient_exact(0, x, scalar_spec), 3 * x0)
        # estimate with exact follower response and exact J-H-I block
        est = hypergradient_estimate(0, x, x.copy(), [np.array([[-1.0]])], scalar_spec)
        assert np.allclose(est, 3 * x0)


def test_estimate_with_zero_sensitivity_is_partial_gradient(scalar_spec):
    x = np.array([0.5])
    est = hypergradient_estimate(0, x, x.copy(), [np.zeros((1, 1))], scalar_spec)
    assert np.allclose(est, 2 * 0.5)


def test_estimate_rejects_wrong_shape(scalar_spec):
    with pytest.raises(ValueError):
        hypergradient_estimate(0, np.zeros(1), np.zeros(1), np.zeros((2, 1)), scalar_spec)


@pytest.mark.parametrize("fixture", ["lq2", "lq3"])
def test_exact_hypergradient_matches_finite_differences(fixture, request):
    spec = request.getfixturevalue(fixture)
    x = np.random.default_rng(0).normal(size=spec.q)
    for j, sl in enumerate(spec.x_slices):
        def phi(u, j=j, sl=sl):
            z = x.copy()
            z[sl] = u
            return implicit_cost(j, z, spec)
        assert np.allclose(hypergradient_exact(j, x, spec), fd_grad(phi, x[sl]), atol=1e-6)


def test_estimate_with_exact_inputs_equals_exact(lq3):
    x = np.random.default_rng(1).normal(size=lq3.q)
    ys = follower_solution(lq3, x)
    y = np.concatenate(ys)
    Zs = []
    for h, members in enumerate(lq3.clusters):
        sens = assemble_cluster_blocks(lq3, h, [ys[i] for i in members], x)
        Zs.append(exact_cluster_jhi(sens))
    for j, sl in enumerate(lq3.x_slices):
        blocks = [Z[sl] for Z in Zs]
        est = hypergradient_estimate(j, x, y, blocks, lq3)
        assert np.allclose(est, hypergradient_exact(j, x, lq3), atol=1e-10)
        assert assemble_leader_sensitivity(lq3, blocks).shape == (sl.stop - sl.start, lq3.p)


def test_affine_pseudo_gradient_reproduces_psi(lq3):
    G, c = affine_pseudo_gradient(lq3)
    x = np.random.default_rng(2).normal(size=lq3.q)
    assert np.allclose(G @ x + c, pseudo_gradient(x, lq3))
    m_theta, l_phi = monotonicity_constants(G)
    assert 0 < m_theta <= l_phi


def test_schedules():
    const = StepSchedule.constant(0.3)
    assert step_at(const, 0) == step_at(const, 100) == 0.3
    dim = StepSchedule.diminishing(0.8, 0.6)
    steps = [step_at(dim, k) for k in range(50)]
    assert steps[0] == 0.8 and all(b < a for a, b in zip(steps, steps[1:]))
    assert dim.beta_max == 0.8 and const.beta_max == 0.3
    for bad in (dict(kind="constant"), dict(kind="diminishing", decay=0.5),
                dict(kind="diminishing", scale=1.5), dict(kind="other")):
        with pytest.raises(ValueError):
            StepSchedule(**bad)
    with pytest.raises(ValueError):
        step_at(const, -1)


def test_projected_step():
    box = Box([-1.0, -1.0], [1.0, 1.0])
    assert np.allclose(projected_step([0.0, 0.0], [4.0, -1.0], 0.5, box), [-1.0, 0.5])
    with pytest.raises(ValueError):
        projected_step([0.0], [1.0], 0.0, box)
