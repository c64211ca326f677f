import math

import numpy as np
import pytest

from clustered_stackelberg.game import SmoothnessConstants
from clustered_stackelberg.network import LeaderGraph, consensus_contraction_factor
from clustered_stackelberg.followers import default_step
from clustered_stackelberg.theory import (
    Budgets,
    CouplingData,
    ProblemSize,
    TheoryError,
    beta_star,
    build_M,
    conservative_rz,
    coupling_data,
    det_I_minus_M,
    gamma_const,
    iteration_bounds,
    spectral_radius,
    theory_report,
    xi_constants,
)

UNIT = SmoothnessConstants(mu=1, l_theta0=1, l_theta1=1, l_s0=1, l_s1=1, l_s2=1, m_theta=1, l_phi=1)
TOY = ProblemSize(1, 1, 1, 1)


def test_toy_constants():
    assert xi_constants(TOY, UNIT) == (12, 24, 6, 78, 42, 4, 72, 650)
    assert gamma_const(UNIT) == 0.5


def test_toy_iteration_bounds():
    b = iteration_bounds(TOY, UNIT, alpha=0.5, gamma=0.5, sigma2=0.5, r_z=1, beta_M=1)
    assert (b.T, b.D, b.B) == (17, 8, 8)


def test_bounds_reject_non_contractive_bases():
    with pytest.raises(TheoryError, match="alpha"):
        iteration_bounds(TOY, UNIT, 2.0, 0.5, 0.5, 1, 1)
    with pytest.raises(TheoryError, match="gamma"):
        iteration_bounds(ProblemSize(2, 2, 2, 2), UNIT, 0.5, 0.1, 0.5, 1, 1)
    with pytest.raises(TheoryError, match="sigma2"):
        iteration_bounds(TOY, UNIT, 0.5, 0.5, 0.5, 4, 1)
    with pytest.raises(ValueError):
        iteration_bounds(TOY, UNIT, 0.5, 0.5, 0.5, 1, 1, pi=1.0)


def test_exact_step_needs_one_iteration():
    # alpha = 1 / Gamma makes the follower base vanish
    b = iteration_bounds(TOY, UNIT, 1.0, 0.5, 0.5, 1, 1)
    assert b.T == 1


def test_bounds_grow_with_pi():
    lo = iteration_bounds(TOY, UNIT, 0.5, 0.5, 0.5, 1, 1, pi=1.5)
    hi = iteration_bounds(TOY, UNIT, 0.5, 0.5, 0.5, 1, 1, pi=10)
    assert hi.T >= lo.T and hi.D >= lo.D and hi.B >= lo.B


def _toy_data(C=(0.1, 0.1, 0.1)):
    return CouplingData(1, 1, 1.0, 1.0, 1.0, 1.0, xi_constants(TOY, UNIT), *C)


def test_M_at_zero_step():
    M = build_M(0.0, _toy_data())
    assert np.allclose(M[0], [1, 0, 0, 0])
    assert np.allclose(M[1:, 0], 0)
    assert np.all(M >= 0)
    assert abs(det_I_minus_M(0.0, _toy_data())) < 1e-12
    with pytest.raises(TheoryError):
        build_M(-0.1, _toy_data())


def test_M_entries_grow_with_beta_except_G():
    data = _toy_data()
    betas = np.linspace(0, data.beta_limit, 20)
    Ms = [build_M(b, data) for b in betas]
    for A, B in zip(Ms, Ms[1:]):
        assert np.all(B[1:] >= A[1:] - 1e-15)
        assert np.all(B[0, 1:] >= A[0, 1:] - 1e-15)


def test_no_root_when_coupling_too_strong():
    assert beta_star(_toy_data((1.0, 1.0, 1.0))) == math.inf


def test_conservative_rank():
    assert conservative_rz(ProblemSize(3, 6, 10, 4), 5) == min(3 * 6 * 5, 3 * 10)


@pytest.fixture(scope="module")
def lq3_theory(lq3):
    graph = LeaderGraph.from_edges(3, [(0, 1), (1, 2)])
    c = lq3.constants
    alpha, gamma = default_step(c.mu, c.l_s1), 1 / c.l_s1
    sigma2 = consensus_contraction_factor(graph)
    size = ProblemSize.from_spec(lq3)
    budgets = Budgets(10, 10, 50)
    data = coupling_data(size, c, alpha, gamma, sigma2, conservative_rz(size, lq3.q), budgets)
    return data, theory_report(lq3, alpha, gamma, sigma2, budgets)


def test_beta_star_is_a_root_below_the_limit(lq3_theory):
    data, rep = lq3_theory
    bs = rep.beta_s
    assert 0 < bs < data.beta_limit
    assert abs(det_I_minus_M(bs, data)) <= 1e-8
    assert abs(spectral_radius(build_M(bs, data)) - 1) <= 1e-6


def test_spectral_radius_below_one_under_beta_star(lq3_theory):
    data, rep = lq3_theory
    for frac in (0.1, 0.5, 0.9, 0.99):
        assert spectral_radius(build_M(frac * rep.beta_s, data)) < 1


def test_report_records_infeasible_pieces(lq3_theory):
    _, rep = lq3_theory
    assert rep.min_budgets == "infeasible"
    assert any("sigma2" in n for n in rep.notes)
    d = rep.to_dict()
    assert d["budgets"] == {"T": 10, "D": 10, "B": 50}
