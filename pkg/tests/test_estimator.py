import numpy as np
import pytest
from sklearn.base import clone

from clustered_stackelberg.estimator import CSV_COLUMNS, StackelbergSeeker, estimate_pseudo_gradient
from clustered_stackelberg.leaders import pseudo_gradient
from clustered_stackelberg.network import LeaderGraph
from clustered_stackelberg.oracle import solve_se_lq
from clustered_stackelberg.scenarios import build_cellular


def _single():
    return LeaderGraph.from_edges(1, [])


def test_sklearn_parameter_protocol():
    est = StackelbergSeeker(T=3, step="constant", beta=0.1)
    params = est.get_params()
    assert params["T"] == 3 and params["beta"] == 0.1
    other = clone(est).set_params(D=7)
    assert other.D == 7 and est.D == 50


def test_estimate_matches_exact_pseudo_gradient(lq3, path3):
    x = np.random.default_rng(0).normal(size=lq3.q)
    est = estimate_pseudo_gradient(lq3, path3, x, 200, 200, 200)
    exact = pseudo_gradient(x, lq3)
    assert np.linalg.norm(est - exact) <= 1e-9 * np.linalg.norm(exact)


def test_estimate_error_shrinks_with_budgets(lq3, path3):
    x = np.random.default_rng(1).normal(size=lq3.q)
    exact = pseudo_gradient(x, lq3)
    errs = [np.linalg.norm(estimate_pseudo_gradient(lq3, path3, x, n, n, 2 * n) - exact) for n in (2, 8, 32)]
    assert errs[0] > errs[1] > errs[2]


def test_scalar_game_converges(scalar_spec):
    sol = solve_se_lq(scalar_spec)
    est = StackelbergSeeker(T=5, D=5, B=1, step="constant", beta=0.3, x0=[2.0], oracle=sol, max_iter=500)
    est.fit(scalar_spec, _single())
    assert est.converged_ and not est.diverged_
    assert abs(est.x_[0]) < 1e-8
    assert est.trajectory_.rows[0]["rel_x_err"] == 1.0


def test_constant_step_converges_on_lq(lq2, k2):
    sol = solve_se_lq(lq2)
    c = lq2.constants
    est = StackelbergSeeker(T=20, D=20, B=40, step="constant", beta=c.m_theta / c.l_phi**2,
                            oracle=sol, max_iter=400).fit(lq2, k2)
    assert np.linalg.norm(est.x_ - sol.x) <= 1e-6 * max(1, np.linalg.norm(sol.x))
    assert est.rel_error_at(1e-3) is not None
    assert len(est.trajectory_.delta) == len(est.trajectory_)


def test_fit_is_deterministic(lq2, k2):
    kw = dict(T=4, D=4, B=4, step="diminishing", step_scale=0.2, step_decay=0.8, max_iter=30)
    a = StackelbergSeeker(**kw).fit(lq2, k2)
    b = StackelbergSeeker(**kw).fit(lq2, k2)
    assert np.array_equal(a.x_, b.x_)
    assert a.trajectory_.rows == b.trajectory_.rows


def test_divergence_is_flagged(scalar_spec):
    est = StackelbergSeeker(T=5, D=5, B=1, step="constant", beta=1.0, x0=[1.0], max_iter=200,
                            growth_guard=1e3).fit(scalar_spec, _single())
    assert est.diverged_ and not est.converged_
    assert est.n_iter_ < 200


def test_audit_stays_local(lq3, path3):
    est = StackelbergSeeker(T=2, D=2, B=3, max_iter=2, audit=True, step_scale=0.1).fit(lq3, path3)
    a = est.audit_
    assert a["oracle_calls"] > 0
    assert a["out_of_cluster_calls"] == 0 and a["non_neighbor_reads"] == 0


def test_untracked_run_has_empty_trajectory(lq2, k2):
    est = StackelbergSeeker(T=2, D=2, B=2, max_iter=3, track=False, step_scale=0.1).fit(lq2, k2)
    assert len(est.trajectory_) == 0


def test_csv_marks_missing_values(tmp_path, lq2, k2):
    est = StackelbergSeeker(T=2, D=2, B=2, max_iter=3, step_scale=0.1).fit(lq2, k2)
    path = tmp_path / "t.csv"
    est.trajectory_.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 4
    assert lines[1].split(",")[2] == "NA"


def test_parameter_validation(lq2, k2):
    with pytest.raises(ValueError):
        StackelbergSeeker(T=0).fit(lq2, k2)
    with pytest.raises(ValueError):
        StackelbergSeeker(barrier="other").fit(lq2, k2)
    with pytest.raises(ValueError):
        StackelbergSeeker().fit(lq2, LeaderGraph.from_edges(3, [(0, 1), (1, 2)]))
    with pytest.raises(ValueError):
        StackelbergSeeker(step="constant").fit(lq2, k2)


@pytest.mark.parametrize("mode", ["fixed", "sumt"])
def test_constrained_game_stays_feasible(mode):
    spec = build_cellular(rng_seed=0)
    graph = LeaderGraph.from_edges(2, [(0, 1)])
    est = StackelbergSeeker(T=5, D=10, B=10, max_iter=15, step_scale=0.05, theta0=100.0, barrier=mode)
    est.fit(spec, graph)
    assert np.all(np.isfinite(est.x_))
    for sl, S in zip(spec.x_slices, spec.leader_sets):
        assert S.contains(est.x_[sl])
    for sl, S in zip(spec.y_slices, spec.follower_sets):
        assert S.strictly_feasible(est.y_[sl])


def test_warm_start_composite_decreases(lq3, path3):
    sol = solve_se_lq(lq3)
    c = lq3.constants
    est = StackelbergSeeker(T=10, D=10, B=50, step="constant", beta=c.m_theta / c.l_phi**2,
                            oracle=sol, max_iter=40).fit(lq3, path3)
    delta = np.asarray(est.trajectory_.delta)
    assert delta.size == est.n_iter_
    assert np.all(np.diff(delta[3:]) <= 0)
    assert delta[-1] < 1e-12 * delta[0]
