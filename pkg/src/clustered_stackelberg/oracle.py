"""Ground truth for small linear-quadratic games."""

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_random_state
from .game import Rectangle
from .leaders import affine_pseudo_gradient, follower_solution, implicit_cost, monotonicity_constants, pseudo_gradient


class OracleError(RuntimeError):
    pass


@dataclass
class OracleSolution:
    x: np.ndarray
    y: np.ndarray
    iterations: int
    residual: float
    beta: float


def solve_se_lq(spec, x0=None, tol=1e-11, beta=None, max_iter=1_000_000):
    """Equilibrium of a linear-quadratic game by exact projected gradient.

    ``Psi(x) = G x + c`` is affine, so it is assembled once and iterated
    with ``beta = m_theta / l_phi^2`` unless given. Stops when
    ``||x_{k+1} - x_k|| <= tol * beta`` and then checks the fixed-point
    residual ``||x - Pi(x - beta Psi(x))||`` against ``10 tol`` using the
    full (non-affine-shortcut) pseudo-gradient.
    """
    if not spec.is_linear_quadratic:
        raise OracleError("solve_se_lq needs a linear-quadratic game with unconstrained followers")
    G, c = affine_pseudo_gradient(spec)
    m_theta, l_phi = monotonicity_constants(G)
    if m_theta <= 0:
        raise OracleError(f"pseudo-gradient is not strictly monotone (m_theta = {m_theta:.3g})")
    beta = m_theta / l_phi**2 if beta is None else beta
    x = spec.project_x(spec.initial_x() if x0 is None else np.asarray(x0, dtype=float))
    for k in range(1, max_iter + 1):
        x_new = spec.project_x(x - beta * (G @ x + c))
        step = np.linalg.norm(x_new - x)
        x = x_new
        if step <= tol * beta:
            break
    else:
        raise OracleError(f"no convergence after {max_iter} iterations; check monotonicity")
    res = float(np.linalg.norm(x - spec.project_x(x - beta * pseudo_gradient(x, spec))))
    scale = max(1.0, np.linalg.norm(x))
    if res > 10 * tol * scale:
        raise OracleError(f"fixed-point residual {res:.3g} exceeds {10 * tol * scale:.3g}")
    y = np.concatenate(follower_solution(spec, x))
    return OracleSolution(x, y, k, res, beta)


def fixed_point_residual(spec, x, beta, theta=None):
    return float(np.linalg.norm(x - spec.project_x(x - beta * pseudo_gradient(x, spec, theta))))


@dataclass
class EquilibriumReport:
    follower_margins: list
    leader_margins: list
    tol: float
    failures: list = field(default_factory=list)

    @property
    def followers_pass(self):
        return [mg <= self.tol for mg in self.follower_margins]

    @property
    def leaders_pass(self):
        return [mg >= -self.tol for mg in self.leader_margins]

    @property
    def passed(self):
        return all(self.followers_pass) and all(self.leaders_pass)


def _stationarity(cost, S, y, x):
    g = cost.grad(y, x)
    if isinstance(S, Rectangle):
        return float(np.linalg.norm(y - np.clip(y - g, S.lower, S.upper)))
    return float(np.linalg.norm(g))


def verify_equilibrium(spec, x, y, samples=100, tol=1e-8, radius=1.0, rng_seed=0):
    """Check follower optimality and sampled unilateral leader deviations.

    Follower margins are stationarity residuals (projected for rectangle
    sets). Leader margins are ``min_samples Phi^j(x') - Phi^j(x)`` over
    deviations ``x'`` that change only ``x^j``; a negative margin below
    ``-tol`` means a profitable deviation was found.
    """
    rng = check_random_state(rng_seed)
    x = np.asarray(x, dtype=float)
    ys = spec.split_y(np.asarray(y, dtype=float))
    f_marg = [_stationarity(c, S, yi, x) for c, S, yi in zip(spec.follower_costs, spec.follower_sets, ys)]
    l_marg = []
    for j, sl in enumerate(spec.x_slices):
        base = implicit_cost(j, x, spec)
        worst = np.inf
        S = spec.leader_sets[j]
        for _ in range(samples):
            scale = radius * rng.uniform(1e-3, 1.0)
            d = rng.normal(size=spec.leader_dims[j])
            xd = x.copy()
            xd[sl] = S.project(x[sl] + scale * d / np.linalg.norm(d))
            worst = min(worst, implicit_cost(j, xd, spec) - base)
        l_marg.append(float(worst))
    rep = EquilibriumReport(f_marg, l_marg, tol)
    rep.failures = [f"follower {i}" for i, ok in enumerate(rep.followers_pass) if not ok]
    rep.failures += [f"leader {j}" for j, ok in enumerate(rep.leaders_pass) if not ok]
    return rep
