"""Leader hypergradients and projected updates."""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .followers import barrier_inner_solve, best_response_exact, strictly_feasible_start
from .game import Unconstrained, project
from .sensitivity import exact_best_response_jacobian


@dataclass(frozen=True)
class StepSchedule:
    """Leader step sizes.

    ``kind="constant"`` uses ``beta`` at every iteration;
    ``kind="diminishing"`` uses ``scale * (k + 1) ** -decay`` with
    ``decay`` in ``(1/2, 1]``.
    """

    kind: str = "diminishing"
    beta: float = None
    scale: float = 1.0
    decay: float = 1.0

    def __post_init__(self):
        if self.kind == "constant":
            if self.beta is None or not self.beta > 0:
                raise ValueError("constant schedule needs beta > 0")
        elif self.kind == "diminishing":
            if not 0.5 < self.decay <= 1.0:
                raise ValueError("decay must lie in (1/2, 1]")
            if not 0 < self.scale <= 1.0:
                raise ValueError("scale must lie in (0, 1] to keep beta_k <= 1")
        else:
            raise ValueError(f"unknown schedule kind {self.kind!r}")

    @classmethod
    def constant(cls, beta):
        return cls("constant", beta=None if beta is None else float(beta))

    @classmethod
    def diminishing(cls, scale=1.0, decay=1.0):
        return cls("diminishing", scale=float(scale), decay=float(decay))

    @property
    def beta_max(self):
        return self.beta if self.kind == "constant" else self.scale


def step_at(schedule, k):
    if k < 0:
        raise ValueError("k must be >= 0")
    if schedule.kind == "constant":
        return schedule.beta
    return schedule.scale * (k + 1.0) ** (-schedule.decay)


def _cluster_order(spec):
    return np.concatenate([spec.cluster_y_index(h) for h in range(spec.m)])


def hypergradient_estimate(j, x, y_T, Z_hat_RU, spec):
    """``grad_{x^j} theta^j - E^j Zhat^{RU} grad_y theta^j`` at ``(x, y_T)``.

    ``Z_hat_RU`` is either the block-diagonal matrix of the per-cluster
    selections (shape ``(m q_j, p)``, clusters in ascending order) or the
    list of those blocks as returned by
    :func:`~clustered_stackelberg.consensus.extract_blocks`.
    """
    if isinstance(Z_hat_RU, (list, tuple)):
        Z_hat_RU = block_diag(*Z_hat_RU)
    q_j = spec.leader_dims[j]
    if Z_hat_RU.shape != (spec.m * q_j, spec.p):
        raise ValueError(f"Z_hat_RU has shape {Z_hat_RU.shape}, expected {(spec.m * q_j, spec.p)}")
    cost = spec.leader_costs[j]
    gy = cost.grad_y(x, y_T)[_cluster_order(spec)]
    E = np.tile(np.eye(q_j), (1, spec.m))
    return cost.grad_x(x, y_T) - E @ (Z_hat_RU @ gy)


def follower_solution(spec, x, theta=None):
    """``y*(x)`` (or the barrier path point ``y_theta(x)``), stacked."""
    ys = []
    for i, (cost, S) in enumerate(zip(spec.follower_costs, spec.follower_sets)):
        if isinstance(S, Unconstrained):
            ys.append(best_response_exact(cost, x))
        elif theta is None:
            ys.append(best_response_exact(cost, x, S))
        else:
            ys.append(barrier_inner_solve(cost, S, x, theta, strictly_feasible_start(S, x), tol=1e-12))
    return ys


def hypergradient_exact(j, x, spec, theta=None):
    """Exact ``grad_{x^j} Phi^j(x)`` with ``Phi^j(x) = theta^j(x, y*(x))``.

    Constrained games need ``theta``: the follower response is then the
    barrier solution ``y_theta(x)``, which is differentiable in ``x``.
    """
    ys = follower_solution(spec, x, theta)
    jac = exact_best_response_jacobian(spec, x, ys=ys, theta=theta)
    y = np.concatenate(ys)
    cost = spec.leader_costs[j]
    gy = cost.grad_y(x, y)
    xs = spec.x_slices[j]
    out = cost.grad_x(x, y).copy()
    for dyi, ysl in zip(jac, spec.y_slices):
        out += dyi[:, xs].T @ gy[ysl]
    return out


def pseudo_gradient(x, spec, theta=None):
    """Stacked exact hypergradients ``Psi(x)``."""
    return np.concatenate([hypergradient_exact(j, x, spec, theta) for j in range(spec.m)])


def implicit_cost(j, x, spec, theta=None):
    """``Phi^j(x) = theta^j(x, y*(x))``."""
    y = np.concatenate(follower_solution(spec, x, theta))
    return spec.leader_costs[j].value(x, y)


def projected_step(x_j, grad, beta, feasible_set):
    if not beta > 0:
        raise ValueError("beta must be > 0")
    return project(feasible_set, np.asarray(x_j, dtype=float) - beta * np.asarray(grad, dtype=float))


def affine_pseudo_gradient(spec, theta=None):
    """``(G, c)`` with ``Psi(x) = G x + c`` for linear-quadratic games.

    Obtained by probing ``Psi`` at ``0`` and the unit vectors.
    """
    q = spec.q
    c = pseudo_gradient(np.zeros(q), spec, theta)
    G = np.empty((q, q))
    for k in range(q):
        e = np.zeros(q)
        e[k] = 1.0
        G[:, k] = pseudo_gradient(e, spec, theta) - c
    return G, c


def monotonicity_constants(G):
    """``(m_theta, l_phi)``: smallest eigenvalue of ``sym(G)`` and ``||G||_2``."""
    sym = 0.5 * (G + G.T)
    return float(np.linalg.eigvalsh(sym)[0]), float(np.linalg.norm(G, 2))
