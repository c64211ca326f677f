"""Follower best-response approximation.

Unconstrained followers run plain gradient descent from a warm start.
Constrained followers solve the logarithmic-barrier problem
``min theta * s(y, x) + phi(y, x)  s.t.  A y = b`` with a feasible-start
Newton method, and SUMT drives ``theta`` upward geometrically.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize

from ._validation import check_positive, check_vector
from .game import GeneralConstraints, Rectangle, Unconstrained


class InfeasibleStartError(ValueError):
    pass


class LineSearchError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass
class FollowerState:
    """Mutable per-follower state kept across outer iterations."""

    y: np.ndarray
    theta: float = 1.0
    chi: float = 10.0
    eps: float = 1e-3

    def __post_init__(self):
        self.y = check_vector(self.y, name="y").copy()
        check_positive(self.theta, "theta")
        if self.chi <= 1:
            raise ValueError("barrier growth factor chi must be > 1")
        check_positive(self.eps, "eps")


def default_step(mu, l_s1):
    """Largest step with a guaranteed contraction: ``2 / (mu + l_s1)``."""
    return 2.0 / (mu + l_s1)


def contraction_rate(alpha, mu, l_s1):
    """Per-step factor ``1 - 2 alpha Gamma`` of the squared distance."""
    gamma = mu * l_s1 / (mu + l_s1)
    return 1.0 - 2.0 * alpha * gamma


def inner_gd(cost, x, y0, T, alpha, return_path=False):
    """``T`` gradient steps on ``s(., x)`` started from ``y0``.

    Returns ``y_T`` (and the list ``[y_0, ..., y_T]`` when requested).
    """
    if T < 0:
        raise ValueError("T must be >= 0")
    check_positive(alpha, "alpha")
    y = check_vector(y0, cost.dim, "y0").copy()
    path = [y.copy()] if return_path else None
    for t in range(1, T + 1):
        g = cost.grad(y, x)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite follower gradient at iterate {t - 1}")
        y = y - alpha * g
        if return_path:
            path.append(y.copy())
    return (y, path) if return_path else y


def _newton_unconstrained(cost, x, y, tol, max_iter=200):
    for _ in range(max_iter):
        g = cost.grad(y, x)
        if np.linalg.norm(g) <= tol * (1 + np.linalg.norm(y)):
            return y
        y = y - np.linalg.solve(cost.hess(y, x), g)
    raise ConvergenceError("best response did not converge")


def _box_best_response(cost, x, lower, upper, tol):
    if cost.dim == 1:
        def dg(t):
            return float(cost.grad(np.array([t]), x)[0])
        lo, hi = float(lower[0]), float(upper[0])
        if dg(lo) >= 0:
            return np.array([lo])
        if dg(hi) <= 0:
            return np.array([hi])
        return np.array([brentq(dg, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)])
    res = minimize(lambda y: cost.value(y, x), 0.5 * (lower + upper),
                   jac=lambda y: cost.grad(y, x), method="L-BFGS-B",
                   bounds=list(zip(lower, upper)), options={"ftol": 1e-15, "gtol": tol, "maxiter": 10000})
    if not res.success:
        raise ConvergenceError(f"box-constrained best response failed: {res.message}")
    return res.x


def best_response_exact(cost, x, constraints=None, tol=1e-12):
    """Reference best response ``argmin_y s(y, x)`` over the follower set.

    Quadratic unconstrained followers use the closed form; other
    unconstrained costs use Newton's method; rectangle sets use a bracketed
    root (1-D) or L-BFGS-B. General constraint sets are not supported here.
    """
    if constraints is None or isinstance(constraints, Unconstrained):
        if cost.is_quadratic:
            return cost.best_response(x)
        return _newton_unconstrained(cost, x, np.zeros(cost.dim), tol)
    if isinstance(constraints, Rectangle):
        return _box_best_response(cost, x, constraints.lower, constraints.upper, tol)
    raise NotImplementedError("exact best response only for unconstrained or rectangle followers")


# ---------------------------------------------------------------------------
# barrier method
# ---------------------------------------------------------------------------


def _barrier_parts(cost, constraints, theta, y, x):
    f = theta * cost.value(y, x) + constraints.barrier(y, x)
    g = theta * cost.grad(y, x) + constraints.barrier_grad(y, x)
    H = theta * cost.hess(y, x) + constraints.barrier_hess(y, x)
    return f, g, H


def _null_projector(A, dim):
    if A is None:
        return np.eye(dim)
    return np.eye(dim) - A.T @ np.linalg.solve(A @ A.T, A)


def barrier_hessian(cost, constraints, theta, y, x):
    """Hessian of ``theta * s + phi`` w.r.t. ``y``."""
    return theta * cost.hess(y, x) + constraints.barrier_hess(y, x)


def barrier_cross(cost, constraints, theta, y, x):
    """``d/dx d/dy`` of ``theta * s + phi``, shape ``(q, p_i)``."""
    return theta * cost.cross(y, x) + constraints.barrier_cross(y, x)


def barrier_inner_solve(cost, constraints, x, theta, y_start, tol=1e-10, max_iter=200,
                        method="newton", return_path=False):
    """Minimize ``theta * s(y, x) + phi(y, x)`` subject to ``A y = b``.

    Newton steps are computed from the KKT system so that every iterate
    stays on the affine set; a halving line search (Armijo constant 1e-4)
    keeps iterates strictly inside the inequality constraints. Stops when
    the reduced gradient norm is at most ``tol * max(1, theta)``.
    ``method="gd"`` uses gradient steps instead (rectangle sets only).
    """
    check_positive(theta, "theta")
    y = check_vector(y_start, cost.dim, "y_start").copy()
    A = getattr(constraints, "A", None)
    if not constraints.strictly_feasible(y, x):
        raise InfeasibleStartError("barrier solve needs a strictly feasible start")
    if A is not None and np.linalg.norm(A @ y - constraints.b) > 1e-8:
        raise InfeasibleStartError("start point violates A y = b")
    if method == "gd" and A is not None:
        raise ValueError("gradient method only supports sets without equality constraints")
    P = _null_projector(A, cost.dim)
    scale = max(1.0, theta)
    path = [y.copy()] if return_path else None
    f, g, H = _barrier_parts(cost, constraints, theta, y, x)
    for _ in range(max_iter if method == "newton" else 50 * max_iter):
        rg = P @ g
        if np.linalg.norm(rg) <= tol * scale:
            break
        if method == "newton":
            if A is None:
                d = -np.linalg.solve(H, g)
            else:
                k = A.shape[0]
                K = np.block([[H, A.T], [A, np.zeros((k, k))]])
                d = np.linalg.solve(K, np.concatenate([-g, np.zeros(k)]))[: cost.dim]
        else:
            d = -g / np.linalg.eigvalsh(H)[-1]
        slope = float(g @ d)
        if slope >= 0:
            break
        t = 1.0
        slack = 16 * np.finfo(float).eps * max(1.0, abs(f))
        while True:
            y_new = y + t * d
            if constraints.strictly_feasible(y_new, x):
                f_new = theta * cost.value(y_new, x) + constraints.barrier(y_new, x)
                if np.isfinite(f_new) and f_new <= f + 1e-4 * t * slope + slack:
                    break
            t *= 0.5
            if t < 1e-20:
                if -slope <= 1e-20 * scale:
                    t = 0.0
                    break
                raise LineSearchError("line search could not keep the iterate strictly feasible")
        if t == 0.0:
            break
        if A is not None:
            # re-project onto the affine set against round-off drift
            y_new = y_new - A.T @ np.linalg.solve(A @ A.T, A @ y_new - constraints.b)
        y = y_new
        f, g, H = _barrier_parts(cost, constraints, theta, y, x)
        if return_path:
            path.append(y.copy())
    return (y, path) if return_path else y


@dataclass
class SumtResult:
    y: np.ndarray
    theta: float
    thetas: list = field(default_factory=list)

    @property
    def num_solves(self):
        return len(self.thetas)


def sumt(cost, constraints, x, state, tol=1e-10, method="newton", T=None, alpha=None):
    """Sequential unconstrained minimization with a growing barrier weight.

    Each round solves the barrier problem from the previous round's point,
    and the loop stops right after the first solve with
    ``theta > num_inequalities / eps``. Unconstrained followers delegate to
    :func:`inner_gd` with budget ``T`` and step ``alpha``.
    """
    if isinstance(constraints, Unconstrained) or constraints is None:
        if T is None or alpha is None:
            raise ValueError("unconstrained follower needs T and alpha")
        y = inner_gd(cost, x, state.y, T, alpha)
        return SumtResult(y, state.theta, [])
    s_tilde = constraints.num_inequalities
    theta = state.theta
    y = state.y
    thetas = []
    while True:
        y = barrier_inner_solve(cost, constraints, x, theta, y, tol=tol, method=method)
        thetas.append(theta)
        if theta > s_tilde / state.eps:
            break
        theta *= state.chi
    return SumtResult(y, theta, thetas)


def strictly_feasible_start(constraints, x=None):
    """A strictly feasible point for the sets built in this package."""
    if isinstance(constraints, Rectangle):
        return constraints.interior_point(x)
    if isinstance(constraints, Unconstrained):
        return np.zeros(constraints.dim)
    if isinstance(constraints, GeneralConstraints) and hasattr(constraints, "start"):
        return np.asarray(constraints.start, dtype=float)
    raise ValueError("no default strictly feasible point for this constraint set")
