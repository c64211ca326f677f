"""Game data model: cost oracles, feasible sets, and the assumption checker.

Conventions used throughout the package:

* leaders are indexed ``0..m-1`` and followers ``0..N-1``;
* ``x`` is the stacked leader decision (length ``q``), ``y`` the stacked
  follower decision (length ``p``), both in ascending id order;
* cross-derivatives ``d/dx d/dy s^i`` are returned with shape ``(q, p_i)``
  (rows follow ``x``), so that the rows belonging to leader ``j`` form the
  block ``d/dx^j d/dy^i s^i``.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._validation import (
    DimensionError,
    check_matrix,
    check_positive,
    check_random_state,
    check_symmetric,
    check_vector,
)


# ---------------------------------------------------------------------------
# Feasible sets of the leaders
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WholeSpace:
    dim: int

    def project(self, v):
        return check_vector(v, self.dim, "point").copy()

    def contains(self, v, tol=0.0):
        return check_vector(v, self.dim, "point").shape[0] == self.dim

    def sample(self, rng, scale=1.0):
        return scale * rng.standard_normal(self.dim)

    def center(self):
        return np.zeros(self.dim)


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = check_vector(self.lower, name="lower")
        upper = check_vector(self.upper, lower.shape[0], "upper")
        if np.any(lower > upper):
            raise ValueError("box requires lower <= upper componentwise")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self):
        return self.lower.shape[0]

    def project(self, v):
        return np.clip(check_vector(v, self.dim, "point"), self.lower, self.upper)

    def contains(self, v, tol=0.0):
        v = check_vector(v, self.dim, "point")
        return bool(np.all(v >= self.lower - tol) and np.all(v <= self.upper + tol))

    def sample(self, rng, scale=1.0):
        lo = np.where(np.isfinite(self.lower), self.lower, -scale)
        hi = np.where(np.isfinite(self.upper), self.upper, scale)
        return rng.uniform(lo, hi)

    def center(self):
        lo = np.where(np.isfinite(self.lower), self.lower, 0.0)
        hi = np.where(np.isfinite(self.upper), self.upper, 0.0)
        return 0.5 * (lo + hi)


@dataclass(frozen=True)
class Ball:
    center_point: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center_point", check_vector(self.center_point, name="center"))
        object.__setattr__(self, "radius", check_positive(self.radius, "radius"))

    @property
    def dim(self):
        return self.center_point.shape[0]

    def project(self, v):
        v = check_vector(v, self.dim, "point")
        d = v - self.center_point
        nrm = np.linalg.norm(d)
        if nrm <= self.radius:
            return v.copy()
        return self.center_point + d * (self.radius / nrm)

    def contains(self, v, tol=0.0):
        v = check_vector(v, self.dim, "point")
        return bool(np.linalg.norm(v - self.center_point) <= self.radius + tol)

    def sample(self, rng, scale=1.0):
        d = rng.standard_normal(self.dim)
        d /= max(np.linalg.norm(d), 1e-300)
        r = self.radius * rng.uniform() ** (1.0 / self.dim)
        return self.center_point + r * d

    def center(self):
        return self.center_point.copy()


def project(feasible_set, v):
    """Euclidean projection of ``v`` onto ``feasible_set``.

    Raises ``DimensionError`` when ``v`` does not match the set dimension.
    """
    return feasible_set.project(v)


# ---------------------------------------------------------------------------
# Follower constraint sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Unconstrained:
    dim: int

    num_inequalities = 0
    A = None

    def strictly_feasible(self, y, x=None, tol=0.0):
        return True


@dataclass(frozen=True)
class Rectangle:
    """Box ``lower < y < upper`` handled with a logarithmic barrier."""

    lower: np.ndarray
    upper: np.ndarray

    A = None

    def __post_init__(self):
        lower = check_vector(self.lower, name="lower")
        upper = check_vector(self.upper, lower.shape[0], "upper")
        if np.any(lower >= upper):
            raise ValueError("rectangle requires lower < upper strictly")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self):
        return self.lower.shape[0]

    @property
    def num_inequalities(self):
        return 2 * self.dim

    def strictly_feasible(self, y, x=None, tol=0.0):
        y = np.asarray(y, dtype=float)
        return bool(np.all(y > self.lower) and np.all(y < self.upper))

    def barrier(self, y, x=None):
        return -np.sum(np.log(y - self.lower)) - np.sum(np.log(self.upper - y))

    def barrier_grad(self, y, x=None):
        return -1.0 / (y - self.lower) + 1.0 / (self.upper - y)

    def barrier_hess(self, y, x=None):
        return np.diag(1.0 / (y - self.lower) ** 2 + 1.0 / (self.upper - y) ** 2)

    def barrier_cross(self, y, x):
        return np.zeros((np.asarray(x).shape[0], self.dim))

    def interior_point(self, x=None):
        return 0.5 * (self.lower + self.upper)


@dataclass(frozen=True)
class InequalityConstraint:
    """A convex constraint ``h(y, x) <= 0`` with its derivatives.

    ``grad_x`` and ``cross`` may be omitted when ``h`` does not depend on
    ``x``; ``cross(y, x)`` returns ``d/dx d/dy h`` with shape ``(q, p_i)``.
    """

    fun: Callable
    grad_y: Callable
    hess_y: Callable
    grad_x: Optional[Callable] = None
    cross: Optional[Callable] = None


@dataclass(frozen=True)
class GeneralConstraints:
    """``A y = b`` together with convex inequalities ``h_r(y, x) <= 0``."""

    dim: int
    A: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    inequalities: Sequence[InequalityConstraint] = ()

    def __post_init__(self):
        if self.A is not None:
            A = check_matrix(self.A, (None, self.dim), "A")
            b = check_vector(self.b, A.shape[0], "b")
            if np.linalg.matrix_rank(A) < A.shape[0]:
                raise ValueError("equality matrix A must have full row rank")
            object.__setattr__(self, "A", A)
            object.__setattr__(self, "b", b)
        object.__setattr__(self, "inequalities", tuple(self.inequalities))

    @property
    def num_inequalities(self):
        return len(self.inequalities)

    def values(self, y, x):
        return np.array([c.fun(y, x) for c in self.inequalities])

    def strictly_feasible(self, y, x=None, tol=1e-8):
        if self.A is not None and np.linalg.norm(self.A @ y - self.b) > tol:
            return False
        return bool(np.all(self.values(y, x) < 0)) if self.inequalities else True

    def barrier(self, y, x):
        h = self.values(y, x)
        return -np.sum(np.log(-h))

    def barrier_grad(self, y, x):
        g = np.zeros(self.dim)
        for c in self.inequalities:
            g -= c.grad_y(y, x) / c.fun(y, x)
        return g

    def barrier_hess(self, y, x):
        H = np.zeros((self.dim, self.dim))
        for c in self.inequalities:
            h = c.fun(y, x)
            gy = c.grad_y(y, x)
            H += np.outer(gy, gy) / h**2 - c.hess_y(y, x) / h
        return H

    def barrier_cross(self, y, x):
        q = np.asarray(x).shape[0]
        K = np.zeros((q, self.dim))
        for c in self.inequalities:
            if c.grad_x is None and c.cross is None:
                continue
            h = c.fun(y, x)
            if c.grad_x is not None:
                K += np.outer(c.grad_x(y, x), c.grad_y(y, x)) / h**2
            if c.cross is not None:
                K -= c.cross(y, x) / h
        return K


# ---------------------------------------------------------------------------
# Cost oracles
# ---------------------------------------------------------------------------


class FollowerCost:
    """Interface of a follower cost ``s^i(y^i, x)``.

    Subclasses provide ``value``, ``grad`` (w.r.t. ``y^i``), ``hess``
    (w.r.t. ``y^i``) and ``cross`` (``d/dx d/dy``, shape ``(q, p_i)``).
    """

    is_quadratic = False

    def __init__(self, dim, leader_dim):
        self.dim = int(dim)
        self.leader_dim = int(leader_dim)

    def value(self, y, x):
        raise NotImplementedError

    def grad(self, y, x):
        raise NotImplementedError

    def hess(self, y, x):
        raise NotImplementedError

    def cross(self, y, x):
        raise NotImplementedError

    def cross_block(self, j_slice, y, x):
        """The block ``d/dx^j d/dy^i s^i`` for leader rows ``j_slice``."""
        return self.cross(y, x)[j_slice]


class QuadraticFollowerCost(FollowerCost):
    """``s(y, x) = 1/2 y'My - g'y + (Cx + c)'y + const``."""

    is_quadratic = True

    def __init__(self, M, g, C, c=None, const=0.0):
        M = check_symmetric(M, name="M")
        p = M.shape[0]
        C = check_matrix(C, (p, None), "C")
        super().__init__(p, C.shape[1])
        self.M = M
        self.g = check_vector(g, p, "g")
        self.C = C
        self.c = np.zeros(p) if c is None else check_vector(c, p, "c")
        self.const = float(const)

    def value(self, y, x):
        return 0.5 * y @ self.M @ y - self.g @ y + (self.C @ x + self.c) @ y + self.const

    def grad(self, y, x):
        return self.M @ y - self.g + self.C @ x + self.c

    def hess(self, y, x):
        return self.M

    def cross(self, y, x):
        return self.C.T

    def best_response(self, x):
        return np.linalg.solve(self.M, self.g - self.C @ x - self.c)


class FollowerCostFunctions(FollowerCost):
    """Follower cost assembled from user callables."""

    def __init__(self, dim, leader_dim, value, grad, hess, cross):
        super().__init__(dim, leader_dim)
        self._value, self._grad, self._hess, self._cross = value, grad, hess, cross

    def value(self, y, x):
        return float(self._value(y, x))

    def grad(self, y, x):
        return np.asarray(self._grad(y, x), dtype=float).reshape(self.dim)

    def hess(self, y, x):
        return np.asarray(self._hess(y, x), dtype=float).reshape(self.dim, self.dim)

    def cross(self, y, x):
        return np.asarray(self._cross(y, x), dtype=float).reshape(self.leader_dim, self.dim)


class LeaderCost:
    """Interface of a leader cost ``theta^j(x, y)``.

    ``grad_x`` returns the gradient w.r.t. the leader's own block ``x^j``;
    ``grad_y`` the gradient w.r.t. the full follower vector ``y``.
    """

    is_quadratic = False

    def value(self, x, y):
        raise NotImplementedError

    def grad_x(self, x, y):
        raise NotImplementedError

    def grad_y(self, x, y):
        raise NotImplementedError


class QuadraticLeaderCost(LeaderCost):
    """``theta(x, y) = 1/2 z'Qz + c'z + const`` with ``z = (x, y)``."""

    is_quadratic = True

    def __init__(self, Q, c, own, q, const=0.0):
        Q = check_symmetric(Q, name="Q")
        self.Q = Q
        self.c = check_vector(c, Q.shape[0], "c")
        self.own = own
        self.q = int(q)
        self.const = float(const)

    def _z(self, x, y):
        return np.concatenate([x, y])

    def value(self, x, y):
        z = self._z(x, y)
        return 0.5 * z @ self.Q @ z + self.c @ z + self.const

    def grad_z(self, x, y):
        return self.Q @ self._z(x, y) + self.c

    def grad_x(self, x, y):
        return self.grad_z(x, y)[self.own]

    def grad_y(self, x, y):
        return self.grad_z(x, y)[self.q:]


class LeaderCostFunctions(LeaderCost):
    def __init__(self, value, grad_x, grad_y):
        self._value, self._grad_x, self._grad_y = value, grad_x, grad_y

    def value(self, x, y):
        return float(self._value(x, y))

    def grad_x(self, x, y):
        return np.asarray(self._grad_x(x, y), dtype=float)

    def grad_y(self, x, y):
        return np.asarray(self._grad_y(x, y), dtype=float)


# ---------------------------------------------------------------------------
# Constants and the game itself
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SmoothnessConstants:
    """Declared regularity constants of the game.

    ``l_s2`` (Hessian Lipschitz constant) may be zero, which is the exact
    value for quadratic followers. ``m_theta`` and ``l_phi`` are only
    needed by the constant-step analysis.
    """

    mu: float
    l_theta0: float
    l_theta1: float
    l_s0: float
    l_s1: float
    l_s2: float
    m_theta: Optional[float] = None
    l_phi: Optional[float] = None

    def __post_init__(self):
        for name in ("mu", "l_theta0", "l_theta1", "l_s0", "l_s1"):
            check_positive(getattr(self, name), name)
        check_positive(self.l_s2, "l_s2", strict=False)
        for name in ("m_theta", "l_phi"):
            if getattr(self, name) is not None:
                check_positive(getattr(self, name), name)

    @property
    def ell(self):
        return max(self.l_theta1, self.l_s1)

    @property
    def kappa(self):
        return self.ell / self.mu

    def replace(self, **changes):
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data.update(changes)
        return SmoothnessConstants(**data)


def _slices(dims):
    out, start = [], 0
    for d in dims:
        out.append(slice(start, start + d))
        start += d
    return out


@dataclass(frozen=True)
class GameSpec:
    """A multi-leader multi-follower game with clustered information.

    ``cluster_of[i]`` is the leader that follower ``i`` reports to.
    """

    leader_dims: Sequence[int]
    follower_dims: Sequence[int]
    cluster_of: Sequence[int]
    leader_costs: Sequence[LeaderCost]
    follower_costs: Sequence[FollowerCost]
    leader_sets: Sequence[object]
    follower_sets: Sequence[object]
    constants: SmoothnessConstants
    name: str = "game"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for attr in ("leader_dims", "follower_dims", "cluster_of"):
            object.__setattr__(self, attr, tuple(int(v) for v in getattr(self, attr)))
        for attr in ("leader_costs", "follower_costs", "leader_sets", "follower_sets"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))
        m, N = len(self.leader_dims), len(self.follower_dims)
        if m < 1 or N < 1:
            raise ValueError("need at least one leader and one follower")
        if any(d < 1 for d in self.leader_dims + self.follower_dims):
            raise ValueError("all dimensions must be >= 1")
        if len(self.cluster_of) != N:
            raise ValueError("cluster_of must assign every follower")
        if any(not 0 <= h < m for h in self.cluster_of):
            raise ValueError("cluster_of refers to an unknown leader")
        if set(self.cluster_of) != set(range(m)):
            raise ValueError("every leader needs a non-empty cluster")
        if len(self.leader_costs) != m or len(self.leader_sets) != m:
            raise ValueError("one cost and one feasible set per leader")
        if len(self.follower_costs) != N or len(self.follower_sets) != N:
            raise ValueError("one cost and one constraint set per follower")
        q = sum(self.leader_dims)
        for j, (S, d) in enumerate(zip(self.leader_sets, self.leader_dims)):
            if S.dim != d:
                raise DimensionError(f"leader {j}: feasible set has dim {S.dim}, expected {d}")
        for i, (cost, d) in enumerate(zip(self.follower_costs, self.follower_dims)):
            if cost.dim != d or cost.leader_dim != q:
                raise DimensionError(f"follower {i}: cost oracle dimensions do not match")
        for i, (S, d) in enumerate(zip(self.follower_sets, self.follower_dims)):
            if S.dim != d:
                raise DimensionError(f"follower {i}: constraint set has dim {S.dim}, expected {d}")

    # sizes -------------------------------------------------------------
    @property
    def m(self):
        return len(self.leader_dims)

    @property
    def N(self):
        return len(self.follower_dims)

    @property
    def q(self):
        return sum(self.leader_dims)

    @property
    def p(self):
        return sum(self.follower_dims)

    @property
    def x_slices(self):
        return _slices(self.leader_dims)

    @property
    def y_slices(self):
        return _slices(self.follower_dims)

    @property
    def clusters(self):
        """Follower ids of each cluster, ascending."""
        return [tuple(i for i in range(self.N) if self.cluster_of[i] == h) for h in range(self.m)]

    def cluster_dim(self, h):
        return sum(self.follower_dims[i] for i in self.clusters[h])

    def cluster_y_index(self, h):
        """Indices into the stacked ``y`` of the followers in cluster ``h``."""
        ys = self.y_slices
        parts = [np.arange(ys[i].start, ys[i].stop) for i in self.clusters[h]]
        return np.concatenate(parts)

    @property
    def is_linear_quadratic(self):
        return (all(c.is_quadratic for c in self.leader_costs)
                and all(c.is_quadratic for c in self.follower_costs)
                and all(isinstance(S, Unconstrained) for S in self.follower_sets))

    @property
    def is_constrained(self):
        return any(not isinstance(S, Unconstrained) for S in self.follower_sets)

    def split_y(self, y):
        return [y[s] for s in self.y_slices]

    def initial_x(self):
        return np.concatenate([S.center() for S in self.leader_sets])

    def project_x(self, x):
        return np.concatenate([S.project(x[s]) for S, s in zip(self.leader_sets, self.x_slices)])


# ---------------------------------------------------------------------------
# Assumption spot-checks
# ---------------------------------------------------------------------------


@dataclass
class AssumptionReport:
    min_hessian_eig: float
    max_grad_lipschitz_ratio: float
    max_leader_lipschitz_ratio: float
    max_hessian_lipschitz_ratio: float
    violations: list

    @property
    def passed(self):
        return not self.violations


def _sample_follower_point(spec, i, rng, scale):
    S = spec.follower_sets[i]
    if isinstance(S, Rectangle):
        lo, hi = S.lower, S.upper
        pad = 1e-3 * (hi - lo)
        return rng.uniform(lo + pad, hi - pad)
    return scale * rng.standard_normal(spec.follower_dims[i])


def _sample_x(spec, rng, scale):
    return np.concatenate([S.sample(rng, scale) for S in spec.leader_sets])


def validate_assumptions(spec, samples=50, rng_seed=0, tol=1e-8, scale=1.0):
    """Sample-based check of strong convexity and Lipschitz constants.

    Never raises on a violation; violations are listed in the report.
    """
    rng = check_random_state(rng_seed)
    c = spec.constants
    min_eig = np.inf
    grad_ratio = hess_ratio = lead_ratio = 0.0
    for _ in range(samples):
        x1, x2 = _sample_x(spec, rng, scale), _sample_x(spec, rng, scale)
        for i, cost in enumerate(spec.follower_costs):
            y1 = _sample_follower_point(spec, i, rng, scale)
            y2 = _sample_follower_point(spec, i, rng, scale)
            H1 = cost.hess(y1, x1)
            min_eig = min(min_eig, float(np.linalg.eigvalsh(0.5 * (H1 + H1.T))[0]))
            dist = np.sqrt(np.sum((y1 - y2) ** 2) + np.sum((x1 - x2) ** 2))
            if dist == 0:
                continue
            # only grad_y is observable through the oracle interface
            dg = np.linalg.norm(cost.grad(y1, x1) - cost.grad(y2, x2))
            grad_ratio = max(grad_ratio, dg / dist)
            dH = np.linalg.norm(H1 - cost.hess(y2, x2), 2)
            hess_ratio = max(hess_ratio, dH / dist)
        y1 = np.concatenate([_sample_follower_point(spec, i, rng, scale) for i in range(spec.N)])
        y2 = np.concatenate([_sample_follower_point(spec, i, rng, scale) for i in range(spec.N)])
        for j, (cost, sl) in enumerate(zip(spec.leader_costs, spec.x_slices)):
            xb = x1.copy()
            xb[sl] = x2[sl]
            dist = np.sqrt(np.sum((x1[sl] - x2[sl]) ** 2) + np.sum((y1 - y2) ** 2))
            if dist == 0:
                continue
            g1 = np.concatenate([cost.grad_x(x1, y1), cost.grad_y(x1, y1)])
            g2 = np.concatenate([cost.grad_x(xb, y2), cost.grad_y(xb, y2)])
            lead_ratio = max(lead_ratio, np.linalg.norm(g1 - g2) / dist)

    violations = []
    if min_eig < c.mu - tol:
        violations.append(f"strong convexity: sampled eigenvalue {min_eig:.6g} < mu = {c.mu:.6g}")
    if grad_ratio > c.l_s1 * (1 + tol) + tol:
        violations.append(f"follower gradient Lipschitz ratio {grad_ratio:.6g} > l_s1 = {c.l_s1:.6g}")
    if hess_ratio > c.l_s2 * (1 + tol) + tol:
        violations.append(f"follower Hessian Lipschitz ratio {hess_ratio:.6g} > l_s2 = {c.l_s2:.6g}")
    if lead_ratio > c.l_theta1 * (1 + tol) + tol:
        violations.append(f"leader gradient Lipschitz ratio {lead_ratio:.6g} > l_theta1 = {c.l_theta1:.6g}")
    return AssumptionReport(min_eig, grad_ratio, lead_ratio, hess_ratio, violations)
