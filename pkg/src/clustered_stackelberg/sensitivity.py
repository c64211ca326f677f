"""Best-response sensitivity: Jacobian-Hessian-inverse (J-H-I) blocks.

For a cluster ``h`` with followers ``P_h`` the library stores the J-H-I
object in *packed* form, a ``(q, p_h)`` matrix whose row block ``j`` and
column block ``i`` hold ``d_{x^j} d_{y^i} s^i  H_i^{-1}``. The expanded
block-diagonal layout ``J (I_m kron H)^{-1}`` carries exactly the same
numbers spread over a larger, mostly-zero matrix; :func:`dense_from_packed`
and :func:`packed_from_dense` convert between the two.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag, cho_factor, cho_solve

from ._validation import check_positive
from .followers import barrier_cross, barrier_hessian
from .game import GeneralConstraints, Unconstrained


class SensitivityWarning(UserWarning):
    pass


@dataclass
class ClusterSensitivity:
    """Local second-order data of one cluster.

    Attributes
    ----------
    h : int
        Cluster (= leader) id.
    followers : tuple of int
        Follower ids, ascending.
    J : ndarray, shape (q, p_h)
        Stacked cross derivatives ``d_x d_{y^i} s^i`` over the cluster.
    H_blocks : list of ndarray
        Per-follower Hessians ``d^2_{y^i} s^i``.
    A_blocks : list of ndarray or None
        Per-follower equality matrices (constrained mode only).
    """

    h: int
    followers: tuple
    J: np.ndarray
    H_blocks: list
    A_blocks: list = None
    warnings: list = field(default_factory=list)

    @property
    def H(self):
        return block_diag(*self.H_blocks)

    @property
    def dim(self):
        return self.J.shape[1]

    @property
    def projector(self):
        """Orthogonal projector onto ``null(A)``, or ``None`` without equalities."""
        if self.A_blocks is None or all(A is None for A in self.A_blocks):
            return None
        blocks = []
        for A, Hb in zip(self.A_blocks, self.H_blocks):
            n = Hb.shape[0]
            blocks.append(np.eye(n) if A is None else np.eye(n) - A.T @ np.linalg.solve(A @ A.T, A))
        return block_diag(*blocks)

    def lambda_max(self):
        return max(float(np.linalg.eigvalsh(Hb)[-1]) for Hb in self.H_blocks)

    def lambda_min(self):
        return min(float(np.linalg.eigvalsh(Hb)[0]) for Hb in self.H_blocks)


def assemble_cluster_blocks(spec, h, y_cluster, x, theta=None):
    """Collect cross derivatives and Hessians of the followers in cluster ``h``.

    ``y_cluster`` lists the follower decisions in ascending follower order.
    With ``theta`` given, constrained followers contribute the derivatives of
    the barrier objective ``theta * s + phi`` instead of ``s``.
    """
    members = spec.clusters[h]
    if len(y_cluster) != len(members):
        raise ValueError(f"cluster {h} has {len(members)} followers, got {len(y_cluster)} decisions")
    mu = spec.constants.mu
    J_cols, H_blocks, A_blocks, notes = [], [], [], []
    constrained = False
    for i, y in zip(members, y_cluster):
        cost, S = spec.follower_costs[i], spec.follower_sets[i]
        if theta is not None and not isinstance(S, Unconstrained):
            constrained = True
            J_cols.append(barrier_cross(cost, S, theta, y, x))
            H_blocks.append(barrier_hessian(cost, S, theta, y, x))
            A_blocks.append(S.A if isinstance(S, GeneralConstraints) else None)
        else:
            J_cols.append(cost.cross(y, x))
            Hi = cost.hess(y, x)
            lam = float(np.linalg.eigvalsh(Hi)[0])
            if lam < 0.5 * mu:
                msg = f"follower {i}: Hessian eigenvalue {lam:.3g} below mu/2 = {0.5 * mu:.3g}"
                notes.append(msg)
                warnings.warn(msg, SensitivityWarning, stacklevel=2)
            H_blocks.append(Hi)
            A_blocks.append(None)
    return ClusterSensitivity(h, members, np.hstack(J_cols), H_blocks,
                              A_blocks if constrained else None, notes)


def _cho_blocks(H_blocks):
    out = []
    for Hb in H_blocks:
        try:
            out.append(cho_factor(Hb))
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError("Hessian block is not positive definite") from exc
    return out


def _block_offsets(H_blocks):
    return np.cumsum([0] + [Hb.shape[0] for Hb in H_blocks])


def exact_jhi(J, H):
    """``J H^{-1}`` by Cholesky solves.

    ``H`` is either a full SPD matrix or a list of its diagonal blocks;
    with blocks each column block of ``J`` is solved separately.
    """
    J = np.atleast_2d(np.asarray(J, dtype=float))
    blocks = H if isinstance(H, (list, tuple)) else [np.atleast_2d(np.asarray(H, dtype=float))]
    off = _block_offsets(blocks)
    if off[-1] != J.shape[1]:
        raise ValueError("J and H have incompatible shapes")
    Z = np.empty_like(J)
    for (lo, hi), fac in zip(zip(off[:-1], off[1:]), _cho_blocks(blocks)):
        Z[:, lo:hi] = cho_solve(fac, J[:, lo:hi].T).T
    return Z


def reduced_hessian(H_R, A=None):
    """``H^{-1} - H^{-1}A'(A H^{-1} A')^{-1} A H^{-1}`` for SPD ``H_R``."""
    H_R = np.atleast_2d(np.asarray(H_R, dtype=float))
    fac = _cho_blocks([H_R])[0]
    Hinv = cho_solve(fac, np.eye(H_R.shape[0]))
    if A is None or np.size(A) == 0:
        return Hinv
    A = np.atleast_2d(np.asarray(A, dtype=float))
    S = A @ Hinv @ A.T
    if np.linalg.matrix_rank(S) < A.shape[0]:
        raise np.linalg.LinAlgError("A H^{-1} A' is rank deficient; A needs full row rank")
    HA = Hinv @ A.T
    out = Hinv - HA @ np.linalg.solve(S, HA.T)
    return 0.5 * (out + out.T)


def exact_cluster_jhi(sens):
    """Exact packed J-H-I of a cluster, reduced on ``null(A)`` when needed."""
    if sens.A_blocks is None:
        return exact_jhi(sens.J, sens.H_blocks)
    off = _block_offsets(sens.H_blocks)
    Z = np.empty_like(sens.J)
    for k, (Hb, A) in enumerate(zip(sens.H_blocks, sens.A_blocks)):
        Z[:, off[k]:off[k + 1]] = sens.J[:, off[k]:off[k + 1]] @ reduced_hessian(Hb, A)
    return Z


def auto_gamma(sens):
    """Step ``1 / lambda_max(H_h)`` computed from the cluster's own Hessian."""
    return 1.0 / sens.lambda_max()


def jhi_descent(sens, gamma, D, Z0=None, return_path=False):
    """``D`` steps of ``Z <- Z - gamma (Z H - J)``.

    When the cluster has equality constraints the residual is multiplied by
    the null-space projector ``P``, and the iteration converges to the
    reduced J-H-I ``J H~``. ``Z0`` defaults to zero.
    """
    check_positive(gamma, "gamma")
    if D < 0:
        raise ValueError("D must be >= 0")
    H = sens.H
    P = sens.projector
    Z = np.zeros_like(sens.J) if Z0 is None else np.array(Z0, dtype=float)
    if Z.shape != sens.J.shape:
        raise ValueError(f"Z0 has shape {Z.shape}, expected {sens.J.shape}")
    if P is not None:
        Z = Z @ P
    path = [Z.copy()] if return_path else None
    for _ in range(D):
        Y = Z @ H - sens.J
        if P is not None:
            Y = Y @ P
        Z = Z - gamma * Y
        if return_path:
            path.append(Z.copy())
    return (Z, path) if return_path else Z


def step_contraction(H, gamma):
    """Spectral norm of ``I - gamma H`` (equal to that of ``I - gamma (I kron H)``)."""
    eig = np.linalg.eigvalsh(np.atleast_2d(H))
    return float(np.max(np.abs(1.0 - gamma * eig)))


def gamma_interval(m, p_M, mu, l_s2):
    """Admissible range ``(1/mu - 1/(sqrt(m p_M) mu), 1/l_s2]`` for the J-H-I step.

    Returns ``(lower, upper, feasible)``; ``upper`` is ``inf`` when ``l_s2 = 0``.
    """
    lower = (1.0 - 1.0 / np.sqrt(m * p_M)) / mu
    upper = np.inf if l_s2 == 0 else 1.0 / l_s2
    return lower, upper, lower < upper


# ---------------------------------------------------------------------------
# dense (expanded) layout
# ---------------------------------------------------------------------------


def dense_from_packed(Z, leader_dims, follower_dims):
    """Spread a packed ``(q, p_h)`` block into the ``(n_h q, m p_h)`` layout.

    Leader ``j`` owns rows ``[n_h q_<j, n_h q_<=j)`` and columns
    ``[j p_h, (j+1) p_h)``; inside it follower ``i`` (cluster position
    ``r``) owns a ``q_j x p_i`` diagonal sub-block.
    """
    Z = np.asarray(Z, dtype=float)
    m, n = len(leader_dims), len(follower_dims)
    p_h = sum(follower_dims)
    q = sum(leader_dims)
    out = np.zeros((n * q, m * p_h))
    xo = np.cumsum([0] + list(leader_dims))
    yo = np.cumsum([0] + list(follower_dims))
    for j in range(m):
        qj = leader_dims[j]
        for r in range(n):
            rows = slice(n * xo[j] + r * qj, n * xo[j] + (r + 1) * qj)
            cols = slice(j * p_h + yo[r], j * p_h + yo[r + 1])
            out[rows, cols] = Z[xo[j]:xo[j + 1], yo[r]:yo[r + 1]]
    return out


def packed_from_dense(Zd, leader_dims, follower_dims):
    m, n = len(leader_dims), len(follower_dims)
    p_h = sum(follower_dims)
    xo = np.cumsum([0] + list(leader_dims))
    yo = np.cumsum([0] + list(follower_dims))
    out = np.zeros((xo[-1], p_h))
    for j in range(m):
        qj = leader_dims[j]
        for r in range(n):
            rows = slice(n * xo[j] + r * qj, n * xo[j] + (r + 1) * qj)
            cols = slice(j * p_h + yo[r], j * p_h + yo[r + 1])
            out[xo[j]:xo[j + 1], yo[r]:yo[r + 1]] = Zd[rows, cols]
    return out


# ---------------------------------------------------------------------------
# global oracle
# ---------------------------------------------------------------------------


def exact_best_response_jacobian(spec, x, ys=None, theta=None):
    """``d y^i / d x`` for every follower, each of shape ``(p_i, q)``.

    Unconstrained followers give ``-H_i^{-1} J_i'`` at ``y^{i,*}(x)``.
    Constrained followers (``theta`` required) differentiate the barrier
    solution: ``-H~_i J_{R,i}'`` with the reduced Hessian on ``null(A^i)``.
    ``ys`` optionally supplies the points to evaluate at.
    """
    from .followers import barrier_inner_solve, best_response_exact, strictly_feasible_start

    out = []
    for i, (cost, S) in enumerate(zip(spec.follower_costs, spec.follower_sets)):
        if isinstance(S, Unconstrained):
            y = best_response_exact(cost, x) if ys is None else ys[i]
            out.append(-exact_jhi(cost.cross(y, x), [cost.hess(y, x)]).T)
            continue
        if theta is None:
            raise ValueError(f"follower {i} is constrained; pass the barrier weight theta")
        y = ys[i] if ys is not None else barrier_inner_solve(
            cost, S, x, theta, strictly_feasible_start(S, x), tol=1e-12)
        A = S.A if isinstance(S, GeneralConstraints) else None
        Ht = reduced_hessian(barrier_hessian(cost, S, theta, y, x), A)
        out.append(-(barrier_cross(cost, S, theta, y, x) @ Ht).T)
    return out
