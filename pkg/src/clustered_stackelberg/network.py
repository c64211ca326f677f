"""Leader communication graph, Metropolis weights and injection gains."""

from dataclasses import dataclass

import numpy as np

from ._validation import check_matrix


class GraphError(ValueError):
    pass


def _normalize_edges(m, edges):
    out = set()
    for a, b in edges:
        a, b = int(a), int(b)
        if a == b:
            raise GraphError(f"self-loop ({a}, {b}) is not an edge")
        if not (0 <= a < m and 0 <= b < m):
            raise GraphError(f"edge ({a}, {b}) outside 0..{m - 1}")
        out.add((min(a, b), max(a, b)))
    return frozenset(out)


def is_connected(m, edges):
    parent = list(range(m))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in edges:
        parent[find(a)] = find(b)
    return len({find(a) for a in range(m)}) == 1


def metropolis_weights(m, edges):
    """Metropolis-Hastings weights ``w_jg = 1 / (1 + max(d_j, d_g))``.

    The diagonal absorbs the remainder so that ``W`` is symmetric and
    doubly stochastic with a positive diagonal.
    """
    edges = _normalize_edges(m, edges)
    if not is_connected(m, edges):
        raise GraphError("leader graph is not connected")
    deg = np.zeros(m, dtype=int)
    for a, b in edges:
        deg[a] += 1
        deg[b] += 1
    W = np.zeros((m, m))
    for a, b in edges:
        W[a, b] = W[b, a] = 1.0 / (1.0 + max(deg[a], deg[b]))
    W[np.diag_indices(m)] = 1.0 - W.sum(axis=1)
    return W


def midpoint_gains(W):
    """Default injection gains: half of the admissible bound ``w_jj / w_jh``.

    Entries with ``w_jh = 0`` are zero (no injection from cluster ``h``).
    """
    W = np.asarray(W, dtype=float)
    xi = np.zeros_like(W)
    mask = W > 0
    jj = np.broadcast_to(np.diag(W)[:, None], W.shape)
    xi[mask] = 0.5 * jj[mask] / W[mask]
    return xi


@dataclass(frozen=True)
class LeaderGraph:
    """Undirected leader graph with weights ``W`` and gains ``xi``.

    ``xi[j, h]`` is the gain leader ``j`` applies to the truth of cluster
    ``h``; it only matters where ``W[j, h] > 0``.
    """

    m: int
    edges: frozenset
    W: np.ndarray
    xi: np.ndarray

    @classmethod
    def from_edges(cls, m, edges, xi=None):
        edges = _normalize_edges(m, edges)
        W = metropolis_weights(m, edges)
        xi = midpoint_gains(W) if xi is None else check_matrix(xi, (m, m), "xi")
        graph = cls(m, edges, W, xi)
        graph.validate()
        return graph

    @classmethod
    def from_one_based(cls, m, edges, xi=None):
        return cls.from_edges(m, [(a - 1, b - 1) for a, b in edges], xi)

    def validate(self, tol=1e-12):
        W = self.W
        m = self.m
        if W.shape != (m, m):
            raise GraphError("W has the wrong shape")
        if not np.allclose(W, W.T, atol=tol):
            raise GraphError("W must be symmetric")
        if not (np.allclose(W.sum(axis=0), 1, atol=tol) and np.allclose(W.sum(axis=1), 1, atol=tol)):
            raise GraphError("W must be doubly stochastic")
        if np.any(np.diag(W) <= 0):
            raise GraphError("W needs a positive diagonal")
        pattern = {(a, b) for a in range(m) for b in range(a + 1, m) if W[a, b] > 0}
        if pattern != set(self.edges) or np.any(W < 0):
            raise GraphError("support of W must match the edge set")
        if not is_connected(m, self.edges):
            raise GraphError("leader graph is not connected")
        check_gains(W, self.xi)

    def neighbors(self, j):
        """Leaders whose estimates ``j`` reads in a round (including ``j``)."""
        return tuple(int(g) for g in np.flatnonzero(self.W[j] > 0))

    def laplacian(self):
        return np.diag(self.W.sum(axis=1)) - self.W


def check_gains(W, xi):
    """Check ``0 < xi[j, h] < w_jj / w_jh`` wherever ``w_jh != 0``."""
    W = np.asarray(W, dtype=float)
    xi = np.asarray(xi, dtype=float)
    for j, h in zip(*np.nonzero(W > 0)):
        bound = W[j, j] / W[j, h]
        if not 0.0 < xi[j, h] < bound:
            raise GraphError(f"gain xi[{j},{h}] = {xi[j, h]:.6g} outside (0, {bound:.6g})")


def modified_weight_matrix(graph, h, xi=None):
    """``W`` with each diagonal entry ``r`` lowered by ``xi[r, h] * w_rh``.

    Passing ``xi`` explicitly skips the admissibility check, which is how
    the degenerate ``xi = 0`` case can be inspected.
    """
    W = graph.W
    if xi is None:
        xi = graph.xi
        check_gains(W, xi)
    Wt = W.copy()
    Wt[np.diag_indices(graph.m)] -= np.asarray(xi)[:, h] * W[:, h]
    return Wt


def consensus_contraction_factor(graph):
    """``max_h rho(W~^h)``; raises if some ``W~^h`` is not contractive."""
    worst = 0.0
    for h in range(graph.m):
        Wt = modified_weight_matrix(graph, h)
        rho = float(np.max(np.abs(np.linalg.eigvalsh(Wt))))
        if rho >= 1.0:
            raise GraphError(f"rho(W~^{h}) = {rho:.6g} >= 1; check the gains xi[:, {h}]")
        worst = max(worst, rho)
    return worst
