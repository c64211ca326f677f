"""Leader-network estimation of the cluster J-H-I blocks.

Every leader ``j`` keeps an estimate ``Zhat[h][j]`` of every cluster's
packed J-H-I block. One synchronous round updates all of them from the
previous round's snapshot::

    Zhat[h][j] <- sum_g w_jg Zhat[h][g] + xi_jh w_jh (Z_h - Zhat[h][j])

The truth ``Z_h`` enters only through the ``w_jh``-weighted correction, so
leaders that are not adjacent to ``h`` never read it.
"""

from collections import Counter
from dataclasses import dataclass

import numpy as np


@dataclass
class EstimatorBank:
    """Per-cluster stacks of estimates, ``estimates[h]`` of shape ``(m, q, p_h)``."""

    estimates: list

    @classmethod
    def zeros(cls, m, q, cluster_dims):
        return cls([np.zeros((m, q, p_h)) for p_h in cluster_dims])

    @classmethod
    def for_spec(cls, spec):
        return cls.zeros(spec.m, spec.q, [spec.cluster_dim(h) for h in range(spec.m)])

    @property
    def m(self):
        return self.estimates[0].shape[0]

    def copy(self):
        return EstimatorBank([E.copy() for E in self.estimates])

    def error(self, truth):
        """Frobenius norm of the stacked estimation error against ``truth``."""
        return float(np.sqrt(sum(np.sum((E - Z[None]) ** 2) for E, Z in zip(self.estimates, truth))))


def _check(bank, graph, truth):
    if len(truth) != len(bank.estimates):
        raise ValueError("one truth block per cluster expected")
    for h, (E, Z) in enumerate(zip(bank.estimates, truth)):
        if E.shape[0] != graph.m or E.shape[1:] != np.shape(Z):
            raise ValueError(f"cluster {h}: estimate shape {E.shape[1:]} vs truth {np.shape(Z)}")


def consensus_round(bank, graph, truth):
    """One synchronous round; returns a new bank."""
    _check(bank, graph, truth)
    W, xi = graph.W, graph.xi
    out = []
    for h, (E, Z) in enumerate(zip(bank.estimates, truth)):
        gain = xi[:, h] * W[:, h]
        new = np.einsum("jg,gab->jab", W, E)
        nz = gain != 0
        new[nz] += gain[nz, None, None] * (np.asarray(Z)[None] - E[nz])
        out.append(new)
    return EstimatorBank(out)


class MessageAudit:
    """Counts which estimates and truths each leader reads."""

    def __init__(self):
        self.reads = Counter()        # (reader, owner) estimate reads
        self.truth_reads = Counter()  # (reader, cluster) truth reads

    def non_neighbor_reads(self, graph):
        bad = [(j, g) for (j, g) in self.reads if graph.W[j, g] == 0]
        bad += [(j, h) for (j, h) in self.truth_reads if graph.W[j, h] == 0]
        return bad


def consensus_round_audited(bank, graph, truth, audit):
    """Loop form of :func:`consensus_round` that records every read.

    Each leader only iterates over its own neighbour list, so a read outside
    the graph would show up in ``audit``.
    """
    _check(bank, graph, truth)
    W, xi = graph.W, graph.xi
    out = [np.empty_like(E) for E in bank.estimates]
    for j in range(graph.m):
        nbrs = graph.neighbors(j)
        for h, E in enumerate(bank.estimates):
            acc = np.zeros(E.shape[1:])
            for g in nbrs:
                audit.reads[(j, g)] += 1
                acc += W[j, g] * E[g]
            if h in nbrs:
                audit.truth_reads[(j, h)] += 1
                acc += xi[j, h] * W[j, h] * (truth[h] - E[j])
            out[h][j] = acc
    return EstimatorBank(out)


def run_consensus(bank, graph, truth, B, record=False, audit=None):
    """Apply ``B`` rounds. With ``record`` also return the per-round errors.

    The error list starts with the error of the input bank, so it has
    ``B + 1`` entries.
    """
    if B < 0:
        raise ValueError("B must be >= 0")
    errors = [bank.error(truth)] if record else None
    for _ in range(B):
        bank = consensus_round(bank, graph, truth) if audit is None else \
            consensus_round_audited(bank, graph, truth, audit)
        if record:
            errors.append(bank.error(truth))
    return (bank, errors) if record else bank


def extract_blocks(bank, j, spec):
    """Leader ``j``'s rows of every cluster estimate, as a list over ``h``.

    Entry ``h`` has shape ``(q_j, p_h)``; ``scipy.linalg.block_diag`` of the
    list is the block-diagonal selection used by the hypergradient.
    """
    rows = spec.x_slices[j]
    return [E[j, rows, :] for E in bank.estimates]


def assemble_leader_sensitivity(spec, blocks):
    """Combine per-cluster blocks into one ``(q_j, p)`` map in follower order."""
    q_j = blocks[0].shape[0]
    K = np.zeros((q_j, spec.p))
    for h, blk in enumerate(blocks):
        K[:, spec.cluster_y_index(h)] = blk
    return K
