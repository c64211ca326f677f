import numpy as np
import pytest

from clustered_stackelberg.consensus import (
    EstimatorBank,
    MessageAudit,
    assemble_leader_sensitivity,
    consensus_round,
    consensus_round_audited,
    extract_blocks,
    run_consensus,
)
from clustered_stackelberg.network import LeaderGraph, consensus_contraction_factor, modified_weight_matrix


def _truth(rng, m, q, dims):
    return [rng.normal(size=(q, p)) for p in dims[:m]]


def test_two_leaders_first_round(k2):
    bank = EstimatorBank.zeros(2, 1, [1, 1])
    truth = [np.ones((1, 1)), np.ones((1, 1))]
    out = consensus_round(bank, k2, truth)
    for E in out.estimates:
        assert np.allclose(E, 0.25)


def test_truth_is_a_fixed_point(path3):
    rng = np.random.default_rng(0)
    truth = _truth(rng, 3, 2, [1, 2, 3])
    bank = EstimatorBank([np.repeat(Z[None], 3, axis=0) for Z in truth])
    out = consensus_round(bank, path3, truth)
    assert out.error(truth) <= 1e-14


def test_zero_rounds_is_identity(path3):
    bank = EstimatorBank.zeros(3, 2, [1, 1, 1])
    truth = [np.ones((2, 1))] * 3
    out, errs = run_consensus(bank, path3, truth, 0, record=True)
    assert out is bank and len(errs) == 1
    with pytest.raises(ValueError):
        run_consensus(bank, path3, truth, -1)


def test_error_matrix_is_modified_weight_matrix(path3):
    rng = np.random.default_rng(1)
    truth = _truth(rng, 3, 2, [2, 1, 2])
    bank = EstimatorBank([rng.normal(size=(3, 2, p)) for p in (2, 1, 2)])
    out = consensus_round(bank, path3, truth)
    for h in range(3):
        err_in = bank.estimates[h] - truth[h][None]
        expect = np.einsum("jg,gab->jab", modified_weight_matrix(path3, h), err_in)
        assert np.allclose(out.estimates[h] - truth[h][None], expect)


def test_audited_round_matches_vectorised():
    graph = LeaderGraph.from_one_based(4, [[4, 1], [1, 2], [2, 3], [2, 4]])
    rng = np.random.default_rng(2)
    truth = _truth(rng, 4, 3, [2, 2, 1, 3])
    bank = EstimatorBank([rng.normal(size=(4, 3, p)) for p in (2, 2, 1, 3)])
    audit = MessageAudit()
    a = consensus_round(bank, graph, truth)
    b = consensus_round_audited(bank, graph, truth, audit)
    for Ea, Eb in zip(a.estimates, b.estimates):
        assert np.allclose(Ea, Eb, atol=1e-14)
    assert audit.non_neighbor_reads(graph) == []
    assert (2, 0) not in audit.truth_reads  # leaders 3 and 1 are not adjacent


def test_error_contracts_geometrically():
    graph = LeaderGraph.from_one_based(4, [[4, 1], [1, 2], [2, 3], [2, 4]])
    sigma2 = consensus_contraction_factor(graph)
    assert sigma2 < 1
    rng = np.random.default_rng(3)
    truth = _truth(rng, 4, 2, [1, 2, 2, 1])
    bank = EstimatorBank([rng.normal(size=(4, 2, p)) for p in (1, 2, 2, 1)])
    _, errs = run_consensus(bank, graph, truth, 60, record=True)
    for a, b in zip(errs, errs[1:]):
        assert b <= sigma2 * a * (1 + 1e-12) + 1e-300
    assert errs[-1] <= sigma2**60 * errs[0] * (1 + 1e-9)


def test_shape_mismatch_rejected(k2):
    bank = EstimatorBank.zeros(2, 1, [1, 1])
    with pytest.raises(ValueError):
        consensus_round(bank, k2, [np.ones((1, 2)), np.ones((1, 1))])
    with pytest.raises(ValueError):
        consensus_round(bank, k2, [np.ones((1, 1))])


def test_block_extraction_and_assembly(lq3):
    bank = EstimatorBank.for_spec(lq3)
    for h, E in enumerate(bank.estimates):
        E[:] = h + 1
    blocks = extract_blocks(bank, 2, lq3)
    assert [b.shape for b in blocks] == [(2, lq3.cluster_dim(h)) for h in range(3)]
    K = assemble_leader_sensitivity(lq3, blocks)
    for h in range(3):
        assert np.all(K[:, lq3.cluster_y_index(h)] == h + 1)
