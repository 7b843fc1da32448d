import numpy as np
import pytest

from conftest import PAPER_RING_W, synthetic_dataset
from oracles import consensus_by_averaging, fit_log_slope, xi_blockwise

from ddppm.data import partition_rows
from ddppm.network import (
    Topology,
    build_network_operator,
    complete_mixing,
    consensus_apply,
    path_mixing,
    ring_mixing,
    validate_mixing_matrix,
)


class TestValidate:
    def test_paper_ring_valid_lambda2_half(self):
        # Frozen from the eigendecomposition of the circulant: {1, .5, .5, 0}.
        diag = validate_mixing_matrix(PAPER_RING_W)
        assert diag.ok
        assert abs(diag.lambda2 - 0.5) <= 1e-12

    def test_identity_fails_connectivity(self):
        diag = validate_mixing_matrix(np.eye(2))
        assert not diag.ok
        assert any("connected" in f for f in diag.failures())

    def test_row_but_not_column_stochastic(self):
        W = np.array([[0.5, 0.5], [1.0, 0.0]])
        diag = validate_mixing_matrix(W)
        assert not diag.col_stochastic
        assert any("column stochastic" in f for f in diag.failures())

    def test_negative_entry_fails(self):
        W = np.array([[1.2, -0.2], [-0.2, 1.2]])
        assert not validate_mixing_matrix(W).nonnegative

    def test_periodic_matrix_fails_lambda2(self):
        # Two-node swap: eigenvalues {1, -1}, modulus 1 -> periodic gossip.
        W = np.array([[0.0, 1.0], [1.0, 0.0]])
        diag = validate_mixing_matrix(W)
        assert diag.lambda2 >= 1.0 and not diag.ok

    def test_non_square_raises(self):
        with pytest.raises(ValueError, match="square"):
            validate_mixing_matrix(np.ones((2, 3)))

    def test_topology_create_rejects_invalid(self):
        with pytest.raises(ValueError, match="connected"):
            Topology.create(np.eye(2), c=1)


class TestGenerators:
    def test_ring4_matches_reference_matrix(self):
        np.testing.assert_allclose(ring_mixing(4), PAPER_RING_W)

    def test_ring2_valid(self):
        diag = validate_mixing_matrix(ring_mixing(2))
        assert diag.ok

    def test_complete_is_uniform(self):
        np.testing.assert_allclose(complete_mixing(3), np.full((3, 3), 1 / 3))

    @pytest.mark.parametrize("m", [1, 2, 3, 6])
    def test_path_metropolis_valid(self, m):
        assert validate_mixing_matrix(path_mixing(m)).ok


class TestConsensus:
    def test_perfect_mixing_gives_exact_sum(self):
        top = Topology.create(complete_mixing(3), c=1)
        z = [np.array([1.0, 2.0]), np.array([3.0, -1.0]), np.array([0.0, 5.0])]
        out = consensus_apply(top, z)
        total = sum(z)
        for o in out:
            np.testing.assert_allclose(o, total, atol=1e-12)

    def test_single_agent_identity(self):
        top = Topology.create(np.array([[1.0]]), c=3)
        z = [np.array([2.0, -7.0])]
        np.testing.assert_array_equal(consensus_apply(top, z)[0], z[0])

    def test_matches_explicit_averaging_oracle(self):
        top = Topology.create(PAPER_RING_W, c=5)
        rng = np.random.default_rng(3)
        z = [rng.normal(size=4) for _ in range(4)]
        expected = consensus_by_averaging(PAPER_RING_W, 5, z)
        out = consensus_apply(top, z)
        for o, e in zip(out, expected):
            np.testing.assert_allclose(o, e, atol=1e-12)

    @pytest.mark.parametrize("c", [1, 2, 4, 8])
    def test_error_bound_from_consensus_analysis(self, c):
        # max_i ||out_i - sum_j z_j|| <= m lambda2^c ||z - zbar||.
        top = Topology.create(PAPER_RING_W, c=c)
        rng = np.random.default_rng(c)
        for _ in range(20):
            z = rng.normal(size=(4, 3))
            out = np.asarray(consensus_apply(top, list(z)))
            total = z.sum(axis=0)
            err = np.linalg.norm(out - total, axis=1).max()
            spread = np.linalg.norm(z - z.mean(axis=0))
            assert err <= 4 * 0.5 ** c * spread + 1e-12

    def test_dimension_mismatch(self):
        top = Topology.create(complete_mixing(2), c=1)
        with pytest.raises(ValueError):
            consensus_apply(top, [np.ones(2), np.ones(3)])


class TestNetworkOperator:
    def test_single_agent_equals_gram(self):
        data = partition_rows(synthetic_dataset(6, 3, seed=1), 1)
        op = build_network_operator(data, Topology.create(np.array([[1.0]]), c=1))
        X = data.stacked()
        np.testing.assert_allclose(op.Xi, X @ X.T, atol=1e-12)
        assert op.consensus_gap <= 1e-12

    def test_blockwise_assembly_oracle(self):
        data = partition_rows(synthetic_dataset(7, 3, seed=2), 3)
        W = path_mixing(3)
        top = Topology.create(W, c=2)
        op = build_network_operator(data, top)
        expected = xi_blockwise(list(data.blocks), np.linalg.matrix_power(W, 2), 3)
        np.testing.assert_allclose(op.Xi, expected, atol=1e-12)

    def test_gap_decay_slope_matches_lambda2(self):
        # Regression of log ||Xi - X X^T||_2 on c: slope ~ log(1/2) on the
        # reference ring.
        data = partition_rows(synthetic_dataset(12, 4, seed=3), 4)
        cs = np.arange(2, 13, 2)
        gaps = [build_network_operator(data, Topology.create(PAPER_RING_W, c=int(c)))
                .consensus_gap for c in cs]
        slope = fit_log_slope(cs, gaps)
        assert abs(slope - np.log(0.5)) <= 0.10 * abs(np.log(0.5))

    def test_spectrum_descending_and_symmetric(self):
        data = partition_rows(synthetic_dataset(9, 3, seed=4), 3)
        op = build_network_operator(data, Topology.create(ring_mixing(3), c=4))
        assert np.all(np.diff(op.mu) <= 1e-12)
        np.testing.assert_allclose(op.Xi, op.Xi.T, atol=1e-10)

    def test_mismatched_m_raises(self):
        data = partition_rows(synthetic_dataset(8, 3, seed=5), 2)
        with pytest.raises(ValueError, match="m="):
            build_network_operator(data, Topology.create(PAPER_RING_W, c=1))

    def test_assumption3_flag_reported(self):
        data = partition_rows(synthetic_dataset(12, 4, seed=6), 4)
        op = build_network_operator(data, Topology.create(PAPER_RING_W, c=20))
        assert op.assumption3_ok  # deep consensus: gap tiny vs eigengap
