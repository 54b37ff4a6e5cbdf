"""Tests for the bayesnet module."""

import numpy as np
import pytest

from betaboost.bayesnet import (
    BayesNet,
    Dag,
    EmpiricalCounts,
    SeparatingCollection,
    SeparatingKind,
    conditional_pair_table,
    count_dags,
    edge_strength,
    enumerate_dags,
    fit_network,
    read_counts,
    read_network,
    sample,
    separating_sets,
    two_node_network,
    write_counts,
    write_network,
)
from betaboost.config import Config
from betaboost.errors import DomainError, TableFormatError
from betaboost.simplex import mutual_information_cells


@pytest.fixture
def chain():
    """0 -> 1 -> 2 with fairly strong dependencies."""
    dag = Dag.from_edges(3, [(0, 1), (1, 2)])
    return BayesNet(dag, (np.array([0.4]), np.array([0.2, 0.8]), np.array([0.3, 0.9])))


class TestDag:
    def test_parent_sets_are_normalized(self):
        dag = Dag(3, ((), (2, 0, 0), ()))
        assert dag.parents(1) == (0, 2)
        assert dag.num_edges == 2
        assert dag.max_in_degree == 2

    def test_rejects_cycle(self):
        with pytest.raises(DomainError):
            Dag(2, ((1,), (0,)))

    def test_rejects_self_loop(self):
        with pytest.raises(DomainError):
            Dag(2, ((0,), ()))

    def test_rejects_unknown_parent(self):
        with pytest.raises(DomainError):
            Dag(2, ((), (5,)))

    def test_skeleton_ignores_direction(self):
        forward = Dag.from_edges(2, [(0, 1)])
        backward = Dag.from_edges(2, [(1, 0)])
        assert forward != backward
        assert forward.skeleton() == backward.skeleton()
        assert forward.adjacent(1, 0)

    def test_topological_order(self, chain):
        order = chain.dag.topological_order()
        assert order.index(0) < order.index(1) < order.index(2)

    def test_num_parameters(self, chain):
        assert chain.dag.num_parameters() == 1 + 2 + 2


class TestEnumeration:
    @pytest.mark.parametrize("n,expected", [(1, 1), (2, 3), (3, 25), (4, 543)])
    def test_counts_all_dags(self, n, expected):
        dags = enumerate_dags(n)
        assert len(dags) == expected == count_dags(n)
        assert len({d.parent_sets for d in dags}) == expected

    def test_robinson_recurrence(self):
        assert count_dags(5) == 29281

    def test_in_degree_bound(self):
        dags = enumerate_dags(4, 1)
        assert all(d.max_in_degree <= 1 for d in dags)
        assert len(dags) < 543

    def test_zero_bound_gives_empty_graph(self):
        assert enumerate_dags(3, 0) == [Dag.empty(3)]

    def test_exhaustive_limit(self):
        with pytest.raises(DomainError):
            enumerate_dags(6)


class TestNetworks:
    def test_cpt_shape(self):
        with pytest.raises(DomainError):
            BayesNet(Dag.from_edges(2, [(0, 1)]), (np.array([0.5]), np.array([0.5])))

    def test_cpt_range(self):
        with pytest.raises(DomainError):
            BayesNet(Dag.empty(1), (np.array([1.5]),))

    def test_joint_sums_to_one(self, chain):
        joint = chain.joint()
        assert joint.shape == (2, 2, 2)
        assert joint.sum() == pytest.approx(1.0, abs=1e-12)
        assert joint[1, 1, 1] == pytest.approx(0.4 * 0.8 * 0.9)

    @pytest.mark.parametrize("tau", [0.0, 0.01, 0.1])
    def test_two_node_network_level(self, tau):
        bn = two_node_network(tau)
        joint = bn.joint()
        np.testing.assert_allclose(joint.sum(axis=0), [0.5, 0.5])
        assert float(mutual_information_cells(joint)) == pytest.approx(tau, abs=1e-10)
        assert bn.dag.num_edges == (0 if tau == 0 else 1)

    def test_sampling_is_seeded(self, chain):
        first = sample(chain, 500, seed=3)
        second = sample(chain, 500, seed=3)
        assert first.N == 500
        np.testing.assert_array_equal(first.counts, second.counts)

    def test_sampling_follows_joint(self, chain):
        counts = sample(chain, 200_000, seed=0)
        np.testing.assert_allclose(counts.distribution(), chain.joint(), atol=0.005)

    def test_sampling_domain(self, chain):
        with pytest.raises(DomainError):
            sample(chain, 0)

    def test_fit_recovers_cpts(self, chain):
        fitted = fit_network(sample(chain, 100_000, seed=1), chain.dag)
        for got, want in zip(fitted.cpts, chain.cpts):
            np.testing.assert_allclose(got, want, atol=0.01)

    def test_fit_unobserved_parents(self):
        counts = EmpiricalCounts(np.array([[5, 3], [0, 0]]))
        fitted = fit_network(counts, Dag.from_edges(2, [(0, 1)]))
        np.testing.assert_allclose(fitted.cpts[1], [3 / 8, 0.5])


class TestEmpiricalCounts:
    def test_from_samples(self):
        counts = EmpiricalCounts.from_samples(np.array([[0, 1], [0, 1], [1, 1]]))
        np.testing.assert_array_equal(counts.counts, [[0, 2], [0, 1]])
        assert counts.n == 2
        assert counts.N == 3

    def test_rejects_bad_shape(self):
        with pytest.raises(DomainError):
            EmpiricalCounts(np.zeros((2, 3)))

    def test_conditional_pair_table(self, chain):
        counts = sample(chain, 1000, seed=2)
        table = conditional_pair_table(counts, 0, 2, (1,), (1,))
        assert table.cells.sum() == pytest.approx(1.0)

    def test_conditional_pair_table_empty_stratum(self):
        arr = np.zeros((2, 2, 2), dtype=int)
        arr[:, :, 0] = 1
        assert conditional_pair_table(EmpiricalCounts(arr), 0, 1, (2,), (1,)) is None


class TestSeparatingSets:
    def test_all_subsets(self):
        dag = Dag.empty(4)
        coll = SeparatingCollection(SeparatingKind.ALL_SUBSETS, d=1)
        assert separating_sets(coll, dag, 0, 1) == [(), (2,), (3,)]

    def test_parent_based(self, chain):
        coll = SeparatingCollection(SeparatingKind.PARENT_BASED, d=2)
        assert separating_sets(coll, chain.dag, 0, 2) == [(), (1,)]

    def test_from_config(self):
        coll = SeparatingCollection.from_config(Config(collection="parent-based", d=1))
        assert coll.kind is SeparatingKind.PARENT_BASED
        assert coll.d == 1

    def test_edge_strength_of_two_node_network(self):
        bn = two_node_network(0.1)
        strength = edge_strength(bn.joint(), bn.dag, SeparatingCollection())
        assert strength == pytest.approx(0.1, abs=1e-10)

    def test_edge_strength_of_empty_graph(self):
        bn = two_node_network(0.0)
        assert edge_strength(bn.joint(), bn.dag, SeparatingCollection()) == np.inf


class TestFileFormats:
    def test_network_round_trip(self, chain, tmp_path):
        path = tmp_path / "chain.net"
        write_network(chain, path)
        loaded = read_network(path)
        assert loaded.dag == chain.dag
        for got, want in zip(loaded.cpts, chain.cpts):
            np.testing.assert_array_equal(got, want)

    def test_network_format(self, tmp_path):
        path = tmp_path / "pair.net"
        write_network(two_node_network(0.0), path)
        lines = path.read_text().splitlines()
        assert lines[:3] == ["2 0", "0:", "1:"]
        assert lines[3] == "0 - 0.5"

    def test_network_degree_exceeds_header(self, tmp_path):
        path = tmp_path / "bad.net"
        path.write_text("2 0\n0:\n1: 0\n0 - 0.5\n1 0 0.5\n1 1 0.5\n")
        with pytest.raises(DomainError):
            read_network(path)

    def test_network_bad_bits(self, tmp_path):
        path = tmp_path / "bad.net"
        path.write_text("2 1\n0:\n1: 0\n0 - 0.5\n1 2 0.5\n1 1 0.5\n")
        with pytest.raises(TableFormatError) as exc:
            read_network(path)
        assert exc.value.lineno == 5

    def test_network_incomplete_cpt(self, tmp_path):
        path = tmp_path / "bad.net"
        path.write_text("2 1\n0:\n1: 0\n0 - 0.5\n1 0 0.5\n")
        with pytest.raises(TableFormatError):
            read_network(path)

    def test_counts_round_trip(self, chain, tmp_path):
        counts = sample(chain, 300, seed=5)
        path = tmp_path / "data.txt"
        write_counts(counts, path)
        np.testing.assert_array_equal(read_counts(path).counts, counts.counts)

    def test_counts_total_mismatch(self, tmp_path):
        path = tmp_path / "data.txt"
        path.write_text("2 10\n00 4\n11 5\n")
        with pytest.raises(TableFormatError):
            read_counts(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(TableFormatError):
            read_counts(tmp_path / "absent.txt")
