import numpy as np
import pytest

from gradslide.graph import (CommGraph, GraphError, ZeroOperator, erdos_renyi,
                             incidence_operator, laplacian_operator, named_graph,
                             operator_norm, read_edge_list, write_edge_list)


def dense_norm(op):
    """Independent oracle: spectral norm via dense SVD of the materialization."""
    return float(np.linalg.norm(op.dense(), 2))


class TestCommGraph:
    def test_rejects_disconnected(self):
        with pytest.raises(GraphError):
            CommGraph.from_edges(4, [(0, 1), (2, 3)])

    def test_rejects_self_loop_and_out_of_range(self):
        with pytest.raises(GraphError):
            CommGraph.from_edges(3, [(0, 0), (0, 1), (1, 2)])
        with pytest.raises(GraphError):
            CommGraph.from_edges(3, [(0, 3)])

    def test_dedup_and_canonical_order(self):
        g = CommGraph.from_edges(3, [(1, 0), (0, 1), (1, 2)])
        assert g.edges == ((0, 1), (1, 2))

    def test_self_in_neighbors(self):
        g = named_graph("path", 4)
        for i in range(4):
            assert i in g.neighbors[i]

    def test_degree_excludes_self(self):
        g = named_graph("star", 4)
        assert g.degree(0) == 3
        assert g.degree(1) == 1
        assert g.max_degree == 3


class TestNamedGraphs:
    def test_path3(self):
        assert named_graph("path", 3).edges == ((0, 1), (1, 2))

    def test_star4(self):
        assert named_graph("star", 4).edges == ((0, 1), (0, 2), (0, 3))

    def test_complete4_edge_count(self):
        assert len(named_graph("complete", 4).edges) == 6

    def test_cycle(self):
        g = named_graph("cycle", 5)
        assert len(g.edges) == 5
        assert all(g.degree(i) == 2 for i in range(5))

    def test_unknown_kind(self):
        with pytest.raises(GraphError):
            named_graph("torus", 4)


class TestErdosRenyi:
    def test_m2_full_prob_is_single_edge(self):
        g = erdos_renyi(2, 1.0, seed=123)
        assert g.edges == ((0, 1),)

    def test_p1_is_complete(self):
        g = erdos_renyi(3, 1.0, seed=5)
        assert len(g.edges) == 3

    def test_connected_at_scale(self):
        g = erdos_renyi(100, 0.05, seed=7)
        assert g.m == 100 and g.is_connected()

    def test_deterministic(self):
        a = erdos_renyi(30, 0.1, seed=42)
        b = erdos_renyi(30, 0.1, seed=42)
        assert a.edges == b.edges

    def test_different_seeds_differ(self):
        a = erdos_renyi(30, 0.2, seed=1)
        b = erdos_renyi(30, 0.2, seed=2)
        assert a.edges != b.edges


class TestLaplacianOperator:
    def test_p2_kernel(self):
        op = laplacian_operator(named_graph("path", 2), 1)
        assert np.allclose(op.apply(np.array([[1.0], [1.0]])), 0.0)

    def test_p2_basic(self):
        op = laplacian_operator(named_graph("path", 2), 1)
        out = op.apply(np.array([[1.0], [0.0]]))
        assert np.allclose(out, [[1.0], [-1.0]])

    def test_k3_row(self):
        # oracle: dense matrix-vector with L(K3) = [[2,-1,-1],[-1,2,-1],[-1,-1,2]]
        op = laplacian_operator(named_graph("complete", 3), 1)
        out = op.apply(np.array([[1.0], [0.0], [0.0]]))
        assert np.allclose(out, [[2.0], [-1.0], [-1.0]])

    def test_symmetry_and_adjoint(self):
        rng = np.random.default_rng(0)
        op = laplacian_operator(erdos_renyi(8, 0.4, seed=3), 3)
        for _ in range(100):
            x = rng.standard_normal((8, 3))
            z = rng.standard_normal((8, 3))
            lhs = float(np.sum(op.apply(x) * z))
            rhs = float(np.sum(x * op.adjoint(z)))
            assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))

    def test_kernel_characterization(self):
        rng = np.random.default_rng(1)
        op = laplacian_operator(erdos_renyi(6, 0.5, seed=9), 2)
        for _ in range(100):
            if rng.random() < 0.5:
                x = np.tile(rng.standard_normal(2), (6, 1))
                assert np.linalg.norm(op.apply(x)) < 1e-12
            else:
                x = rng.standard_normal((6, 2))
                spread = max(np.linalg.norm(x[i] - x[0]) for i in range(6))
                if spread >= 1e-12:
                    assert np.linalg.norm(op.apply(x)) > 1e-13

    def test_laplacian_row(self):
        op = laplacian_operator(named_graph("star", 4), 1)
        row0 = op.laplacian_row(0)
        assert row0 == {0: 3.0, 1: -1.0, 2: -1.0, 3: -1.0}
        assert op.laplacian_row(2) == {0: -1.0, 2: 1.0}


class TestIncidenceOperator:
    def test_p2_single_edge(self):
        op = incidence_operator(named_graph("path", 2), 1)
        out = op.apply(np.array([[1.0], [0.0]]))
        assert out.shape == (1, 1) and abs(abs(out[0, 0]) - 1.0) < 1e-15

    def test_consensus_kernel(self):
        op = incidence_operator(erdos_renyi(7, 0.5, seed=2), 3)
        x = np.tile(np.array([1.0, -2.0, 0.5]), (7, 1))
        assert np.linalg.norm(op.apply(x)) < 1e-12

    @pytest.mark.parametrize("orientation_seed", [0, 17])
    def test_gram_equals_laplacian(self, orientation_seed):
        g = named_graph("path", 3)
        lap = laplacian_operator(g, 1)
        inc = incidence_operator(g, 1, orientation_seed=orientation_seed)
        rng = np.random.default_rng(4)
        for _ in range(50):
            x = rng.standard_normal((3, 1))
            assert np.allclose(inc.adjoint(inc.apply(x)), lap.apply(x), atol=1e-12)


class TestOperatorNorm:
    def test_p3_laplacian_norm(self):
        # dense symmetric eigensolver oracle: spectrum of L(P3) is {0, 1, 3}
        op = laplacian_operator(named_graph("path", 3), 1)
        lap = np.array([[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]])
        assert np.allclose(sorted(np.linalg.eigvalsh(lap)), [0.0, 1.0, 3.0])
        assert abs(op.norm - 3.0) < 1e-6

    def test_k3_laplacian_norm(self):
        op = laplacian_operator(named_graph("complete", 3), 1)
        assert abs(op.norm - 3.0) < 1e-6

    def test_p2_incidence_d2(self):
        op = incidence_operator(named_graph("path", 2), 2)
        assert abs(op.norm - np.sqrt(2.0)) < 1e-6

    def test_against_dense_oracle_small_operators(self):
        rng = np.random.default_rng(11)
        cases = []
        for m, d in [(2, 1), (5, 2), (10, 3), (20, 10), (40, 5)]:
            cases.append(laplacian_operator(named_graph("path", m), d))
            cases.append(laplacian_operator(named_graph("complete", m), d))
            cases.append(incidence_operator(erdos_renyi(m, 0.5, seed=m), d,
                                            orientation_seed=int(rng.integers(100))))
        for op in cases:
            ref = dense_norm(op)
            assert abs(op.norm - ref) <= 1e-6 * max(ref, 1e-12)

    def test_norm_is_an_upper_bound_on_amplification(self):
        rng = np.random.default_rng(12)
        op = laplacian_operator(erdos_renyi(9, 0.4, seed=6), 2)
        for _ in range(50):
            x = rng.standard_normal((9, 2))
            assert np.linalg.norm(op.apply(x)) <= op.norm * np.linalg.norm(x) + 1e-9

    def test_bad_tol(self):
        op = laplacian_operator(named_graph("path", 3), 1)
        with pytest.raises(ValueError):
            operator_norm(op, tol=0.0)


class TestZeroOperator:
    def test_zero(self):
        op = ZeroOperator(3)
        x = np.ones((1, 3))
        assert np.all(op.apply(x) == 0.0)
        assert np.all(op.adjoint(op.apply(x)) == 0.0)
        assert op.norm == 0.0


class TestEdgeListIO:
    def test_round_trip(self, tmp_path):
        g = erdos_renyi(12, 0.3, seed=8)
        path = tmp_path / "g.txt"
        write_edge_list(g, path)
        g2 = read_edge_list(path)
        assert g2.m == g.m and g2.edges == g.edges

    def test_header_format(self, tmp_path):
        path = tmp_path / "g.txt"
        write_edge_list(named_graph("path", 3), path)
        lines = path.read_text().splitlines()
        assert lines[0] == "m 3"
        assert lines[1:] == ["1 2", "2 3"]

    def test_missing_header(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1 2\n")
        with pytest.raises(GraphError):
            read_edge_list(path)
