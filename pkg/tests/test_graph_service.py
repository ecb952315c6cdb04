import networkx as nx
import numpy as np
import pytest

from interference_lab.errors import InterferenceRequestError
from interference_lab.models.graphs import GraphModel, InterferenceGraph


class TestInterferenceGraph:

    @staticmethod
    def test_duplicate_and_reversed_edges_collapse():
        g = InterferenceGraph(n=3, edges=[(0, 1), (1, 0), (0, 1), (2, 1)])
        assert g.edges == ((0, 1), (1, 2))
        assert g.edge_count == 2
        assert g.degrees.tolist() == [1, 2, 1]

    @staticmethod
    def test_self_loop_names_the_edge():
        with pytest.raises(InterferenceRequestError, match="edge #1"):
            InterferenceGraph(n=3, edges=[(0, 1), (2, 2)])

    @staticmethod
    def test_out_of_range_endpoint():
        with pytest.raises(InterferenceRequestError, match="outside"):
            InterferenceGraph(n=3, edges=[(0, 3)])

    @staticmethod
    def test_degrees_and_neighbors(star5):
        assert star5.degrees.tolist() == [4, 1, 1, 1, 1]
        assert star5.neighbors(0) == (1, 2, 3, 4)
        assert star5.neighbors(3) == (0,)
        assert 2 * star5.edge_count == star5.degrees.sum()

    @staticmethod
    def test_empty_graph(empty4):
        assert empty4.edge_count == 0
        assert empty4.degrees.tolist() == [0, 0, 0, 0]
        assert empty4.adjacency.nnz == 0


class TestGraphService:

    @staticmethod
    def test_neighborhood_hops(client, path6):
        assert client.graphs.neighborhood(path6, 0) == {1}
        assert client.graphs.neighborhood(path6, 0, hops=2) == {1, 2}
        assert client.graphs.neighborhood(path6, 3, hops=2) == {1, 2, 4, 5}

    @staticmethod
    def test_neighborhood_rejects_bad_unit(client, path6):
        with pytest.raises(InterferenceRequestError):
            client.graphs.neighborhood(path6, 6)

    @staticmethod
    def test_networkx_round_trip(client, corpus_graph):
        assert client.graphs.from_networkx(client.graphs.to_networkx(corpus_graph)) == corpus_graph

    @staticmethod
    def test_generation_is_a_function_of_the_seed(client):
        model = {"family": "erdos_renyi", "p": 0.1}
        first = client.graphs.generate_graph(model, 50, seed=3)
        second = client.graphs.generate_graph(model, 50, seed=3)
        assert first == second

    @staticmethod
    @pytest.mark.parametrize("p, edges", [(0.0, 0), (1.0, 45)])
    def test_erdos_renyi_extremes(client, p, edges):
        g = client.graphs.generate_graph({"family": "erdos_renyi", "p": p}, 10, seed=0)
        assert g.edge_count == edges

    @staticmethod
    def test_small_world_ring_without_rewiring(client):
        g = client.graphs.generate_graph(
            {"family": "small_world", "neighborhood_size": 2, "rewire_p": 0.0}, 12, seed=1)
        assert (g.degrees == 4).all()

    @staticmethod
    def test_small_world_needs_enough_units(client):
        with pytest.raises(InterferenceRequestError, match="neighborhood_size"):
            client.graphs.generate_graph({"family": "small_world", "neighborhood_size": 3}, 6, seed=1)

    @staticmethod
    def test_preferential_attachment_degrees(client):
        g = client.graphs.generate_graph(
            {"family": "barabasi_albert", "min_degree": 2, "attractiveness": 0.5}, 40, seed=9)
        assert g.n == 40
        assert (g.degrees >= 1).all()
        assert (g.degrees[2:] >= 2).all()
        assert nx.is_connected(client.graphs.to_networkx(g))

    @staticmethod
    def test_preferential_attachment_needs_units(client):
        with pytest.raises(InterferenceRequestError):
            client.graphs.generate_graph({"family": "barabasi_albert", "min_degree": 3}, 3, seed=0)

    @staticmethod
    def test_unknown_family():
        with pytest.raises(InterferenceRequestError, match="unknown graph family"):
            GraphModel(family="lattice")

    @staticmethod
    def test_missing_parameter():
        with pytest.raises(InterferenceRequestError, match="requires parameter p"):
            GraphModel(family="erdos_renyi")

    @staticmethod
    def test_degree_summary(client, star5):
        summary = client.graphs.degree_summary(star5)
        assert summary["min"] == 1
        assert summary["max"] == 4
        assert summary["median"] == 1.0
        assert summary["mean"] == pytest.approx(8 / 5)

    @staticmethod
    def test_edge_list_file(client, tmp_path, corpus_graph):
        path = str(tmp_path / "graph.txt")
        client.graphs.write_edge_list(corpus_graph, path)
        assert client.graphs.read_edge_list(path) == corpus_graph

    @staticmethod
    def test_edge_list_header_mismatch(client, tmp_path):
        path = tmp_path / "graph.txt"
        path.write_text("4 3\n0 1\n1 2\n")
        with pytest.raises(InterferenceRequestError, match="announces 3 edges"):
            client.graphs.read_edge_list(str(path))

    @staticmethod
    def test_relabel_preserves_degrees(path6):
        permutation = np.array([5, 4, 3, 2, 1, 0])
        relabelled = path6.relabel(permutation)
        assert sorted(relabelled.degrees.tolist()) == sorted(path6.degrees.tolist())
        assert relabelled == path6
