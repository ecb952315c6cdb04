from __future__ import annotations

from typing import Dict, Iterable, Sequence, Set, Union

import networkx as nx
import numpy as np
import pandas as pd

from interference_lab.errors import InterferenceRequestError
from interference_lab.models import ParamDef
from interference_lab.models.graphs import (GraphFamily, GraphModel,
                                            InterferenceGraph)

from .base import BaseService, RandomSource


class GraphService(BaseService):
    """
    Builds, generates, queries and stores interference graphs.

    >>> service = GraphService()
    >>> g = service.generate_graph(GraphModel(family="erdos_renyi", p=0.01), n=200, seed=7)
    """

    def from_edge_list(self, n: int, edges: Iterable[Sequence[int]]) -> InterferenceGraph:
        return InterferenceGraph(n=n, edges=edges)

    def to_networkx(self, g: InterferenceGraph) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(g.n))
        graph.add_edges_from(g.edges)
        return graph

    def from_networkx(self, graph: nx.Graph) -> InterferenceGraph:
        nodes = sorted(graph.nodes())
        index = {v: k for k, v in enumerate(nodes)}
        return InterferenceGraph(n=len(nodes), edges=[(index[u], index[v]) for u, v in graph.edges()])

    def neighborhood(self, g: InterferenceGraph, i: int, hops: int = 1) -> Set[int]:
        """Units other than ``i`` within ``hops`` steps of ``i``."""
        ParamDef("i", int, low=0, high=g.n, open_high=True).validate(i)
        hops = ParamDef("hops", int, low=1).validate(hops)
        if hops == 1:
            return set(g.neighbors(i))
        lengths = nx.single_source_shortest_path_length(self.to_networkx(g), i, cutoff=hops)
        return {int(j) for j in lengths if j != i}

    def generate_graph(self, model: Union[GraphModel, Dict], n: int, seed: RandomSource = None) -> InterferenceGraph:
        """
        Draw a graph from ``model``; the result is a pure function of
        ``(model, n, seed)``.

        :raises InterferenceRequestError: for invalid parameters
        """
        if isinstance(model, dict):
            model = GraphModel(**model)
        n = ParamDef("n", int, low=1).validate(n)
        rng = self._rng(seed)
        self._logger.debug(f"generating {model.family.code} graph on {n} units with {model.params}")
        if model.family == GraphFamily.ERDOS_RENYI:
            graph = nx.gnp_random_graph(n, model["p"], seed=int(rng.integers(2 ** 32)))
            return self.from_networkx(graph)
        if model.family == GraphFamily.SMALL_WORLD:
            k = 2 * model["neighborhood_size"]
            if k >= n:
                raise InterferenceRequestError(
                    f"neighborhood_size={model['neighborhood_size']} needs more than {k} units, got {n}")
            graph = nx.watts_strogatz_graph(n, k, model["rewire_p"], seed=int(rng.integers(2 ** 32)))
            return self.from_networkx(graph)
        return self._preferential_attachment(n, model["min_degree"], model["attractiveness"], rng)

    def _preferential_attachment(self, n: int, min_degree: int, attractiveness: float,
                                 rng: np.random.Generator) -> InterferenceGraph:
        if n <= min_degree:
            raise InterferenceRequestError(
                f"a preferential attachment graph with min_degree={min_degree} "
                f"needs more units than {n}")
        graph = nx.complete_graph(min_degree)
        degrees = np.zeros(n)
        degrees[:min_degree] = min_degree - 1
        for v in range(min_degree, n):
            weights = degrees[:v] + attractiveness
            total = weights.sum()
            probabilities = weights / total if total > 0 else None
            targets = rng.choice(v, size=min_degree, replace=False, p=probabilities)
            graph.add_node(v)
            graph.add_edges_from((v, int(t)) for t in targets)
            degrees[targets] += 1
            degrees[v] = min_degree
        return self.from_networkx(graph)

    def degree_summary(self, g: InterferenceGraph) -> Dict[str, float]:
        degrees = g.degrees
        return {
            "min": int(degrees.min()),
            "max": int(degrees.max()),
            "median": float(np.median(degrees)),
            "mean": float(degrees.mean()),
        }

    def read_edge_list(self, path: str) -> InterferenceGraph:
        """
        Read the ``n m`` header followed by ``i j`` lines.

        :raises InterferenceRequestError: if the header does not match the body
        """
        with open(path, "r") as f:
            header = f.readline().split()
        if len(header) != 2:
            raise InterferenceRequestError(f"{path}: the first line must be 'n m'")
        n, m = int(header[0]), int(header[1])
        if m == 0:
            return InterferenceGraph(n=n, edges=[])
        frame = pd.read_csv(path, sep=r"\s+", header=None, skiprows=1, names=["i", "j"], dtype=np.int64)
        if len(frame) != m:
            raise InterferenceRequestError(f"{path}: header announces {m} edges but {len(frame)} were found")
        return InterferenceGraph(n=n, edges=frame[["i", "j"]].to_numpy())

    def write_edge_list(self, g: InterferenceGraph, path: str) -> None:
        with open(path, "w") as f:
            f.write(f"{g.n} {g.edge_count}\n")
            for i, j in g.edges:
                f.write(f"{i} {j}\n")
        self._logger.debug(f"wrote {g} to {path}")
