from __future__ import annotations

import logging
from enum import Enum
from functools import cached_property
from typing import Iterable, Optional, Sequence, Set, Tuple, Union

import numpy as np
from scipy import sparse

from interference_lab.errors import InterferenceRequestError
from interference_lab.models import (JsonObject, JsonValidator, ParamDef,
                                     as_readonly, show_unknown_key_warning)


class GraphFamily(Enum):
    """
    The random-graph families used to draw interference graphs.
    """

    ERDOS_RENYI = ('Erdos-Renyi G(n, p)', 'erdos_renyi')
    BARABASI_ALBERT = ('Barabasi-Albert preferential attachment', 'barabasi_albert')
    SMALL_WORLD = ('Watts-Strogatz small world', 'small_world')

    def __init__(self, description: str, code: str):
        self.description = description
        self.code = code

    def describe(self) -> str:
        return self.description

    @classmethod
    def parse(cls, code: str) -> Optional["GraphFamily"]:
        for item in list(GraphFamily):
            if code == item.code:
                return item


class GraphProps(object):

    @classmethod
    def p(cls) -> ParamDef:
        return ParamDef("p", float, low=0.0, high=1.0)

    @classmethod
    def min_degree(cls) -> ParamDef:
        return ParamDef("min_degree", int, low=1)

    @classmethod
    def attractiveness(cls) -> ParamDef:
        return ParamDef("attractiveness", float, low=0.0)

    @classmethod
    def neighborhood_size(cls) -> ParamDef:
        return ParamDef("neighborhood_size", int, low=1)

    @classmethod
    def rewire_p(cls) -> ParamDef:
        return ParamDef("rewire_p", float, low=0.0, high=1.0)


class GraphModel(JsonObject):
    """
    A random-graph family together with its parameters.

    Small-world graphs default to ``rewire_p=0.05``.
    """

    DEFAULTS = {
        GraphFamily.ERDOS_RENYI: {},
        GraphFamily.BARABASI_ALBERT: {"min_degree": 2, "attractiveness": 0.1},
        GraphFamily.SMALL_WORLD: {"neighborhood_size": 1, "rewire_p": 0.05},
    }

    REQUIRED = {
        GraphFamily.ERDOS_RENYI: ("p",),
        GraphFamily.BARABASI_ALBERT: ("min_degree", "attractiveness"),
        GraphFamily.SMALL_WORLD: ("neighborhood_size", "rewire_p"),
    }

    @property
    def attributes(self) -> Set[str]:
        return {"family", "params"}

    def __init__(self, *, family: Union[str, GraphFamily], **params):
        if isinstance(family, str):
            parsed = GraphFamily.parse(family)
            if parsed is None:
                raise InterferenceRequestError(
                    f"unknown graph family {family!r}; expected one of {[f.code for f in GraphFamily]}")
            family = parsed
        self._family = family
        merged = dict(self.DEFAULTS[family])
        merged.update(params)
        self._params = {}
        for name in self.REQUIRED[family]:
            if name not in merged:
                raise InterferenceRequestError(f"{family.code} requires parameter {name}")
            self._params[name] = getattr(GraphProps, name)().validate(merged.pop(name))
        show_unknown_key_warning(self, merged)

    @property
    def family(self) -> GraphFamily:
        return self._family

    @property
    def params(self) -> dict:
        return dict(self._params)

    def __getitem__(self, key):
        return self._params[key]


class InterferenceGraph(JsonObject):
    """
    A fixed, symmetric, unweighted interference graph on units ``0..n-1``.

    Duplicate and reversed edges are collapsed; self-loops and out-of-range
    endpoints are rejected with the offending edge index.
    """

    logger = logging.getLogger(__name__)

    @property
    def attributes(self) -> Set[str]:
        return {"n", "edges"}

    def __init__(self, *, n: int, edges: Iterable[Sequence[int]] = (), **others: dict):
        self._n = ParamDef("n", int, low=1).validate(n)
        normalized = set()
        for index, edge in enumerate(edges):
            if len(edge) != 2:
                raise InterferenceRequestError(f"edge #{index} {tuple(edge)} is not a pair")
            i, j = int(edge[0]), int(edge[1])
            if not (0 <= i < self._n and 0 <= j < self._n):
                raise InterferenceRequestError(f"edge #{index} ({i}, {j}) has an endpoint outside [0, {self._n})")
            if i == j:
                raise InterferenceRequestError(f"edge #{index} ({i}, {j}) is a self-loop")
            normalized.add((min(i, j), max(i, j)))
        self._edges = tuple(sorted(normalized))
        show_unknown_key_warning(self, others)
        self.validate_json()

    @property
    def n(self) -> int:
        return self._n

    @property
    def edges(self) -> Tuple[Tuple[int, int], ...]:
        return self._edges

    @property
    def edge_count(self) -> int:
        return len(self._edges)

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        if not self._edges:
            return sparse.csr_matrix((self._n, self._n), dtype=np.int64)
        rows, cols = np.array(self._edges, dtype=np.int64).T
        data = np.ones(2 * len(rows), dtype=np.int64)
        return sparse.csr_matrix(
            (data, (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
            shape=(self._n, self._n))

    @cached_property
    def degrees(self) -> np.ndarray:
        return as_readonly(np.asarray(self.adjacency.sum(axis=1)).ravel(), dtype=np.int64)

    @cached_property
    def neighbor_lists(self) -> Tuple[Tuple[int, ...], ...]:
        adjacency = self.adjacency
        return tuple(
            tuple(sorted(int(j) for j in adjacency.indices[adjacency.indptr[i]:adjacency.indptr[i + 1]]))
            for i in range(self._n))

    def neighbors(self, i: int) -> Tuple[int, ...]:
        return self.neighbor_lists[i]

    def has_edge(self, i: int, j: int) -> bool:
        return j in self.neighbor_lists[i]

    def relabel(self, permutation: Sequence[int]) -> "InterferenceGraph":
        """Return the graph with unit ``i`` renamed to ``permutation[i]``."""
        return InterferenceGraph(n=self._n, edges=[(permutation[i], permutation[j]) for i, j in self._edges])

    @JsonValidator("edge count must equal half the degree sum")
    def _validate_handshake(self) -> bool:
        return 2 * self.edge_count == int(self.degrees.sum())

    def __eq__(self, other) -> bool:
        return isinstance(other, InterferenceGraph) and self._n == other.n and self._edges == other.edges

    def __hash__(self) -> int:
        return hash((self._n, self._edges))

    def __str__(self):
        return f"<interference_lab.InterferenceGraph: n={self._n}, m={self.edge_count}>"
