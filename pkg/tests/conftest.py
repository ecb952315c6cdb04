from itertools import combinations

import pytest

from interference_lab.api import Client
from interference_lab.models.graphs import InterferenceGraph

#: Small graphs on which every design support can be enumerated.
CORPUS = {
    "empty": InterferenceGraph(n=4),
    "path": InterferenceGraph(n=6, edges=[(i, i + 1) for i in range(5)]),
    "cycle": InterferenceGraph(n=6, edges=[(i, (i + 1) % 6) for i in range(6)]),
    "star": InterferenceGraph(n=5, edges=[(0, leaf) for leaf in range(1, 5)]),
    "complete": InterferenceGraph(n=5, edges=list(combinations(range(5), 2))),
    "two_triangles": InterferenceGraph(n=6, edges=[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]),
}


@pytest.fixture
def client() -> Client:
    return Client()


@pytest.fixture(params=sorted(CORPUS))
def corpus_graph(request) -> InterferenceGraph:
    return CORPUS[request.param]


@pytest.fixture
def path6() -> InterferenceGraph:
    return CORPUS["path"]


@pytest.fixture
def path3() -> InterferenceGraph:
    return InterferenceGraph(n=3, edges=[(0, 1), (1, 2)])


@pytest.fixture
def star5() -> InterferenceGraph:
    return CORPUS["star"]


@pytest.fixture
def empty4() -> InterferenceGraph:
    return CORPUS["empty"]
