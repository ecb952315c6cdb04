from __future__ import annotations

import logging
import math
from typing import Dict, Optional, Sequence, Set, Tuple, Union

import numpy as np

from interference_lab.errors import InterferenceRequestError
from interference_lab.models import (JsonObject, JsonValidator, ParamDef,
                                     as_readonly, show_unknown_key_warning)
from interference_lab.models.exposures import (EXPOSED, Cell, ExposedLevel,
                                               ExposureModel)
from interference_lab.models.graphs import InterferenceGraph


class Design(JsonObject):
    """
    A probability distribution over treatment vectors in {0,1}^n.

    Designs only describe the distribution; sampling and enumeration live in
    :class:`~interference_lab.service.DesignService`.
    """

    type = None
    logger = logging.getLogger(__name__)

    @property
    def attributes(self) -> Set[str]:
        return {"type", "n"}

    def __init__(self, *, n: int, **others: dict):
        self._n = ParamDef("n", int, low=1).validate(n)
        show_unknown_key_warning(self, others)

    @property
    def n(self) -> int:
        return self._n

    @property
    def support_size(self) -> float:
        """Upper bound on the number of support points."""
        return float(2 ** self._n)

    @property
    def label(self) -> str:
        return self.type


class CompletelyRandomizedDesign(Design):
    """
    Exactly ``n_t`` units are treated, all subsets equally likely.
    """

    type = "crd"

    @property
    def attributes(self) -> Set[str]:
        return super().attributes.union({"n_t"})

    def __init__(self, *, n: int, n_t: int, **others: dict):
        super().__init__(n=n, **others)
        self._n_t = ParamDef("n_t", int, low=0, high=self.n, open_low=True, open_high=True).validate(n_t)

    @property
    def n_t(self) -> int:
        return self._n_t

    @property
    def n_c(self) -> int:
        return self.n - self._n_t

    @property
    def support_size(self) -> float:
        return float(math.comb(self.n, self._n_t))

    @property
    def label(self) -> str:
        return f"crd({self._n_t})"


class BernoulliDesign(Design):
    """
    Independent treatment of every unit with probability ``p``.
    """

    type = "bernoulli"

    @property
    def attributes(self) -> Set[str]:
        return super().attributes.union({"p"})

    def __init__(self, *, n: int, p: float, **others: dict):
        super().__init__(n=n, **others)
        self._p = ParamDef("p", float, low=0.0, high=1.0, open_low=True, open_high=True).validate(p)

    @property
    def p(self) -> float:
        return self._p

    @property
    def label(self) -> str:
        return f"{self.type}({self._p:g})"


class RestrictedBernoulliDesign(BernoulliDesign):
    """
    Bernoulli trial conditioned on at least one treated and one control unit.
    """

    type = "restricted_bernoulli"

    def __init__(self, *, n: int, p: float, **others: dict):
        super().__init__(n=n, p=p, **others)
        if self.n < 2:
            raise InterferenceRequestError("a restricted Bernoulli design needs at least two units")

    @property
    def normalizer(self) -> float:
        return 1.0 - self.p ** self.n - (1.0 - self.p) ** self.n

    @property
    def support_size(self) -> float:
        return float(2 ** self.n - 2)


class ClusterDesign(Design):
    """
    Whole clusters are assigned by complete randomization: ``K_t`` of the
    ``K`` clusters are treated and every unit follows its cluster.

    ``partition[i]`` is the cluster label of unit ``i``; labels are
    renumbered ``0..K-1`` in sorted order.
    """

    type = "cluster"

    @property
    def attributes(self) -> Set[str]:
        return super().attributes.union({"partition", "K_t"})

    def __init__(self, *, partition: Sequence[int], K_t: int, **others: dict):
        labels, relabeled = np.unique(np.asarray(partition, dtype=np.int64), return_inverse=True)
        super().__init__(n=len(relabeled), **others)
        self._partition = as_readonly(relabeled, dtype=np.int64)
        self._K = len(labels)
        self._K_t = ParamDef("K_t", int, low=0, high=self._K, open_low=True, open_high=True).validate(K_t)

    @property
    def partition(self) -> np.ndarray:
        return self._partition

    @property
    def K(self) -> int:
        return self._K

    @property
    def K_t(self) -> int:
        return self._K_t

    @property
    def K_c(self) -> int:
        return self._K - self._K_t

    @property
    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self._partition, minlength=self._K)

    @property
    def clusters(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(tuple(int(i) for i in np.flatnonzero(self._partition == k)) for k in range(self._K))

    @property
    def support_size(self) -> float:
        return float(math.comb(self._K, self._K_t))

    @property
    def label(self) -> str:
        return f"cluster({self._K_t}/{self._K})"


class IndependentSetDesign(Design):
    """
    Greedy ego selection followed by complete randomization of ``k_t`` egos.

    Each step picks a remaining unit uniformly with probability
    ``ego_mix_p`` and a remaining unit of smallest remaining degree
    otherwise, then deletes it and its neighbours. Alters stay in control.
    """

    type = "independent_set"

    @property
    def attributes(self) -> Set[str]:
        return super().attributes.union({"k_t", "ego_mix_p"})

    def __init__(self, *, graph: InterferenceGraph, k_t: int, ego_mix_p: float = 1.0, **others: dict):
        super().__init__(n=graph.n, **others)
        self._graph = graph
        self._k_t = ParamDef("k_t", int, low=1).validate(k_t)
        self._ego_mix_p = ParamDef("ego_mix_p", float, low=0.0, high=1.0).validate(ego_mix_p)

    @property
    def graph(self) -> InterferenceGraph:
        return self._graph

    @property
    def k_t(self) -> int:
        return self._k_t

    @property
    def ego_mix_p(self) -> float:
        return self._ego_mix_p

    @property
    def label(self) -> str:
        return f"independent_set({self._k_t})"


class RerandomizedDesign(Design):
    """
    A base design redrawn until every listed ``(z, e)`` cell holds at least
    the required number of units.
    """

    type = "rerandomized"

    @property
    def attributes(self) -> Set[str]:
        return super().attributes.union({"base", "min_counts", "max_tries"})

    def __init__(
        self,
        *,
        base: Design,
        graph: InterferenceGraph,
        exposure_model: Union[str, ExposureModel],
        min_counts: Dict[Cell, int],
        max_tries: int = 100_000,
        exposed_level: Union[str, ExposedLevel] = ExposedLevel.FULL,
        **others: dict,
    ):
        super().__init__(n=base.n, **others)
        if graph.n != base.n:
            raise InterferenceRequestError("the base design and the graph must have the same number of units")
        self._base = base
        self._graph = graph
        self._exposure_model = ExposureModel.parse(exposure_model)
        self._exposed_level = ExposedLevel.parse(exposed_level)
        self._min_counts = {self._cell(key): ParamDef("min_count", int, low=0).validate(v)
                            for key, v in min_counts.items()}
        self._max_tries = ParamDef("max_tries", int, low=1).validate(max_tries)
        self.validate_json()

    @staticmethod
    def _cell(key: Union[str, Cell]) -> Cell:
        if isinstance(key, str):
            z, e = (part.strip() for part in key.strip("()").split(","))
            key = (int(z), e if e == EXPOSED else int(e))
        return int(key[0]), key[1]

    @property
    def base(self) -> Design:
        return self._base

    @property
    def graph(self) -> InterferenceGraph:
        return self._graph

    @property
    def exposure_model(self) -> ExposureModel:
        return self._exposure_model

    @property
    def exposed_level(self) -> ExposedLevel:
        return self._exposed_level

    @property
    def min_counts(self) -> Dict[Cell, int]:
        return dict(self._min_counts)

    @property
    def max_tries(self) -> int:
        return self._max_tries

    @property
    def support_size(self) -> float:
        return self._base.support_size

    @property
    def label(self) -> str:
        return f"rerandomized({self._base.label})"

    @JsonValidator("exposure_model must be one of binary, symmetric, general")
    def _validate_model(self) -> bool:
        return self._exposure_model is not None and self._exposed_level is not None


class ExplicitDesign(Design):
    """
    A user-supplied finite distribution, e.g. a point mass or a two-point design.
    """

    type = "explicit"

    @property
    def attributes(self) -> Set[str]:
        return super().attributes.union({"support"})

    def __init__(self, *, support: Sequence[Tuple[Sequence[int], float]], **others: dict):
        merged: Dict[Tuple[int, ...], float] = {}
        for z, p in support:
            key = tuple(int(v) for v in z)
            merged[key] = merged.get(key, 0.0) + float(p)
        if not merged:
            raise InterferenceRequestError("an explicit design needs at least one support point")
        super().__init__(n=len(next(iter(merged))), **others)
        points = sorted((z, p) for z, p in merged.items() if p > 0)
        self._assignments = as_readonly([z for z, _ in points], dtype=np.int8)
        self._probabilities = as_readonly([p for _, p in points], dtype=float)
        self.validate_json()

    @classmethod
    def point_mass(cls, z: Sequence[int]) -> "ExplicitDesign":
        return cls(support=[(z, 1.0)])

    @property
    def support(self):
        return [(tuple(int(v) for v in z), float(p)) for z, p in zip(self._assignments, self._probabilities)]

    @property
    def assignments(self) -> np.ndarray:
        return self._assignments

    @property
    def probabilities(self) -> np.ndarray:
        return self._probabilities

    @property
    def support_size(self) -> float:
        return float(len(self._probabilities))

    @JsonValidator("every support point must have length n and binary entries")
    def _validate_points(self) -> bool:
        return self._assignments.shape[1] == self.n and bool(np.isin(self._assignments, (0, 1)).all())

    @JsonValidator("support probabilities must sum to 1")
    def _validate_mass(self) -> bool:
        return abs(float(self._probabilities.sum()) - 1.0) <= 1e-12


class DesignSupport(object):
    """
    The enumerated support of a design: an ``(S, n)`` matrix of treatment
    vectors and their probabilities.

    Iterating yields ``(z, p)`` pairs.
    """

    def __init__(self, *, assignments: np.ndarray, probabilities: np.ndarray):
        self.assignments = as_readonly(assignments, dtype=np.int8)
        self.probabilities = as_readonly(probabilities, dtype=float)
        if self.assignments.ndim != 2 or len(self.assignments) != len(self.probabilities):
            raise InterferenceRequestError("support assignments and probabilities do not line up")

    @property
    def n(self) -> int:
        return self.assignments.shape[1]

    @property
    def total_mass(self) -> float:
        return float(self.probabilities.sum())

    def __len__(self) -> int:
        return len(self.probabilities)

    def __iter__(self):
        return iter(zip(self.assignments, self.probabilities))

    def __str__(self):
        return f"<interference_lab.DesignSupport: {len(self)} points, n={self.n}>"


class DesignParser(object):
    """
    Builds a :class:`Design` from a configuration mapping such as
    ``{"type": "crd", "n_t": 50}``.
    """

    @classmethod
    def parse(
        cls,
        config: dict,
        *,
        graph: InterferenceGraph,
        exposure_model: Optional[ExposureModel] = None,
        partition: Optional[Sequence[int]] = None,
    ) -> Design:
        config = dict(config)
        type = config.pop("type", None)
        n = graph.n
        if type == CompletelyRandomizedDesign.type:
            return CompletelyRandomizedDesign(n=n, n_t=config.pop("n_t"), **config)
        if type == BernoulliDesign.type:
            return BernoulliDesign(n=n, p=config.pop("p"), **config)
        if type == RestrictedBernoulliDesign.type:
            return RestrictedBernoulliDesign(n=n, p=config.pop("p"), **config)
        if type == ClusterDesign.type:
            if partition is None:
                raise InterferenceRequestError("a cluster design needs a partition")
            if len(partition) != n:
                source = f" in {config['partition_file']}" if "partition_file" in config else ""
                raise InterferenceRequestError(
                    f"the partition{source} labels {len(partition)} units but the graph has {n}")
            for key in ("K", "partition_file", "seed"):
                config.pop(key, None)
            return ClusterDesign(partition=partition, K_t=config.pop("K_t"), **config)
        if type == IndependentSetDesign.type:
            return IndependentSetDesign(
                graph=graph, k_t=config.pop("k_t"), ego_mix_p=config.pop("ego_mix_p", 1.0), **config)
        if type == RerandomizedDesign.type:
            base = cls.parse(config.pop("base"), graph=graph, exposure_model=exposure_model, partition=partition)
            return RerandomizedDesign(
                base=base, graph=graph, exposure_model=config.pop("exposure_model", exposure_model),
                min_counts=config.pop("min_counts"), **config)
        if type == ExplicitDesign.type:
            return ExplicitDesign(support=config.pop("support"), **config)
        raise InterferenceRequestError(f"unknown design type {type!r}")
