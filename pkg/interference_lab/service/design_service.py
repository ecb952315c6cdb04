from __future__ import annotations

import itertools
import math
from collections import deque
from functools import lru_cache
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from interference_lab.errors import (InterferenceRequestError,
                                     RerandomizationError,
                                     SupportTooLargeError)
from interference_lab.models import ParamDef
from interference_lab.models.designs import (BernoulliDesign, ClusterDesign,
                                             CompletelyRandomizedDesign,
                                             Design, DesignSupport,
                                             ExplicitDesign,
                                             IndependentSetDesign,
                                             RerandomizedDesign,
                                             RestrictedBernoulliDesign)
from interference_lab.models.estimates import Contrast, Estimand
from interference_lab.models.exposures import (Cell, ExposedLevel,
                                               ExposureModel, resolve_level)
from interference_lab.models.graphs import InterferenceGraph
from interference_lab.models.propensities import PropensityTable
from interference_lab.models.reports import PositivityReport
from interference_lab.signature import SeedStreams

from .base import BaseService, RandomSource
from .exposure_service import ExposureService

EgoDistribution = Dict[FrozenSet[int], float]


class DesignService(BaseService):
    """
    Sampling and exact enumeration for every design, plus the graph
    algorithms the designs rely on (greedy independent sets and balanced
    partitions).
    """

    @property
    def exposures(self) -> ExposureService:
        return self._new_service(ExposureService)

    # sampling

    def sample(self, d: Design, seed: RandomSource = None) -> np.ndarray:
        """
        Draw one treatment vector.

        :raises RerandomizationError: when a re-randomised design exhausts ``max_tries``
        """
        rng = self._rng(seed)
        if isinstance(d, RerandomizedDesign):
            return self._sample_rerandomized(d, rng)
        if isinstance(d, CompletelyRandomizedDesign):
            z = np.zeros(d.n, dtype=np.int8)
            z[rng.choice(d.n, size=d.n_t, replace=False)] = 1
            return z
        if isinstance(d, RestrictedBernoulliDesign):
            while True:
                z = (rng.random(d.n) < d.p).astype(np.int8)
                if 0 < z.sum() < d.n:
                    return z
        if isinstance(d, BernoulliDesign):
            return (rng.random(d.n) < d.p).astype(np.int8)
        if isinstance(d, ClusterDesign):
            treated = rng.choice(d.K, size=d.K_t, replace=False)
            return np.isin(d.partition, treated).astype(np.int8)
        if isinstance(d, IndependentSetDesign):
            egos, _ = self.greedy_independent_set(d.graph, rng, d.ego_mix_p)
            egos = sorted(egos)
            k = self._effective_k(d, len(egos))
            z = np.zeros(d.n, dtype=np.int8)
            z[rng.choice(egos, size=k, replace=False)] = 1
            return z
        if isinstance(d, ExplicitDesign):
            return np.array(d.assignments[rng.choice(len(d.probabilities), p=d.probabilities)], dtype=np.int8)
        raise InterferenceRequestError(f"cannot sample from {d!r}")

    def sample_many(self, d: Design, seed: RandomSource, count: int) -> np.ndarray:
        """``count`` independent draws as an ``(count, n)`` matrix."""
        count = ParamDef("count", int, low=1).validate(count)
        rng = self._rng(seed)
        if isinstance(d, CompletelyRandomizedDesign):
            ranks = rng.random((count, d.n)).argsort(axis=1).argsort(axis=1)
            return (ranks < d.n_t).astype(np.int8)
        if type(d) is BernoulliDesign:
            return (rng.random((count, d.n)) < d.p).astype(np.int8)
        return np.stack([self.sample(d, rng) for _ in range(count)])

    def _effective_k(self, d: IndependentSetDesign, egos: int) -> int:
        if egos < d.k_t:
            self._logger.warning(f"independent set has {egos} egos, fewer than k_t={d.k_t}; treating every ego")
        return min(d.k_t, egos)

    def _cell_levels(self, d: RerandomizedDesign) -> List[Tuple[Cell, np.ndarray, int]]:
        """Per-unit concrete levels for every constrained cell; ``-1`` where a unit lacks the level."""
        cells = []
        for (z, level), count in d.min_counts.items():
            levels = []
            for degree in d.graph.degrees:
                try:
                    levels.append(resolve_level(d.exposure_model, d.exposed_level, level, int(degree)))
                except InterferenceRequestError:
                    levels.append(-1)
            cells.append(((z, level), np.asarray(levels, dtype=np.int64), count))
        return cells

    def _cell_hits(self, d: RerandomizedDesign, Z: np.ndarray, cells=None) -> np.ndarray:
        """``(len(Z), cells)`` flags: row ``r`` meets the minimum of cell ``c``."""
        cells = cells if cells is not None else self._cell_levels(d)
        E = self.exposures.expose_many(d.exposure_model, d.graph, Z)
        hits = np.ones((len(Z), len(cells)), dtype=bool)
        for c, ((z, _), levels, count) in enumerate(cells):
            hits[:, c] = ((Z == z) & (E == levels[None, :])).sum(axis=1) >= count
        return hits

    def _accepts(self, d: RerandomizedDesign, Z: np.ndarray, cells=None) -> np.ndarray:
        return self._cell_hits(d, Z, cells).all(axis=1)

    def _sample_rerandomized(self, d: RerandomizedDesign, rng: np.random.Generator) -> np.ndarray:
        cells = self._cell_levels(d)
        tally = np.zeros(len(cells), dtype=np.int64)
        for tries in range(1, d.max_tries + 1):
            z = self.sample(d.base, rng)
            hits = self._cell_hits(d, z[None, :], cells)[0]
            if hits.all():
                self._logger.debug(f"re-randomisation accepted after {tries} draws")
                return z
            tally += hits
        raise RerandomizationError(d.max_tries, {cell: int(k) for (cell, _, _), k in zip(cells, tally)})

    # enumeration

    def enumerate_support(self, d: Design) -> DesignSupport:
        """
        Every support point with its probability.

        :raises SupportTooLargeError: beyond ``enumeration_cap`` points
        """
        if d.support_size > self.enumeration_cap:
            raise SupportTooLargeError(d.support_size, self.enumeration_cap)
        self._logger.debug(f"enumerating {d.label} with at most {d.support_size:.0f} points")
        if isinstance(d, RerandomizedDesign):
            return self._enumerate_rerandomized(d)
        if isinstance(d, CompletelyRandomizedDesign):
            return self._from_subsets(d.n, itertools.combinations(range(d.n), d.n_t), d.support_size)
        if isinstance(d, BernoulliDesign):
            Z = ((np.arange(2 ** d.n)[:, None] >> np.arange(d.n)[None, :]) & 1).astype(np.int8)
            treated = Z.sum(axis=1)
            p = d.p ** treated * (1.0 - d.p) ** (d.n - treated)
            if isinstance(d, RestrictedBernoulliDesign):
                keep = (treated > 0) & (treated < d.n)
                return DesignSupport(assignments=Z[keep], probabilities=p[keep] / p[keep].sum())
            return DesignSupport(assignments=Z, probabilities=p)
        if isinstance(d, ClusterDesign):
            Z = np.stack([np.isin(d.partition, combo).astype(np.int8)
                          for combo in itertools.combinations(range(d.K), d.K_t)])
            return DesignSupport(assignments=Z, probabilities=np.full(len(Z), 1.0 / len(Z)))
        if isinstance(d, IndependentSetDesign):
            return self._enumerate_independent_set(d)
        if isinstance(d, ExplicitDesign):
            return DesignSupport(assignments=d.assignments, probabilities=d.probabilities)
        raise InterferenceRequestError(f"cannot enumerate {d!r}")

    def _from_subsets(self, n: int, subsets: Iterable[Sequence[int]], size: float) -> DesignSupport:
        Z = np.zeros((int(size), n), dtype=np.int8)
        for s, subset in enumerate(subsets):
            Z[s, list(subset)] = 1
        return DesignSupport(assignments=Z, probabilities=np.full(len(Z), 1.0 / len(Z)))

    def _enumerate_independent_set(self, d: IndependentSetDesign) -> DesignSupport:
        points: Dict[bytes, float] = {}
        for egos, p_egos in self.ego_set_distribution(d.graph, d.ego_mix_p).items():
            egos = sorted(egos)
            k = self._effective_k(d, len(egos))
            weight = p_egos / math.comb(len(egos), k)
            for treated in itertools.combinations(egos, k):
                z = np.zeros(d.n, dtype=np.int8)
                z[list(treated)] = 1
                key = z.tobytes()
                points[key] = points.get(key, 0.0) + weight
        keys = sorted(points)
        Z = np.stack([np.frombuffer(key, dtype=np.int8) for key in keys])
        return DesignSupport(assignments=Z, probabilities=np.array([points[key] for key in keys]))

    def _enumerate_rerandomized(self, d: RerandomizedDesign) -> DesignSupport:
        base = self.enumerate_support(d.base)
        cells = self._cell_levels(d)
        hits = self._cell_hits(d, base.assignments, cells)
        accepted = hits.all(axis=1)
        if not accepted.any():
            raise RerandomizationError(len(base), {cell: int(k) for (cell, _, _), k in zip(cells, hits.sum(axis=0))})
        p = base.probabilities[accepted]
        self._logger.debug(f"re-randomisation keeps {accepted.sum()} of {len(base)} points, mass {p.sum():.4g}")
        return DesignSupport(assignments=base.assignments[accepted], probabilities=p / p.sum())

    # independent sets

    def greedy_independent_set(self, g: InterferenceGraph, seed: RandomSource = None,
                               mix_p: float = 1.0) -> Tuple[FrozenSet[int], FrozenSet[int]]:
        """
        Greedy ego selection: repeatedly pick a remaining unit (uniformly with
        probability ``mix_p``, else one of smallest remaining degree), make it
        an ego and delete it with its neighbours.

        Returns ``(egos, alters)``.
        """
        mix_p = ParamDef("mix_p", float, low=0.0, high=1.0).validate(mix_p)
        rng = self._rng(seed)
        egos = set()
        if mix_p >= 1.0:
            removed = np.zeros(g.n, dtype=bool)
            for v in rng.permutation(g.n):
                if not removed[v]:
                    egos.add(int(v))
                    removed[v] = True
                    removed[list(g.neighbors(v))] = True
        else:
            remaining = set(range(g.n))
            degree = {v: len(g.neighbors(v)) for v in remaining}
            while remaining:
                units = sorted(remaining)
                if rng.random() < mix_p:
                    v = units[rng.integers(len(units))]
                else:
                    smallest = min(degree[u] for u in units)
                    candidates = [u for u in units if degree[u] == smallest]
                    v = candidates[rng.integers(len(candidates))]
                egos.add(v)
                deleted = {v} | (set(g.neighbors(v)) & remaining)
                remaining -= deleted
                for u in deleted:
                    for w in g.neighbors(u):
                        if w in remaining:
                            degree[w] -= 1
        egos = frozenset(egos)
        return egos, frozenset(range(g.n)) - egos

    def ego_set_distribution(self, g: InterferenceGraph, mix_p: float = 1.0) -> EgoDistribution:
        """Exact distribution of the greedy ego set, by recursion over the remaining units."""
        neighbors = [frozenset(nb) for nb in g.neighbor_lists]

        @lru_cache(maxsize=None)
        def distribution(remaining: FrozenSet[int]) -> Tuple[Tuple[FrozenSet[int], float], ...]:
            if not remaining:
                return ((frozenset(), 1.0),)
            units = sorted(remaining)
            picks = dict.fromkeys(units, 0.0)
            if mix_p > 0:
                for v in units:
                    picks[v] += mix_p / len(units)
            if mix_p < 1:
                degree = {v: len(neighbors[v] & remaining) for v in units}
                smallest = min(degree.values())
                candidates = [v for v in units if degree[v] == smallest]
                for v in candidates:
                    picks[v] += (1.0 - mix_p) / len(candidates)
            out: EgoDistribution = {}
            for v, q in picks.items():
                if q == 0.0:
                    continue
                for egos, p in distribution(remaining - neighbors[v] - {v}):
                    key = egos | {v}
                    out[key] = out.get(key, 0.0) + q * p
            return tuple(out.items())

        return dict(distribution(frozenset(range(g.n))))

    def ego_probabilities(self, g: InterferenceGraph, mix_p: float = 1.0, method: str = "auto",
                          seed: RandomSource = None, samples: Optional[int] = None) -> np.ndarray:
        """
        Probability that each unit ends up an ego; exact for small graphs,
        Monte Carlo otherwise.
        """
        if method == "auto":
            method = "enumerated" if g.n <= 16 else "monte_carlo"
        if method == "enumerated":
            probabilities = np.zeros(g.n)
            for egos, p in self.ego_set_distribution(g, mix_p).items():
                probabilities[list(egos)] += p
            return probabilities
        rng = self._rng(seed)
        samples = samples or self.mc_samples
        counts = np.zeros(g.n)
        for _ in range(samples):
            egos, _ = self.greedy_independent_set(g, rng, mix_p)
            counts[list(egos)] += 1
        return counts / samples

    # partitions

    def greedy_partition(self, g: InterferenceGraph, K: int, seed: RandomSource = None) -> np.ndarray:
        """
        Balanced clusters grown by breadth-first search; sizes differ by at
        most one. A cluster that exhausts its component restarts from a
        random unassigned unit.
        """
        K = ParamDef("K", int, low=1, high=g.n).validate(K)
        rng = self._rng(seed)
        sizes = [g.n // K + (1 if k < g.n % K else 0) for k in range(K)]
        labels = np.full(g.n, -1, dtype=np.int64)
        unassigned = set(range(g.n))

        def assign(v: int, k: int):
            labels[v] = k
            unassigned.discard(v)

        for k, size in enumerate(sizes):
            queue = deque()
            count = 0
            while count < size:
                if not queue:
                    start = sorted(unassigned)[rng.integers(len(unassigned))]
                    assign(start, k)
                    queue.append(start)
                    count += 1
                    continue
                u = queue.popleft()
                for w in g.neighbors(u):
                    if count >= size:
                        break
                    if labels[w] < 0:
                        assign(w, k)
                        queue.append(w)
                        count += 1
        self._logger.debug(f"partitioned {g.n} units into {K} clusters of sizes {sorted(set(sizes))}")
        return labels

    def read_partition(self, path: str) -> np.ndarray:
        """
        Read ``unit cluster`` lines into a label vector indexed by unit.

        :raises InterferenceRequestError: if units are missing or repeated
        """
        frame = pd.read_csv(path, sep=r"\s+", header=None, names=["unit", "cluster"], dtype=np.int64)
        units = frame["unit"].to_numpy()
        if sorted(units.tolist()) != list(range(len(units))):
            raise InterferenceRequestError(f"{path}: every unit 0..n-1 must appear exactly once")
        labels = np.empty(len(units), dtype=np.int64)
        labels[units] = frame["cluster"].to_numpy()
        return labels

    def write_partition(self, partition: Sequence[int], path: str) -> None:
        frame = pd.DataFrame({"unit": np.arange(len(partition)), "cluster": np.asarray(partition)})
        frame.to_csv(path, sep=" ", header=False, index=False)

    # checks

    def positivity_check(
        self,
        d: Design,
        g: InterferenceGraph,
        model: Union[str, ExposureModel],
        required: Iterable[Cell],
        exposed_level: Union[str, ExposedLevel] = ExposedLevel.FULL,
        propensities: Optional[PropensityTable] = None,
    ) -> PositivityReport:
        """Flag every unit whose propensity for a required cell is 0 or 1."""
        from .propensity_service import PropensityService

        model = ExposureModel.parse(model)
        exposed_level = ExposedLevel.parse(exposed_level)
        if propensities is None:
            propensities = self._new_service(PropensityService).propensities(d, g, model)
        passed = np.ones(g.n, dtype=bool)
        failures = []
        for z, level in required:
            for i, degree in enumerate(g.degrees):
                try:
                    e = resolve_level(model, exposed_level, level, int(degree))
                except InterferenceRequestError:
                    passed[i] = False
                    failures.append((i, (int(z), -1), 0.0))
                    continue
                pi = propensities.get(i, int(z), e)
                if pi <= 1e-15 or pi >= 1.0 - 1e-15:
                    passed[i] = False
                    failures.append((i, (int(z), e), pi))
        if failures:
            self._logger.debug(f"{len(failures)} positivity failures for {d.label}")
        return PositivityReport(passed=passed, failures=failures)

    def is_non_constant(
        self,
        d: Design,
        g: InterferenceGraph,
        model: Union[str, ExposureModel],
        contrast: Union[Contrast, Estimand],
        exposed_level: Union[str, ExposedLevel] = ExposedLevel.FULL,
        seed: RandomSource = None,
    ) -> bool:
        """
        True when the numbers of units in the two contrast cells vary across assignments.

        Supports beyond ``enumeration_cap`` are sampled; without ``seed`` the
        draws come from a fixed stream keyed by the design label, so repeated
        calls agree.
        """
        resolved = self.exposures.resolve_contrast(contrast, model, g, exposed_level, strict=False)
        if d.support_size <= self.enumeration_cap:
            Z = self.enumerate_support(d).assignments
        else:
            if seed is None:
                seed = SeedStreams(0).generator(f"non-constant|{d.label}")
            Z = self.sample_many(d, seed, self.mc_samples)
        E = self.exposures.expose_many(model, g, Z)
        n1 = ((Z == resolved.z1[None, :]) & (E == resolved.e1[None, :])).sum(axis=1)
        n0 = ((Z == resolved.z0[None, :]) & (E == resolved.e0[None, :])).sum(axis=1)
        return bool(n1.min() != n1.max() or n0.min() != n0.max())
