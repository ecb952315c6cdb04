from __future__ import annotations

from typing import Sequence, Union

import numpy as np
from scipy import sparse

from interference_lab.errors import InterferenceRequestError
from interference_lab.models import ParamDef
from interference_lab.models.estimates import Contrast, Estimand, ResolvedContrast
from interference_lab.models.exposures import (MAX_PATTERN_DEGREE,
                                               ExposedLevel, ExposureAssignment,
                                               ExposureModel)
from interference_lab.models.graphs import InterferenceGraph

from .base import BaseService


class ExposureService(BaseService):
    """
    Maps treatment vectors to per-unit exposure levels.

    Binary exposure is ``1`` when any neighbour is treated, symmetric
    exposure counts treated neighbours, and general exposure encodes the
    pattern as ``sum_k z[N_i[k]] * 2**k`` over the sorted neighbour list.
    """

    def _model(self, model: Union[str, ExposureModel]) -> ExposureModel:
        parsed = ExposureModel.parse(model)
        if parsed is None:
            raise InterferenceRequestError(f"unknown exposure model {model!r}; expected binary, symmetric or general")
        return parsed

    def _check_pattern_degree(self, g: InterferenceGraph):
        if g.n and int(g.degrees.max()) > MAX_PATTERN_DEGREE:
            unit = int(np.argmax(g.degrees))
            raise InterferenceRequestError(
                f"general exposure is refused for unit {unit} of degree {g.degrees[unit]} (limit {MAX_PATTERN_DEGREE})")

    def _pattern_matrix(self, g: InterferenceGraph) -> sparse.csr_matrix:
        rows, cols, weights = [], [], []
        for i, neighbors in enumerate(g.neighbor_lists):
            for k, j in enumerate(neighbors):
                rows.append(i)
                cols.append(j)
                weights.append(2 ** k)
        return sparse.csr_matrix(
            (np.asarray(weights, dtype=np.int64), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
            shape=(g.n, g.n))

    def expose_many(self, model: Union[str, ExposureModel], g: InterferenceGraph, Z: np.ndarray) -> np.ndarray:
        """Exposure levels for a stack of treatment vectors ``Z`` of shape ``(S, n)``."""
        model = self._model(model)
        Z = np.atleast_2d(np.asarray(Z, dtype=np.int64))
        if Z.shape[1] != g.n:
            raise InterferenceRequestError(f"treatment vectors have length {Z.shape[1]}, the graph has {g.n} units")
        if model == ExposureModel.GENERAL:
            self._check_pattern_degree(g)
            return np.asarray(self._pattern_matrix(g).dot(Z.T).T, dtype=np.int64)
        counts = np.asarray(g.adjacency.dot(Z.T).T, dtype=np.int64)
        if model == ExposureModel.BINARY:
            return (counts > 0).astype(np.int64)
        return counts

    def expose(self, model: Union[str, ExposureModel], g: InterferenceGraph, z: Sequence[int]) -> ExposureAssignment:
        z = np.asarray(z, dtype=np.int64)
        if z.ndim != 1 or len(z) != g.n:
            raise InterferenceRequestError(f"treatment vector must have length {g.n}")
        if not np.isin(z, (0, 1)).all():
            raise InterferenceRequestError("treatments must be 0 or 1")
        return ExposureAssignment(z=z, e=self.expose_many(model, g, z[None, :])[0])

    def level_count(self, model: Union[str, ExposureModel], g: InterferenceGraph, i: int) -> int:
        """
        K_i, the number of exposure levels of unit ``i``.

        :raises InterferenceRequestError: for general exposure beyond the degree limit
        """
        model = self._model(model)
        ParamDef("i", int, low=0, high=g.n, open_high=True).validate(i)
        degree = int(g.degrees[i])
        if model == ExposureModel.GENERAL and degree > MAX_PATTERN_DEGREE:
            raise InterferenceRequestError(
                f"general exposure is refused for unit {i} of degree {degree} (limit {MAX_PATTERN_DEGREE})")
        return model.level_count(degree)

    def level_counts(self, model: Union[str, ExposureModel], g: InterferenceGraph) -> np.ndarray:
        model = self._model(model)
        if model == ExposureModel.GENERAL:
            self._check_pattern_degree(g)
        return np.array([model.level_count(int(d)) for d in g.degrees], dtype=np.int64)

    def resolve_contrast(
        self,
        contrast: Union[Contrast, Estimand, ResolvedContrast],
        model: Union[str, ExposureModel],
        g: InterferenceGraph,
        exposed_level: Union[str, ExposedLevel] = ExposedLevel.FULL,
        strict: bool = True,
    ) -> ResolvedContrast:
        """Concrete per-unit cells for a contrast or a named estimand."""
        if isinstance(contrast, ResolvedContrast):
            return contrast
        if isinstance(contrast, Estimand):
            contrast = contrast.contrast(exposed_level)
        return contrast.resolve(self._model(model), g.degrees, strict=strict)

    def cell_membership(self, assignment: ExposureAssignment, z: np.ndarray, e: np.ndarray) -> np.ndarray:
        """Indicator of units realising their own cell ``(z[i], e[i])``."""
        return assignment.in_cells(np.asarray(z), np.asarray(e))
