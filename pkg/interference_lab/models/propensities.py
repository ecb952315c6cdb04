from __future__ import annotations

from enum import Enum
from typing import Optional, Sequence, Set, Tuple, Union

import numpy as np

from interference_lab.errors import InterferenceRequestError
from interference_lab.models import JsonObject, JsonValidator, as_readonly


class Provenance(Enum):
    """
    Where a propensity value came from.
    """

    ANALYTIC = ('closed-form expression', 'analytic')
    ENUMERATED = ('exact sum over the design support', 'enumerated')
    MONTE_CARLO = ('frequency over sampled assignments', 'monte_carlo')

    def __init__(self, description: str, code: str):
        self.description = description
        self.code = code

    def describe(self) -> str:
        return self.description

    @classmethod
    def parse(cls, code: Union[str, "Provenance"]) -> Optional["Provenance"]:
        if isinstance(code, Provenance):
            return code
        for item in list(Provenance):
            if code == item.code:
                return item


class PropensityTable(JsonObject):
    """
    pi_i(z, e) for every unit, stored as an ``(n, 2, max K)`` array.

    Levels a unit cannot reach hold 0. Monte-Carlo tables also carry
    per-cell standard errors and the sample count.
    """

    @property
    def attributes(self) -> Set[str]:
        return {"values", "provenance", "samples"}

    def __init__(
        self,
        *,
        values: np.ndarray,
        provenance: Union[str, Provenance],
        unit_provenance: Optional[Sequence[Union[str, Provenance]]] = None,
        se: Optional[np.ndarray] = None,
        samples: Optional[int] = None,
    ):
        self._values = as_readonly(values, dtype=float)
        self._provenance = Provenance.parse(provenance)
        n = self._values.shape[0]
        if unit_provenance is None:
            unit_provenance = [self._provenance] * n
        self._unit_provenance = tuple(Provenance.parse(p) for p in unit_provenance)
        self._se = None if se is None else as_readonly(se, dtype=float)
        self._samples = samples
        self.validate_json()

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def provenance(self) -> Provenance:
        return self._provenance

    @property
    def unit_provenance(self) -> Tuple[Provenance, ...]:
        return self._unit_provenance

    @property
    def se(self) -> Optional[np.ndarray]:
        return self._se

    @property
    def samples(self) -> Optional[int]:
        return self._samples

    @property
    def n(self) -> int:
        return self._values.shape[0]

    @property
    def width(self) -> int:
        return self._values.shape[2]

    def get(self, i: int, z: int, e: int) -> float:
        if e >= self.width:
            return 0.0
        return float(self._values[i, z, e])

    def cell(self, z: np.ndarray, e: np.ndarray) -> np.ndarray:
        """``pi_i(z[i], e[i])`` for every unit."""
        z = np.asarray(z, dtype=np.int64)
        e = np.asarray(e, dtype=np.int64)
        inside = (e >= 0) & (e < self.width)
        values = np.zeros(self.n)
        rows = np.flatnonzero(inside)
        values[rows] = self._values[rows, z[rows], e[rows]]
        return values

    def cell_se(self, z: np.ndarray, e: np.ndarray) -> Optional[np.ndarray]:
        if self._se is None:
            return None
        e = np.clip(np.asarray(e, dtype=np.int64), 0, self.width - 1)
        return self._se[np.arange(self.n), np.asarray(z, dtype=np.int64), e]

    def zero_cells(self, level_counts: Sequence[int]):
        """Reachable ``(unit, z, e)`` cells whose propensity is exactly 0."""
        return [
            (i, z, e)
            for i, count in enumerate(level_counts)
            for z in (0, 1)
            for e in range(min(int(count), self.width))
            if self._values[i, z, e] == 0.0
        ]

    def treatment_marginal(self) -> np.ndarray:
        """P(Z_i = 1) for every unit."""
        return self._values[:, 1, :].sum(axis=1)

    def restrict(self, units: Sequence[int]) -> "PropensityTable":
        units = np.asarray(units)
        return PropensityTable(
            values=self._values[units], provenance=self._provenance,
            unit_provenance=[self._unit_provenance[i] for i in units],
            se=None if self._se is None else self._se[units], samples=self._samples)

    @JsonValidator("propensities must lie in [0, 1]")
    def _validate_range(self) -> bool:
        return bool(((self._values >= -1e-15) & (self._values <= 1 + 1e-12)).all())

    @JsonValidator("propensities must have shape (n, 2, K)")
    def _validate_shape(self) -> bool:
        return self._values.ndim == 3 and self._values.shape[1] == 2


class JointPropensityTable(object):
    """
    Joint exposure probabilities pi_ij computed on demand from a weighted
    set of assignments (the full support, or Monte-Carlo draws with equal
    weights).

    >>> joint.matrix(z1, e1, z0, e0)[i, j]   # P(i in tau1, j in tau0)
    """

    def __init__(self, *, assignments: np.ndarray, exposures: np.ndarray, weights: np.ndarray,
                 provenance: Union[str, Provenance]):
        self._Z = np.asarray(assignments, dtype=np.int8)
        self._E = np.asarray(exposures, dtype=np.int64)
        self._w = np.asarray(weights, dtype=float)
        self._provenance = Provenance.parse(provenance)
        self._cache = {}

    @property
    def provenance(self) -> Provenance:
        return self._provenance

    @property
    def n(self) -> int:
        return self._Z.shape[1]

    def indicators(self, z: np.ndarray, e: np.ndarray) -> np.ndarray:
        """``(S, n)`` matrix of I(Z_i = z[i], E_i = e[i]) over the stored assignments."""
        return (self._Z == np.asarray(z)[None, :]) & (self._E == np.asarray(e)[None, :])

    def matrix(self, z_a: np.ndarray, e_a: np.ndarray, z_b: np.ndarray, e_b: np.ndarray) -> np.ndarray:
        """
        ``M[i, j] = P(unit i in cell a_i, unit j in cell b_j)``.

        The diagonal is the single-unit probability of being in both cells;
        it is not a joint propensity.
        """
        key = tuple(np.asarray(v, dtype=np.int64).tobytes() for v in (z_a, e_a, z_b, e_b))
        if key not in self._cache:
            left = self.indicators(z_a, e_a).astype(float)
            right = self.indicators(z_b, e_b).astype(float)
            self._cache[key] = left.T @ (self._w[:, None] * right)
        return self._cache[key]

    def get(self, i: int, j: int, cell_i: Tuple[int, int], cell_j: Tuple[int, int]) -> float:
        if i == j:
            raise InterferenceRequestError("joint propensities are defined for distinct units only")
        left = (self._Z[:, i] == cell_i[0]) & (self._E[:, i] == cell_i[1])
        right = (self._Z[:, j] == cell_j[0]) & (self._E[:, j] == cell_j[1])
        return float(self._w[left & right].sum())


class ExposureWeights(JsonObject):
    """
    Weighted exposure probabilities entering the difference-in-means bias.

    ``by_treatment``: ``values[i, z, e] = E[I(Z_i=z, E_i=e) / #{j: Z_j=z}]``.
    ``by_cell``: ``tau1[i] = E[I(i in tau1) / #{j in tau1}]`` and likewise
    ``tau0``. Expectations are conditional on the estimator being defined;
    ``defined_mass`` is the probability of that event.
    """

    @property
    def attributes(self) -> Set[str]:
        return {"kind", "provenance", "defined_mass"}

    def __init__(
        self,
        *,
        kind: str,
        provenance: Union[str, Provenance],
        values: Optional[np.ndarray] = None,
        tau1: Optional[np.ndarray] = None,
        tau0: Optional[np.ndarray] = None,
        defined_mass: float = 1.0,
    ):
        self._kind = kind
        self._provenance = Provenance.parse(provenance)
        self._values = None if values is None else as_readonly(values, dtype=float)
        self._tau1 = None if tau1 is None else as_readonly(tau1, dtype=float)
        self._tau0 = None if tau0 is None else as_readonly(tau0, dtype=float)
        self._defined_mass = float(defined_mass)
        self.validate_json()

    @property
    def kind(self) -> str:
        return self._kind

    @property
    def provenance(self) -> Provenance:
        return self._provenance

    @property
    def values(self) -> Optional[np.ndarray]:
        return self._values

    @property
    def tau1(self) -> Optional[np.ndarray]:
        return self._tau1

    @property
    def tau0(self) -> Optional[np.ndarray]:
        return self._tau0

    @property
    def defined_mass(self) -> float:
        return self._defined_mass

    def by_treatment(self, z: int) -> np.ndarray:
        """alpha_i(z) = sum over levels of alpha_i(z, e)."""
        return self._values[:, z, :].sum(axis=1)

    @JsonValidator("kind must be by_treatment or by_cell")
    def _validate_kind(self) -> bool:
        if self._kind == "by_treatment":
            return self._values is not None
        return self._kind == "by_cell" and self._tau1 is not None and self._tau0 is not None
