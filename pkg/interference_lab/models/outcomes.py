from __future__ import annotations

import logging
from enum import Enum
from typing import Optional, Sequence, Set, Union

import numpy as np

from interference_lab.errors import InterferenceRequestError
from interference_lab.models import (JsonObject, JsonValidator, as_readonly,
                                     show_unknown_key_warning)


class StructuralModel(Enum):
    """
    Restrictions relating a unit's potential outcomes to each other.
    """

    UNRESTRICTED = ('no restriction', 'unrestricted')
    ADDITIVE = ('additivity: C_i(e) = 0', 'additive')
    CONSTANT_EFFECTS = ('constant effects across units', 'constant_effects')
    LINEAR = ('linear effects: B_i(e) = gamma_i e, C_i(e) = theta_i e', 'linear')
    CONSTANT_ADDITIVE = ('constant additive effects', 'constant_additive')
    SHARP_NULL = ('sharp null: A_i(1) - A_i(0) = beta for all i', 'sharp_null')

    def __init__(self, description: str, code: str):
        self.description = description
        self.code = code

    def describe(self) -> str:
        return self.description

    @classmethod
    def parse(cls, code: Union[str, "StructuralModel"]) -> Optional["StructuralModel"]:
        if isinstance(code, StructuralModel):
            return code
        for item in list(StructuralModel):
            if code == item.code:
                return item


class OutcomeGenerator(Enum):
    """
    Generators for per-unit outcome parameters under binary exposure.
    """

    UNCORRELATED = ('independent draws of alpha, beta, gamma, delta', 'uncorrelated')
    CORRELATED = ('parameters driven by covariates x ~ LogNormal, y ~ Bernoulli', 'correlated')

    def __init__(self, description: str, code: str):
        self.description = description
        self.code = code

    def describe(self) -> str:
        return self.description

    @classmethod
    def parse(cls, code: Union[str, "OutcomeGenerator"]) -> Optional["OutcomeGenerator"]:
        if isinstance(code, OutcomeGenerator):
            return code
        for item in list(OutcomeGenerator):
            if code == item.code:
                return item


class MarginalForm(Enum):
    """
    Marginal estimands built from policy-averaged potential outcomes.
    """

    THETA_PHI = ('mean of E_phi(Y_i | Z_i = 1) - E_phi(Y_i | Z_i = 0)', 'theta_phi')
    THETA_PHI_PSI = ('mean of E_phi(Y_i) - E_psi(Y_i)', 'theta_phi_psi')
    THETA_PHI_PSI_Z = ('mean of E_phi(Y_i | Z_i = z) - E_psi(Y_i)', 'theta_phi_psi_z')

    def __init__(self, description: str, code: str):
        self.description = description
        self.code = code

    def describe(self) -> str:
        return self.description

    @classmethod
    def parse(cls, code: Union[str, "MarginalForm"]) -> Optional["MarginalForm"]:
        if isinstance(code, MarginalForm):
            return code
        for item in list(MarginalForm):
            if code == item.code:
                return item


def _pad(rows: Sequence[Sequence[float]], width: int) -> np.ndarray:
    padded = np.full((len(rows), max(width, 1)), np.nan)
    for i, row in enumerate(rows):
        padded[i, :len(row)] = row
    return padded


class PotentialOutcomeTable(JsonObject):
    """
    The table of science in decomposed form.

    Unit ``i`` has ``K_i`` exposure levels and potential outcomes
    ``Y_i(z, e) = alpha_i + beta_i z + B_i(e) + z C_i(e)`` with
    ``B_i(0) = C_i(0) = 0``. ``B`` and ``C`` are given per unit as sequences
    of length ``K_i``.
    """

    logger = logging.getLogger(__name__)

    @property
    def attributes(self) -> Set[str]:
        return {"alpha", "beta", "B", "C", "x", "y"}

    def __init__(
        self,
        *,
        alpha: Sequence[float],
        beta: Sequence[float],
        B: Sequence[Sequence[float]],
        C: Sequence[Sequence[float]],
        x: Optional[Sequence[float]] = None,
        y: Optional[Sequence[int]] = None,
        **others: dict,
    ):
        self._alpha = as_readonly(alpha, dtype=float)
        self._beta = as_readonly(beta, dtype=float)
        rows_b = [np.asarray(row, dtype=float) for row in B]
        rows_c = [np.asarray(row, dtype=float) for row in C]
        if len(rows_b) != len(self._alpha) or len(rows_c) != len(self._alpha):
            raise InterferenceRequestError("alpha, beta, B and C must describe the same number of units")
        levels = [len(row) for row in rows_b]
        if levels != [len(row) for row in rows_c]:
            raise InterferenceRequestError("B_i and C_i must have the same number of levels for every unit")
        self._levels = as_readonly(levels, dtype=np.int64)
        width = int(self._levels.max()) if len(levels) else 1
        self._B = as_readonly(_pad(rows_b, width))
        self._C = as_readonly(_pad(rows_c, width))
        self._x = None if x is None else as_readonly(x, dtype=float)
        self._y = None if y is None else as_readonly(y, dtype=np.int64)
        show_unknown_key_warning(self, others)
        self.validate_json()

    @classmethod
    def linear(
        cls,
        *,
        alpha: Sequence[float],
        beta: Sequence[float],
        gamma: Union[float, Sequence[float]],
        theta: Union[float, Sequence[float]] = 0.0,
        level_counts: Sequence[int],
        x: Optional[Sequence[float]] = None,
        y: Optional[Sequence[int]] = None,
    ) -> "PotentialOutcomeTable":
        """Build ``B_i(e) = gamma_i e`` and ``C_i(e) = theta_i e`` on levels ``0..K_i-1``."""
        n = len(alpha)
        gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (n,))
        theta = np.broadcast_to(np.asarray(theta, dtype=float), (n,))
        levels = [np.arange(int(k), dtype=float) for k in level_counts]
        return cls(
            alpha=alpha, beta=beta,
            B=[gamma[i] * levels[i] for i in range(n)],
            C=[theta[i] * levels[i] for i in range(n)],
            x=x, y=y)

    @property
    def n(self) -> int:
        return len(self._alpha)

    @property
    def alpha(self) -> np.ndarray:
        return self._alpha

    @property
    def beta(self) -> np.ndarray:
        return self._beta

    @property
    def B(self) -> np.ndarray:
        """Padded ``(n, max K)`` matrix; entries beyond ``K_i`` are ``nan``."""
        return self._B

    @property
    def C(self) -> np.ndarray:
        return self._C

    @property
    def level_counts(self) -> np.ndarray:
        return self._levels

    @property
    def x(self) -> Optional[np.ndarray]:
        return self._x

    @property
    def y(self) -> Optional[np.ndarray]:
        return self._y

    @property
    def covariates(self) -> Optional[np.ndarray]:
        columns = [c for c in (self._x, self._y) if c is not None]
        return np.column_stack(columns).astype(float) if columns else None

    def levels_of(self, i: int):
        return self._B[i, :self._levels[i]], self._C[i, :self._levels[i]]

    def A(self, z: int) -> np.ndarray:
        return self._alpha + self._beta if z else self._alpha

    def outcome(self, i: int, z: int, e: int) -> float:
        if z not in (0, 1):
            raise InterferenceRequestError(f"treatment {z} must be 0 or 1")
        if not 0 <= e < self._levels[i]:
            raise InterferenceRequestError(f"level {e} is out of range for unit {i} with {self._levels[i]} levels")
        return float(self._alpha[i] + self._beta[i] * z + self._B[i, e] + z * self._C[i, e])

    def outcomes(self, z: np.ndarray, e: np.ndarray) -> np.ndarray:
        """Vectorised ``Y_i(z[i], e[i])`` for every unit."""
        z = np.asarray(z, dtype=np.int64)
        e = np.asarray(e, dtype=np.int64)
        if (e < 0).any() or (e >= self._levels).any():
            bad = int(np.flatnonzero((e < 0) | (e >= self._levels))[0])
            raise InterferenceRequestError(
                f"level {e[bad]} is out of range for unit {bad} with {self._levels[bad]} levels")
        rows = np.arange(self.n)
        return self._alpha + self._beta * z + self._B[rows, e] + z * self._C[rows, e]

    def outcomes_many(self, Z: np.ndarray, E: np.ndarray) -> np.ndarray:
        """Observed outcomes for a stack of assignments, ``Z`` and ``E`` of shape ``(S, n)``."""
        Z = np.asarray(Z, dtype=np.int64)
        E = np.asarray(E, dtype=np.int64)
        if (E >= self._levels[None, :]).any():
            raise InterferenceRequestError("an exposure level exceeds a unit's level count")
        rows = np.arange(self.n)[None, :]
        return self._alpha + self._beta * Z + self._B[rows, E] + Z * self._C[rows, E]

    def restrict(self, units: Sequence[int]) -> "PotentialOutcomeTable":
        units = np.asarray(units)
        return PotentialOutcomeTable(
            alpha=self._alpha[units], beta=self._beta[units],
            B=[self.levels_of(i)[0] for i in units],
            C=[self.levels_of(i)[1] for i in units],
            x=None if self._x is None else self._x[units],
            y=None if self._y is None else self._y[units])

    def with_parameters(self, **changes) -> "PotentialOutcomeTable":
        values = {
            "alpha": self._alpha, "beta": self._beta,
            "B": [self.levels_of(i)[0] for i in range(self.n)],
            "C": [self.levels_of(i)[1] for i in range(self.n)],
            "x": self._x, "y": self._y,
        }
        values.update(changes)
        return PotentialOutcomeTable(**values)

    def to_dict(self, *args) -> dict:
        self.validate_json()
        record = {
            "alpha": self._alpha.tolist(), "beta": self._beta.tolist(),
            "B": [self.levels_of(i)[0].tolist() for i in range(self.n)],
            "C": [self.levels_of(i)[1].tolist() for i in range(self.n)],
        }
        if self._x is not None:
            record["x"] = self._x.tolist()
        if self._y is not None:
            record["y"] = self._y.tolist()
        return record

    @JsonValidator("B_i(0) and C_i(0) must be exactly 0")
    def _validate_normalization(self) -> bool:
        return self.n == 0 or bool((self._B[:, 0] == 0).all() and (self._C[:, 0] == 0).all())

    @JsonValidator("every unit needs at least one exposure level")
    def _validate_levels(self) -> bool:
        return bool((self._levels >= 1).all())

    @JsonValidator("covariates must have one entry per unit")
    def _validate_covariates(self) -> bool:
        return all(c is None or len(c) == self.n for c in (self._x, self._y))

    def __repr__(self):
        return f"<interference_lab.PotentialOutcomeTable: n={self.n}, max K={self._B.shape[1]}>"
