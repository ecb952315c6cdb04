from __future__ import annotations

from enum import Enum
from typing import Optional, Sequence, Set, Tuple, Union

import numpy as np

from interference_lab.errors import InterferenceRequestError
from interference_lab.models import JsonObject, JsonValidator, as_readonly

#: The symbolic "exposed" level used in estimand definitions; resolved per
#: unit by :meth:`ExposedLevel.resolve`.
EXPOSED = "exposed"

Level = Union[int, str]
Cell = Tuple[int, Level]

#: Patterns are indexed by bit masks, so general exposure is refused beyond this degree.
MAX_PATTERN_DEGREE = 20


class ExposureModel(Enum):
    """
    The exposure function f mapping a neighbourhood's treatments to a level.
    """

    BINARY = ('binary_any: exposed when at least one neighbour is treated', ['binary', 'binary_any'])
    SYMMETRIC = ('symmetric_count: number of treated neighbours', ['symmetric', 'symmetric_count'])
    GENERAL = ('general_pattern: the exact neighbourhood treatment pattern', ['general', 'general_pattern'])

    def __init__(self, description: str, codes: Sequence[str]):
        self.description = description
        self.codes = codes

    @property
    def code(self) -> str:
        return self.codes[0]

    def describe(self) -> str:
        return self.description

    def level_count(self, degree: int) -> int:
        if self == ExposureModel.BINARY:
            return 2
        if self == ExposureModel.SYMMETRIC:
            return int(degree) + 1
        return 2 ** int(degree)

    @classmethod
    def parse(cls, code: Union[str, "ExposureModel"]) -> Optional["ExposureModel"]:
        if isinstance(code, ExposureModel):
            return code
        for item in list(ExposureModel):
            if code in item.codes:
                return item


class ExposedLevel(Enum):
    """
    Which level counts as "exposed" when an estimand asks for it.

    Binary exposure always uses level 1. Symmetric exposure uses level 1
    (``ONE``) or the degree d_i (``FULL``); general exposure uses the pattern
    with only the first neighbour treated (``ONE``) or every neighbour
    treated (``FULL``).
    """

    ONE = ('one treated neighbour', 'one')
    FULL = ('every neighbour treated', 'full')

    def __init__(self, description: str, code: str):
        self.description = description
        self.code = code

    def describe(self) -> str:
        return self.description

    def resolve(self, model: ExposureModel, degree: int) -> int:
        if model == ExposureModel.BINARY:
            return 1
        if degree == 0:
            raise InterferenceRequestError(
                f"an isolated unit has no exposed level under {model.code} exposure")
        if self == ExposedLevel.ONE:
            return 1
        return int(degree) if model == ExposureModel.SYMMETRIC else 2 ** int(degree) - 1

    @classmethod
    def parse(cls, code: Union[str, "ExposedLevel"]) -> Optional["ExposedLevel"]:
        if isinstance(code, ExposedLevel):
            return code
        for item in list(ExposedLevel):
            if code == item.code:
                return item


def resolve_level(model: ExposureModel, exposed_level: ExposedLevel, level: Level, degree: int) -> int:
    """Map a (possibly symbolic) level to a concrete level index for one unit."""
    if level == EXPOSED:
        return exposed_level.resolve(model, degree)
    level = int(level)
    if not 0 <= level < model.level_count(degree):
        raise InterferenceRequestError(
            f"level {level} is out of range for a unit of degree {degree} under {model.code} exposure")
    return level


class ExposureAssignment(JsonObject):
    """
    The realised (z_i, e_i) pair of every unit.
    """

    @property
    def attributes(self) -> Set[str]:
        return {"z", "e"}

    def __init__(self, *, z: Sequence[int], e: Sequence[int]):
        self._z = as_readonly(z, dtype=np.int64)
        self._e = as_readonly(e, dtype=np.int64)
        self.validate_json()

    @property
    def z(self) -> np.ndarray:
        return self._z

    @property
    def e(self) -> np.ndarray:
        return self._e

    @property
    def n(self) -> int:
        return len(self._z)

    @property
    def pairs(self) -> Sequence[Tuple[int, int]]:
        return [(int(z), int(e)) for z, e in zip(self._z, self._e)]

    def in_cells(self, z: np.ndarray, e: np.ndarray) -> np.ndarray:
        """Boolean mask of units realising their own cell ``(z[i], e[i])``."""
        return (self._z == z) & (self._e == e)

    def __len__(self) -> int:
        return len(self._z)

    @JsonValidator("z and e must have the same length")
    def _validate_lengths(self) -> bool:
        return self._z.shape == self._e.shape

    @JsonValidator("treatments must be 0 or 1 and levels non-negative")
    def _validate_values(self) -> bool:
        return bool(np.isin(self._z, (0, 1)).all() and (self._e >= 0).all())
