from __future__ import annotations

import logging
import math
import re
from enum import Enum
from typing import Any, Dict, Optional, Sequence, Set, Union

import numpy as np

from interference_lab.errors import InterferenceRequestError
from interference_lab.models import (JsonObject, JsonValidator, ParamDef,
                                     as_readonly)
from interference_lab.models.exposures import (EXPOSED, Cell, ExposedLevel,
                                               ExposureModel, resolve_level)


class ResolvedContrast(object):
    """
    A contrast with the symbolic exposed level replaced by each unit's
    concrete level: unit ``i`` compares cell ``(z1[i], e1[i])`` against
    ``(z0[i], e0[i])``.
    """

    def __init__(self, z1: Sequence[int], e1: Sequence[int], z0: Sequence[int], e0: Sequence[int]):
        self.z1 = as_readonly(z1, dtype=np.int64)
        self.e1 = as_readonly(e1, dtype=np.int64)
        self.z0 = as_readonly(z0, dtype=np.int64)
        self.e0 = as_readonly(e0, dtype=np.int64)

    @property
    def n(self) -> int:
        return len(self.z1)

    def tau1(self, i: int):
        return int(self.z1[i]), int(self.e1[i])

    def tau0(self, i: int):
        return int(self.z0[i]), int(self.e0[i])

    @property
    def resolved(self) -> np.ndarray:
        """Mask of units whose two cells both exist."""
        return (self.e1 >= 0) & (self.e0 >= 0)

    def restrict(self, units: np.ndarray) -> "ResolvedContrast":
        return ResolvedContrast(self.z1[units], self.e1[units], self.z0[units], self.e0[units])


class Contrast(JsonObject):
    """
    A contrast between two treatment-and-exposure cells tau1 and tau0.

    Cells are ``(z, e)`` pairs where ``e`` is a level index or
    :data:`~interference_lab.models.exposures.EXPOSED`.
    """

    @property
    def attributes(self) -> Set[str]:
        return {"tau1", "tau0", "exposed_level"}

    def __init__(self, *, tau1: Cell, tau0: Cell, exposed_level: Union[str, ExposedLevel] = ExposedLevel.FULL):
        self._tau1 = self._normalize(tau1)
        self._tau0 = self._normalize(tau0)
        self._exposed_level = ExposedLevel.parse(exposed_level)
        if self._exposed_level is None:
            raise InterferenceRequestError(f"unknown exposed level {exposed_level!r}")
        self.validate_json()

    @staticmethod
    def _normalize(cell: Cell) -> Cell:
        z, e = cell
        return int(z), (EXPOSED if e == EXPOSED else int(e))

    @property
    def tau1(self) -> Cell:
        return self._tau1

    @property
    def tau0(self) -> Cell:
        return self._tau0

    @property
    def exposed_level(self) -> ExposedLevel:
        return self._exposed_level

    def resolve(self, model: ExposureModel, degrees: Sequence[int], strict: bool = True) -> ResolvedContrast:
        """
        Resolve both cells for every unit.

        With ``strict=False`` a unit lacking the requested level gets level
        ``-1``, which no assignment realises.

        :raises InterferenceRequestError: if a unit lacks the requested level and ``strict`` is set
        """
        def level(cell_level, degree):
            try:
                return resolve_level(model, self._exposed_level, cell_level, degree)
            except InterferenceRequestError:
                if strict:
                    raise
                return -1

        levels1 = [level(self._tau1[1], d) for d in degrees]
        levels0 = [level(self._tau0[1], d) for d in degrees]
        n = len(degrees)
        return ResolvedContrast(
            np.full(n, self._tau1[0]), levels1, np.full(n, self._tau0[0]), levels0)

    @JsonValidator("tau1 and tau0 must differ")
    def _validate_distinct(self) -> bool:
        return self._tau1 != self._tau0

    @JsonValidator("treatments must be 0 or 1 and levels non-negative")
    def _validate_cells(self) -> bool:
        return all(
            z in (0, 1) and (e == EXPOSED or e >= 0)
            for z, e in (self._tau1, self._tau0))

    def __str__(self):
        return f"{self._tau1}-{self._tau0}"


class Estimand(Enum):
    """
    Fixed contrasts of the table of potential outcomes.
    """

    DTE = ('direct treatment effect', 'DTE', (1, 0), (0, 0))
    TTE = ('total treatment effect', 'TTE', (1, EXPOSED), (0, 0))
    GAMMA1 = ('interference effect on control units', 'gamma1', (0, EXPOSED), (0, 0))
    GAMMA2 = ('interference effect on treated units', 'gamma2', (1, EXPOSED), (1, 0))

    def __init__(self, description: str, code: str, tau1: Cell, tau0: Cell):
        self.description = description
        self.code = code
        self.tau1 = tau1
        self.tau0 = tau0

    def describe(self) -> str:
        return self.description

    def contrast(self, exposed_level: Union[str, ExposedLevel] = ExposedLevel.FULL) -> Contrast:
        return Contrast(tau1=self.tau1, tau0=self.tau0, exposed_level=exposed_level)

    @classmethod
    def parse(cls, code: Union[str, "Estimand"]) -> Optional["Estimand"]:
        if isinstance(code, Estimand):
            return code
        for item in list(Estimand):
            if str(code).lower() == item.code.lower():
                return item


class EstimatorType(Enum):
    """
    The estimators a strategy can be evaluated with.
    """

    NAIVE = ('difference in means between treated and control', 'naive')
    DOM = ('difference in means between the contrast cells', 'dom')
    HT = ('Horvitz-Thompson', 'ht')
    HAJEK = ('Hajek (ratio) estimator', 'hajek')
    GD = ('generalized difference estimator', 'gd')
    GREG = ('generalized regression estimator', 'greg')
    MODEL_DEP = ('linear estimator with model-dependent weights', 'model_dep')
    SHRUNK_HT = ('Horvitz-Thompson shrunk towards zero', 'shrunk_ht')

    def __init__(self, description: str, code: str):
        self.description = description
        self.code = code

    def describe(self) -> str:
        return self.description

    @property
    def needs_propensities(self) -> bool:
        return self not in (EstimatorType.NAIVE, EstimatorType.DOM)

    @classmethod
    def parse(cls, code: Union[str, "EstimatorType"]) -> Optional["EstimatorType"]:
        if isinstance(code, EstimatorType):
            return code
        for item in list(EstimatorType):
            if code == item.code:
                return item


class EstimatorSpec(JsonObject):
    """
    An estimator type plus its arguments, parsed from strings such as
    ``"ht"`` or ``"shrunk_ht(0.25)"``.
    """

    _pattern = re.compile(r"^\s*([a-z_]+)\s*(?:\(\s*([^)]*)\s*\))?\s*$")

    @property
    def attributes(self) -> Set[str]:
        return {"type", "k", "lambdas"}

    def __init__(self, *, type: Union[str, EstimatorType], k: Optional[float] = None,
                 lambdas: Optional[Sequence[float]] = None):
        parsed = EstimatorType.parse(type)
        if parsed is None:
            raise InterferenceRequestError(f"unknown estimator {type!r}; expected one of {[e.code for e in EstimatorType]}")
        self._type = parsed
        self._k = None if k is None else ParamDef("k", float, low=0.0, high=1.0, open_low=True).validate(k)
        self._lambdas = None if lambdas is None else tuple(float(v) for v in lambdas)
        if parsed == EstimatorType.SHRUNK_HT and self._k is None:
            raise InterferenceRequestError("shrunk_ht requires a shrinkage factor, e.g. shrunk_ht(0.1)")

    @property
    def type(self) -> EstimatorType:
        return self._type

    @property
    def k(self) -> Optional[float]:
        return self._k

    @property
    def lambdas(self):
        return self._lambdas if self._lambdas is not None else (-1.0, -1.0)

    @property
    def label(self) -> str:
        if self._type == EstimatorType.SHRUNK_HT:
            return f"shrunk_ht({self._k:g})"
        if self._type == EstimatorType.GD and self._lambdas is not None:
            return f"gd({self._lambdas[0]:g},{self._lambdas[1]:g})"
        return self._type.code

    @classmethod
    def parse(cls, text: Union[str, "EstimatorSpec"]) -> "EstimatorSpec":
        if isinstance(text, EstimatorSpec):
            return text
        match = cls._pattern.match(str(text))
        if match is None:
            raise InterferenceRequestError(f"cannot parse estimator {text!r}")
        name, args = match.group(1), match.group(2)
        values = [float(a) for a in args.split(",")] if args else []
        if name == EstimatorType.SHRUNK_HT.code:
            if len(values) != 1:
                raise InterferenceRequestError("shrunk_ht takes exactly one argument")
            return EstimatorSpec(type=name, k=values[0])
        if name == EstimatorType.GD.code and values:
            if len(values) != 2:
                raise InterferenceRequestError("gd takes two arguments (lambda1, lambda2)")
            return EstimatorSpec(type=name, lambdas=values)
        if values:
            raise InterferenceRequestError(f"{name} takes no arguments")
        return EstimatorSpec(type=name)


class Estimate:
    """A container of an estimator's value and its diagnostics.

    Attributes:
        value (float): The estimate, ``nan`` when undefined.
        defined (bool): False when a required cell or arm was empty.
        diagnostics (dict): Cell counts, weight extremes and solver flags.

    Methods:
        get: Retrieves any key from the diagnostics.
    """

    logger = logging.getLogger(__name__)

    def __init__(self, *, value: Optional[float], diagnostics: Optional[Dict[str, Any]] = None):
        self.defined = value is not None and not math.isnan(value)
        self.value = float(value) if self.defined else math.nan
        self.diagnostics = diagnostics or {}

    @classmethod
    def undefined(cls, reason: str, **diagnostics) -> "Estimate":
        diagnostics["undefined_reason"] = reason
        return cls(value=None, diagnostics=diagnostics)

    def scaled(self, factor: float, **extra) -> "Estimate":
        diagnostics = dict(self.diagnostics)
        diagnostics.update(extra)
        return Estimate(value=self.value * factor if self.defined else None, diagnostics=diagnostics)

    def __getitem__(self, key):
        """Retrieves any key from the diagnostics, e.g. ``estimate["n_tau1"]``."""
        return self.diagnostics.get(key, None)

    def get(self, key, default=None):
        return self.diagnostics.get(key, default)

    def __float__(self):
        return self.value

    def __str__(self):
        return f"{self.value}" if self.defined else f"undefined ({self.get('undefined_reason')})"

    def __repr__(self):
        return f"<interference_lab.Estimate: {self}, {self.diagnostics}>"
