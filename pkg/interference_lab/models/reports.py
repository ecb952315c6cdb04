from __future__ import annotations

import math
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from interference_lab.models import JsonObject, JsonValidator, as_readonly


def _close(a: Optional[float], b: Optional[float], tolerance: float) -> Optional[bool]:
    if a is None or b is None:
        return None
    return abs(a - b) <= tolerance


class BiasReport(JsonObject):
    """
    A closed-form bias next to the enumeration oracle.

    ``analytic_value`` is the formula as stated. ``corrected_value`` is set
    when the stated formula is known to be inexact and an exact assembly of
    the same quantities is available. ``decomposition`` names the additive
    terms that make up the analytic value.
    """

    @property
    def attributes(self) -> Set[str]:
        return {"analytic_value", "corrected_value", "oracle_value", "expectation", "decomposition", "note"}

    def __init__(
        self,
        *,
        analytic_value: float,
        oracle_value: Optional[float] = None,
        corrected_value: Optional[float] = None,
        expectation: Optional[float] = None,
        decomposition: Optional[Dict[str, float]] = None,
        tolerance: float = 1e-10,
        note: Optional[str] = None,
    ):
        self.analytic_value = float(analytic_value)
        self.oracle_value = None if oracle_value is None else float(oracle_value)
        self.corrected_value = None if corrected_value is None else float(corrected_value)
        self.expectation = None if expectation is None else float(expectation)
        self.decomposition = dict(decomposition or {})
        self.tolerance = tolerance
        self.note = note

    @property
    def agrees(self) -> Optional[bool]:
        """Whether the analytic value matches the oracle, ``None`` without an oracle."""
        return _close(self.analytic_value, self.oracle_value, self.tolerance)

    @property
    def corrected_agrees(self) -> Optional[bool]:
        return _close(self.corrected_value, self.oracle_value, self.tolerance)

    @property
    def discrepancy(self) -> Optional[float]:
        if self.oracle_value is None:
            return None
        return self.analytic_value - self.oracle_value


class VarianceReport(JsonObject):
    """
    A variance assembled three ways: the stated block formula, an exact
    assembly from the same plug-in moments, and the enumeration oracle.
    """

    @property
    def attributes(self) -> Set[str]:
        return {"closed_form_value", "derived_value", "oracle_value", "moment_source"}

    def __init__(
        self,
        *,
        closed_form_value: float,
        derived_value: float,
        oracle_value: Optional[float] = None,
        moment_source: str = "enumerate",
        tolerance: float = 1e-9,
    ):
        self.closed_form_value = float(closed_form_value)
        self.derived_value = float(derived_value)
        self.oracle_value = None if oracle_value is None else float(oracle_value)
        self.moment_source = moment_source
        self.tolerance = tolerance

    @property
    def derived_agrees(self) -> Optional[bool]:
        return _close(self.derived_value, self.oracle_value, self.tolerance)

    @property
    def closed_form_agrees(self) -> Optional[bool]:
        return _close(self.closed_form_value, self.oracle_value, self.tolerance)


class PositivityReport(JsonObject):
    """
    Per-unit positivity verdicts for a set of required cells.

    ``failures`` lists ``(unit, (z, e), pi)`` for every required cell whose
    propensity is 0 or 1; an unresolvable cell is reported with ``e = -1``.
    """

    @property
    def attributes(self) -> Set[str]:
        return {"passed", "failures"}

    def __init__(self, *, passed: Sequence[bool], failures: Sequence[Tuple[int, Tuple[int, int], float]]):
        self._passed = as_readonly(passed, dtype=bool)
        self._failures = list(failures)

    @property
    def passed(self) -> np.ndarray:
        return self._passed

    @property
    def failures(self) -> List[Tuple[int, Tuple[int, int], float]]:
        return list(self._failures)

    @property
    def ok(self) -> bool:
        return bool(self._passed.all())

    @property
    def failing_units(self) -> np.ndarray:
        return np.flatnonzero(~self._passed)

    @property
    def passing_units(self) -> np.ndarray:
        return np.flatnonzero(self._passed)

    def __bool__(self) -> bool:
        return self.ok


class WeightCheckReport(JsonObject):
    """
    Outcome of checking a linear estimator's weights against the
    unbiasedness equations. On failure the first violated equation is
    recorded: its family (``tau1``, ``tau0`` or ``other``), unit, cell and
    residual.
    """

    @property
    def attributes(self) -> Set[str]:
        return {"passed", "family", "unit", "cell", "residual", "checked"}

    def __init__(
        self,
        *,
        passed: bool,
        checked: int,
        family: Optional[str] = None,
        unit: Optional[int] = None,
        cell: Optional[Tuple[int, int]] = None,
        residual: Optional[float] = None,
    ):
        self.passed = bool(passed)
        self.checked = int(checked)
        self.family = family
        self.unit = unit
        self.cell = cell
        self.residual = residual

    def __bool__(self) -> bool:
        return self.passed

    def __str__(self):
        if self.passed:
            return f"all {self.checked} equations hold"
        return f"{self.family} equation for unit {self.unit} at cell {self.cell} is off by {self.residual:.3e}"


class ShrinkageReport(JsonObject):
    """
    MSE of ``(1 - k) * HT`` over a grid of shrinkage factors, from exact moments.
    """

    @property
    def attributes(self) -> Set[str]:
        return {"estimand", "ht_mean", "ht_variance", "ht_mse", "best_k", "best_mse", "k0"}

    def __init__(
        self,
        *,
        estimand: float,
        ht_mean: float,
        ht_variance: float,
        grid: Sequence[float],
        mse: Sequence[float],
    ):
        self.estimand = float(estimand)
        self.ht_mean = float(ht_mean)
        self.ht_variance = float(ht_variance)
        self.grid = as_readonly(grid, dtype=float)
        self.mse = as_readonly(mse, dtype=float)
        self.ht_mse = self.ht_variance + (self.ht_mean - self.estimand) ** 2
        best = int(np.argmin(self.mse))
        self.best_k = float(self.grid[best])
        self.best_mse = float(self.mse[best])
        denominator = self.ht_variance + self.estimand ** 2
        self.k0 = min(1.0, 2.0 * self.ht_variance / denominator) if denominator > 0 else math.nan

    @property
    def improves(self) -> bool:
        return self.best_mse < self.ht_mse


class SystemSizeReport(JsonObject):
    """
    Per-unit size of the unbiased-weight system: unknowns (support points),
    equations (2 K_i) and equations with a non-empty cell.
    """

    @property
    def attributes(self) -> Set[str]:
        return {"support_points", "equations", "reachable_equations"}

    def __init__(self, *, support_points: int, equations: Sequence[int], reachable_equations: Sequence[int]):
        self.support_points = int(support_points)
        self.equations = as_readonly(equations, dtype=np.int64)
        self.reachable_equations = as_readonly(reachable_equations, dtype=np.int64)

    @property
    def underdetermined(self) -> np.ndarray:
        """True where infinitely many linear unbiased estimators exist."""
        return self.support_points > self.reachable_equations


class ExactMoments(JsonObject):
    """
    First two moments of an estimator over an enumerated design, conditional
    on the estimator being defined.
    """

    @property
    def attributes(self) -> Set[str]:
        return {"expectation", "variance", "undefined_mass", "support_points"}

    def __init__(self, *, expectation: float, variance: float, undefined_mass: float, support_points: int):
        self.expectation = float(expectation)
        self.variance = float(variance)
        self.undefined_mass = float(undefined_mass)
        self.support_points = int(support_points)

    def __iter__(self):
        return iter((self.expectation, self.variance))


class StrategyResult(JsonObject):
    """
    Bias, variance and MSE of one (design, estimator) strategy against an estimand.

    Moments are taken over defined draws; ``undef_rate`` is the share (or
    probability mass, in exact mode) of undefined draws.
    """

    COLUMNS = ("strategy", "design", "estimator", "estimand", "bias", "bias_se", "var", "mse",
               "undef_rate", "replicates", "seed")
    EXTRA_COLUMNS = ("estimand_value", "mean_estimate", "var_se", "mse_se", "population", "skipped_reason")

    @property
    def attributes(self) -> Set[str]:
        return set(self.COLUMNS + self.EXTRA_COLUMNS)

    def __init__(
        self,
        *,
        strategy: str,
        design: str,
        estimator: str,
        estimand: str,
        seed: int,
        bias: float = math.nan,
        bias_se: float = math.nan,
        var: float = math.nan,
        mse: float = math.nan,
        undef_rate: float = math.nan,
        replicates: int = 0,
        estimand_value: float = math.nan,
        mean_estimate: float = math.nan,
        var_se: float = math.nan,
        mse_se: float = math.nan,
        population: int = 0,
        skipped_reason: Optional[str] = None,
    ):
        self.strategy = strategy
        self.design = design
        self.estimator = estimator
        self.estimand = estimand
        self.seed = int(seed)
        self.bias = float(bias)
        self.bias_se = float(bias_se)
        self.var = float(var)
        self.mse = float(mse)
        self.undef_rate = float(undef_rate)
        self.replicates = int(replicates)
        self.estimand_value = float(estimand_value)
        self.mean_estimate = float(mean_estimate)
        self.var_se = float(var_se)
        self.mse_se = float(mse_se)
        self.population = int(population)
        self.skipped_reason = skipped_reason
        self.validate_json()

    @classmethod
    def skipped(cls, *, strategy: str, design: str, estimator: str, estimand: str, seed: int,
                reason: str) -> "StrategyResult":
        return cls(strategy=strategy, design=design, estimator=estimator, estimand=estimand, seed=seed,
                   skipped_reason=reason)

    @property
    def is_skipped(self) -> bool:
        return self.skipped_reason is not None

    def to_record(self) -> Dict[str, Any]:
        """A flat row in output column order."""
        return {column: getattr(self, column) for column in self.COLUMNS + self.EXTRA_COLUMNS}

    @JsonValidator("undef_rate must lie in [0, 1]")
    def _validate_undef_rate(self) -> bool:
        return math.isnan(self.undef_rate) or -1e-12 <= self.undef_rate <= 1 + 1e-12

    @JsonValidator("mse must equal bias^2 + var")
    def _validate_mse(self) -> bool:
        if any(math.isnan(v) for v in (self.mse, self.bias, self.var)):
            return True
        return abs(self.mse - (self.bias ** 2 + self.var)) <= 1e-9 * max(1.0, abs(self.mse))
