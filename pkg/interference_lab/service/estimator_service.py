from __future__ import annotations

from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from interference_lab.errors import (FeatureNotSupportedError,
                                     InfeasibleSystemError,
                                     InterferenceRequestError,
                                     PositivityError)
from interference_lab.models.designs import Design
from interference_lab.models.estimates import (Contrast, Estimand, Estimate,
                                               EstimatorSpec, EstimatorType,
                                               ResolvedContrast)
from interference_lab.models.exposures import (ExposedLevel,
                                               ExposureAssignment,
                                               ExposureModel)
from interference_lab.models.graphs import InterferenceGraph
from interference_lab.models.propensities import PropensityTable
from interference_lab.models.reports import (SystemSizeReport,
                                             WeightCheckReport)

from .base import BaseService
from .design_service import DesignService
from .exposure_service import ExposureService
from .propensity_service import PropensityService, _tabulate

WeightSource = Union[np.ndarray, Callable[[np.ndarray, np.ndarray], np.ndarray]]


def _resolved(contrast) -> ResolvedContrast:
    if not isinstance(contrast, ResolvedContrast):
        raise InterferenceRequestError(
            "estimators take a contrast resolved per unit; see ExposureService.resolve_contrast")
    return contrast


def _counts(in1: np.ndarray, in0: np.ndarray) -> dict:
    return {"n_tau1": int(in1.sum()), "n_tau0": int(in0.sum())}


class EstimatorService(BaseService):
    """
    Estimators of a contrast from one observed draw, and the tools for
    building and checking linear unbiased weights.

    Every estimator takes the observed outcomes, the realised
    :class:`ExposureAssignment` and a :class:`ResolvedContrast`; the
    weighting estimators also take a :class:`PropensityTable`. An empty arm
    or cell yields an undefined :class:`Estimate`; a zero propensity for a
    required cell raises :class:`PositivityError`.
    """

    @property
    def designs(self) -> DesignService:
        return self._new_service(DesignService)

    @property
    def exposures(self) -> ExposureService:
        return self._new_service(ExposureService)

    @property
    def propensity(self) -> PropensityService:
        return self._new_service(PropensityService)

    # difference in means

    def naive_dim(self, obs: np.ndarray, assignment: ExposureAssignment) -> Estimate:
        """Mean outcome of treated units minus that of control units."""
        obs = np.asarray(obs, dtype=float)
        treated = assignment.z == 1
        diagnostics = {"n_treated": int(treated.sum()), "n_control": int((~treated).sum())}
        if not treated.any() or treated.all():
            return Estimate.undefined("empty treatment arm", **diagnostics)
        return Estimate(value=obs[treated].mean() - obs[~treated].mean(), diagnostics=diagnostics)

    def cell_dim(self, obs: np.ndarray, assignment: ExposureAssignment, contrast: ResolvedContrast) -> Estimate:
        """Mean outcome of units in tau1 minus that of units in tau0."""
        contrast = _resolved(contrast)
        obs = np.asarray(obs, dtype=float)
        in1 = assignment.in_cells(contrast.z1, contrast.e1)
        in0 = assignment.in_cells(contrast.z0, contrast.e0)
        diagnostics = _counts(in1, in0)
        if not in1.any() or not in0.any():
            return Estimate.undefined("empty contrast cell", **diagnostics)
        return Estimate(value=obs[in1].mean() - obs[in0].mean(), diagnostics=diagnostics)

    # inverse propensity weighting

    def _cell_propensities(self, pi: PropensityTable, contrast: ResolvedContrast) -> Tuple[np.ndarray, np.ndarray]:
        p1 = pi.cell(contrast.z1, contrast.e1)
        p0 = pi.cell(contrast.z0, contrast.e0)
        for p, z, e in ((p1, contrast.z1, contrast.e1), (p0, contrast.z0, contrast.e0)):
            if (p <= 0.0).any():
                unit = int(np.flatnonzero(p <= 0.0)[0])
                raise PositivityError("propensity of a contrast cell is zero", unit, (int(z[unit]), int(e[unit])))
        return p1, p0

    def horvitz_thompson(self, obs: np.ndarray, assignment: ExposureAssignment, pi: PropensityTable,
                         contrast: ResolvedContrast) -> Estimate:
        """
        (1/n) [sum over tau1 of Y_i / pi_i(tau1) - sum over tau0 of Y_i / pi_i(tau0)].

        :raises PositivityError: if some unit cannot reach one of the cells
        """
        contrast = _resolved(contrast)
        obs = np.asarray(obs, dtype=float)
        p1, p0 = self._cell_propensities(pi, contrast)
        in1 = assignment.in_cells(contrast.z1, contrast.e1)
        in0 = assignment.in_cells(contrast.z0, contrast.e0)
        value = ((obs * in1 / p1).sum() - (obs * in0 / p0).sum()) / len(obs)
        diagnostics = _counts(in1, in0)
        diagnostics["max_weight"] = float(max((1.0 / p1).max(), (1.0 / p0).max())) if len(obs) else 0.0
        return Estimate(value=value, diagnostics=diagnostics)

    def hajek(self, obs: np.ndarray, assignment: ExposureAssignment, pi: PropensityTable,
              contrast: ResolvedContrast) -> Estimate:
        """Inverse-propensity weighted cell means, each normalised by its weight sum."""
        contrast = _resolved(contrast)
        obs = np.asarray(obs, dtype=float)
        p1, p0 = self._cell_propensities(pi, contrast)
        in1 = assignment.in_cells(contrast.z1, contrast.e1)
        in0 = assignment.in_cells(contrast.z0, contrast.e0)
        diagnostics = _counts(in1, in0)
        if not in1.any() or not in0.any():
            return Estimate.undefined("empty contrast cell", **diagnostics)
        w1, w0 = in1 / p1, in0 / p0
        return Estimate(value=(w1 @ obs) / w1.sum() - (w0 @ obs) / w0.sum(), diagnostics=diagnostics)

    def generalized_difference(
        self,
        obs: np.ndarray,
        assignment: ExposureAssignment,
        pi: PropensityTable,
        contrast: ResolvedContrast,
        a: Sequence[float],
        b: Sequence[float],
        lambda1: float = -1.0,
        lambda2: float = -1.0,
    ) -> Estimate:
        """
        HT arms corrected with auxiliary values ``a`` (for tau1) and ``b``
        (for tau0)::

            Y1 = (1/n) [sum_tau1 Y/pi1 + lambda1 (sum_tau1 a/pi1 - sum a)]
            Y0 = (1/n) [sum_tau0 Y/pi0 + lambda2 (sum_tau0 b/pi0 - sum b)]

        ``lambda1 = lambda2 = -1`` is the difference estimator.
        """
        contrast = _resolved(contrast)
        obs = np.asarray(obs, dtype=float)
        a = np.broadcast_to(np.asarray(a, dtype=float), obs.shape)
        b = np.broadcast_to(np.asarray(b, dtype=float), obs.shape)
        p1, p0 = self._cell_propensities(pi, contrast)
        in1 = assignment.in_cells(contrast.z1, contrast.e1)
        in0 = assignment.in_cells(contrast.z0, contrast.e0)
        n = len(obs)
        arm1 = ((obs * in1 / p1).sum() + lambda1 * ((a * in1 / p1).sum() - a.sum())) / n
        arm0 = ((obs * in0 / p0).sum() + lambda2 * ((b * in0 / p0).sum() - b.sum())) / n
        diagnostics = _counts(in1, in0)
        diagnostics.update(lambda1=lambda1, lambda2=lambda2)
        return Estimate(value=arm1 - arm0, diagnostics=diagnostics)

    @staticmethod
    def _design_matrix(z: np.ndarray, e: np.ndarray, covariates: Optional[np.ndarray]) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        e = np.asarray(e, dtype=float)
        columns = [np.ones_like(z), z, e, z * e]
        if covariates is not None:
            columns.append(np.asarray(covariates, dtype=float).reshape(len(z), -1))
        return np.column_stack(columns)

    def greg(self, obs: np.ndarray, assignment: ExposureAssignment, pi: PropensityTable,
             contrast: ResolvedContrast, covariates: Optional[np.ndarray] = None) -> Estimate:
        """
        Generalized regression estimator.

        Fits Y on (1, z, e, z e[, covariates]) by least squares weighted with
        1 / pi_i(Z_i, E_i), predicts both cells for every unit and adds the
        inverse-propensity weighted residuals of each cell. Singular normal
        equations are solved with a small ridge and flagged in
        ``diagnostics["ridge"]``.
        """
        contrast = _resolved(contrast)
        obs = np.asarray(obs, dtype=float)
        p1, p0 = self._cell_propensities(pi, contrast)
        realised = pi.cell(assignment.z, assignment.e)
        if (realised <= 0.0).any():
            unit = int(np.flatnonzero(realised <= 0.0)[0])
            raise PositivityError("realised cell has zero propensity", unit, assignment.pairs[unit])

        X = self._design_matrix(assignment.z, assignment.e, covariates)
        root = np.sqrt(1.0 / realised)
        A, y = X * root[:, None], obs * root
        coef, _, rank, _ = linalg.lstsq(A, y)
        ridge = rank < X.shape[1]
        if ridge:
            self._logger.warning(f"GREG normal equations have rank {rank} < {X.shape[1]}; adding ridge {self.ridge:g}")
            coef = linalg.solve(A.T @ A + self.ridge * np.eye(X.shape[1]), A.T @ y, assume_a="pos")

        predicted1 = self._design_matrix(contrast.z1, contrast.e1, covariates) @ coef
        predicted0 = self._design_matrix(contrast.z0, contrast.e0, covariates) @ coef
        residual = obs - X @ coef
        in1 = assignment.in_cells(contrast.z1, contrast.e1)
        in0 = assignment.in_cells(contrast.z0, contrast.e0)
        n = len(obs)
        value = (predicted1 - predicted0).mean() + ((residual * in1 / p1).sum() - (residual * in0 / p0).sum()) / n
        diagnostics = _counts(in1, in0)
        diagnostics.update(ridge=bool(ridge), rank=int(rank))
        return Estimate(value=value, diagnostics=diagnostics)

    def shrunk_ht(self, obs: np.ndarray, assignment: ExposureAssignment, pi: PropensityTable,
                  contrast: ResolvedContrast, k: float) -> Estimate:
        """``(1 - k)`` times the Horvitz-Thompson estimate."""
        if not 0.0 <= k <= 1.0:
            raise InterferenceRequestError(f"shrinkage factor {k} must lie in [0, 1]")
        return self.horvitz_thompson(obs, assignment, pi, contrast).scaled(1.0 - k, k=k)

    # linear weights

    def ht_weights(self, pi: PropensityTable, contrast: ResolvedContrast) -> np.ndarray:
        """HT weights as an ``(n, 2, W)`` array over cells: 1/(n pi) on tau1, -1/(n pi) on tau0."""
        contrast = _resolved(contrast)
        p1, p0 = self._cell_propensities(pi, contrast)
        n = pi.n
        weights = np.zeros((n, 2, pi.width))
        rows = np.arange(n)
        weights[rows, contrast.z1, contrast.e1] = 1.0 / (n * p1)
        weights[rows, contrast.z0, contrast.e0] = -1.0 / (n * p0)
        return weights

    def model_dependent_weights(self, g: InterferenceGraph, model: Union[str, ExposureModel],
                                pi: PropensityTable, target: Union[str, Estimand] = Estimand.DTE,
                                units: Optional[Sequence[int]] = None) -> np.ndarray:
        """
        Minimum-norm cell weights that are unbiased for DTE when C_i = 0.

        For each unit the weights satisfy
        ``sum_e w(1,e) pi(1,e) = 1/n`` and ``w(0,e) pi(0,e) + w(1,e) pi(1,e) = 0``.
        With ``units`` the systems are solved for those units only, ``n``
        becomes their count and the result has one row per listed unit.

        :raises InfeasibleSystemError: when a unit's system has no solution
        """
        if Estimand.parse(target) != Estimand.DTE:
            raise FeatureNotSupportedError(f"model-dependent weights for {target}")
        levels = self.exposures.level_counts(model, g)
        units = np.arange(pi.n) if units is None else np.asarray(units, dtype=np.int64)
        n = len(units)
        weights = np.zeros((n, 2, pi.width))
        for row, i in enumerate(units):
            K = int(levels[i])
            pi0, pi1 = pi.values[i, 0, :K], pi.values[i, 1, :K]
            system = np.zeros((K + 1, 2 * K))
            system[0, K:] = pi1
            system[1:, :K] = np.diag(pi0)
            system[1:, K:] = np.diag(pi1)
            rhs = np.zeros(K + 1)
            rhs[0] = 1.0 / n
            solution = linalg.pinv(system) @ rhs
            residual = float(np.abs(system @ solution - rhs).max())
            if residual > max(self.tolerance, 1e-8 / n):
                raise InfeasibleSystemError(f"weight system is inconsistent, residual {residual:.2e}", int(i))
            weights[row, 0, :K] = solution[:K]
            weights[row, 1, :K] = solution[K:]
        self._logger.debug(f"solved {n} model-dependent weight systems")
        return weights

    def model_dependent_estimate(self, obs: np.ndarray, assignment: ExposureAssignment,
                                 weights: np.ndarray) -> Estimate:
        """sum_i w_i(Z_i, E_i) Y_i for cell weights ``weights``."""
        obs = np.asarray(obs, dtype=float)
        w = np.asarray(weights)[np.arange(len(obs)), assignment.z, assignment.e]
        return Estimate(value=float(w @ obs), diagnostics={"max_weight": float(np.abs(w).max()) if len(w) else 0.0})

    def verify_unbiased_weights(
        self,
        weights: WeightSource,
        d: Design,
        g: InterferenceGraph,
        model: Union[str, ExposureModel],
        contrast: Union[Contrast, Estimand, ResolvedContrast],
        exposed_level: Union[str, ExposedLevel] = ExposedLevel.FULL,
        tolerance: Optional[float] = None,
    ) -> WeightCheckReport:
        """
        Check that a linear estimator ``sum_i w_i(z) Y_i`` is unbiased for
        every table: for each unit, the probability-weighted weights sum to
        1/n over assignments putting it in tau1, to -1/n over tau0 and to 0
        over every other cell.

        ``weights`` is an ``(n, 2, W)`` cell array, an ``(S, n)`` matrix in
        support order, or a callable ``(z, e) -> w``.
        """
        tolerance = self.tolerance if tolerance is None else tolerance
        resolved = self.exposures.resolve_contrast(contrast, model, g, exposed_level)
        support = self.designs.enumerate_support(d)
        Z = support.assignments
        E = self.exposures.expose_many(model, g, Z)
        W = self._weight_matrix(weights, Z, E)
        levels = self.exposures.level_counts(model, g)
        width = int(levels.max())
        sums = _tabulate(Z, E, support.probabilities[:, None] * W, width)

        n = g.n
        rows = np.arange(n)
        target = np.zeros((n, 2, width))
        target[rows, resolved.z1, resolved.e1] = 1.0 / n
        target[rows, resolved.z0, resolved.e0] = -1.0 / n
        reachable = np.arange(width)[None, None, :] < levels[:, None, None]
        residual = np.where(reachable, sums - target, 0.0)
        checked = int(2 * levels.sum())

        families = [
            ("tau1", lambda i: (int(resolved.z1[i]), int(resolved.e1[i]))),
            ("tau0", lambda i: (int(resolved.z0[i]), int(resolved.e0[i]))),
        ]
        for family, cell in families:
            for i in range(n):
                z, e = cell(i)
                if abs(residual[i, z, e]) > tolerance:
                    return WeightCheckReport(passed=False, checked=checked, family=family, unit=i, cell=(z, e),
                                             residual=float(residual[i, z, e]))
        other = np.abs(residual) > tolerance
        other[rows, resolved.z1, resolved.e1] = False
        other[rows, resolved.z0, resolved.e0] = False
        if other.any():
            i, z, e = (int(v) for v in np.argwhere(other)[0])
            return WeightCheckReport(passed=False, checked=checked, family="other", unit=i, cell=(z, e),
                                     residual=float(residual[i, z, e]))
        return WeightCheckReport(passed=True, checked=checked)

    @staticmethod
    def _weight_matrix(weights: WeightSource, Z: np.ndarray, E: np.ndarray) -> np.ndarray:
        if callable(weights):
            return np.stack([np.asarray(weights(z, e), dtype=float) for z, e in zip(Z, E)])
        weights = np.asarray(weights, dtype=float)
        if weights.ndim == 3:
            return weights[np.arange(Z.shape[1])[None, :], Z.astype(np.int64), E]
        if weights.shape != Z.shape:
            raise InterferenceRequestError(f"weight matrix has shape {weights.shape}, the support {Z.shape}")
        return weights

    def linear_unbiased_system_size(self, d: Design, g: InterferenceGraph,
                                    model: Union[str, ExposureModel]) -> SystemSizeReport:
        """Unknowns and equations of every unit's unbiased-weight system."""
        table, _ = self.propensity.enumerated_propensity(d, g, model)
        levels = self.exposures.level_counts(model, g)
        reachable = [int((table.values[i, :, :levels[i]] > 0).sum()) for i in range(g.n)]
        support = self.designs.enumerate_support(d)
        return SystemSizeReport(support_points=len(support), equations=2 * levels, reachable_equations=reachable)

    # dispatch

    def estimate(
        self,
        spec: Union[str, EstimatorSpec],
        obs: np.ndarray,
        assignment: ExposureAssignment,
        contrast: ResolvedContrast,
        pi: Optional[PropensityTable] = None,
        auxiliaries: Optional[Tuple[np.ndarray, np.ndarray]] = None,
        covariates: Optional[np.ndarray] = None,
        weights: Optional[np.ndarray] = None,
    ) -> Estimate:
        """Evaluate the estimator named by ``spec`` on one draw."""
        spec = EstimatorSpec.parse(spec)
        kind = spec.type
        if kind == EstimatorType.NAIVE:
            return self.naive_dim(obs, assignment)
        if kind == EstimatorType.DOM:
            return self.cell_dim(obs, assignment, contrast)
        if pi is None:
            raise InterferenceRequestError(f"{kind.code} needs propensity scores")
        if kind == EstimatorType.HT:
            return self.horvitz_thompson(obs, assignment, pi, contrast)
        if kind == EstimatorType.HAJEK:
            return self.hajek(obs, assignment, pi, contrast)
        if kind == EstimatorType.SHRUNK_HT:
            return self.shrunk_ht(obs, assignment, pi, contrast, spec.k)
        if kind == EstimatorType.GD:
            a, b = auxiliaries if auxiliaries is not None else (0.0, 0.0)
            return self.generalized_difference(obs, assignment, pi, contrast, a, b, *spec.lambdas)
        if kind == EstimatorType.GREG:
            return self.greg(obs, assignment, pi, contrast, covariates)
        if weights is None:
            raise InterferenceRequestError("model_dep needs weights from model_dependent_weights")
        return self.model_dependent_estimate(obs, assignment, weights)
