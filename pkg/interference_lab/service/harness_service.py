from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from interference_lab.errors import (ConfigurationError,
                                     InterferenceLabError,
                                     InterferenceRequestError)
from interference_lab.models.designs import (ClusterDesign, Design,
                                             DesignParser,
                                             IndependentSetDesign,
                                             RerandomizedDesign)
from interference_lab.models.estimates import (Contrast, Estimand,
                                               EstimatorSpec, EstimatorType,
                                               ResolvedContrast)
from interference_lab.models.experiments import (ExperimentConfig,
                                                 Population, RunMode,
                                                 StrategySpec)
from interference_lab.models.exposures import (ExposedLevel,
                                               ExposureAssignment,
                                               ExposureModel)
from interference_lab.models.graphs import InterferenceGraph
from interference_lab.models.outcomes import PotentialOutcomeTable
from interference_lab.models.propensities import PropensityTable
from interference_lab.models.reports import ExactMoments, StrategyResult
from interference_lab.signature import SeedStreams

from .base import BaseService
from .design_service import DesignService
from .estimator_service import EstimatorService
from .exposure_service import ExposureService
from .graph_service import GraphService
from .outcome_service import OutcomeService
from .propensity_service import PropensityService


def _evaluate_in_worker(payload) -> StrategyResult:
    settings, config, strategy, g, t, estimand = payload
    return HarnessService(**settings).evaluate(config, strategy, g, t, estimand)


def _moments(values: np.ndarray, weights: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
    """Defined values, their normalised weights and the undefined share."""
    defined = ~np.isnan(values)
    total = weights.sum()
    undefined = float(weights[~defined].sum() / total) if total > 0 else 1.0
    kept = weights[defined]
    return values[defined], kept / kept.sum() if kept.sum() > 0 else kept, undefined


class HarnessService(BaseService):
    """
    Strategy evaluation: every (design, estimator) pair of an
    :class:`ExperimentConfig` is run against the configured estimand, by
    replicated draws or by exact enumeration of the design.

    Moments are conditional on the estimator being defined; the share of
    undefined draws is reported with every result.
    """

    @property
    def graphs(self) -> GraphService:
        return self._new_service(GraphService)

    @property
    def designs(self) -> DesignService:
        return self._new_service(DesignService)

    @property
    def exposures(self) -> ExposureService:
        return self._new_service(ExposureService)

    @property
    def outcomes(self) -> OutcomeService:
        return self._new_service(OutcomeService)

    @property
    def propensity(self) -> PropensityService:
        return self._new_service(PropensityService)

    @property
    def estimators(self) -> EstimatorService:
        return self._new_service(EstimatorService)

    # inputs

    def build_graph(self, config: ExperimentConfig) -> InterferenceGraph:
        """The interference graph named by ``config.graph``: a file, a random family or an edge list."""
        spec = dict(config.graph)
        if "file" in spec:
            return self.graphs.read_edge_list(spec["file"])
        if "family" in spec:
            if "n" not in spec:
                raise ConfigurationError("a generated graph needs n")
            n = spec.pop("n")
            seed = spec.pop("seed", None)
            rng = SeedStreams(config.seed).generator("graph") if seed is None else seed
            return self.graphs.generate_graph(spec, n, rng)
        if "n" not in spec:
            raise ConfigurationError("an edge-list graph needs n")
        return self.graphs.from_edge_list(spec["n"], spec["edges"])

    def build_outcomes(self, config: ExperimentConfig, g: InterferenceGraph) -> PotentialOutcomeTable:
        """The table of potential outcomes named by ``config.outcomes``."""
        spec = dict(config.outcomes)
        model = config.exposure_model
        if "file" in spec:
            t = self.outcomes.read_table(spec["file"])
        elif "generator" in spec:
            seed = spec.get("seed")
            rng = SeedStreams(config.seed).generator("outcomes") if seed is None else seed
            t = self.outcomes.generate_params(spec["generator"], g, seed=rng, model=model)
        else:
            linear = dict(spec["linear"])
            t = self.outcomes.linear_table(
                g, model, alpha=linear.get("alpha", 0.0), beta=linear.get("beta", 0.0),
                gamma=linear.get("gamma", 0.0), theta=linear.get("theta", 0.0))
        if spec.get("structural"):
            t = self.outcomes.apply_structural_model(t, spec["structural"], beta=spec.get("sharp_null_beta"))
        expected = self.exposures.level_counts(model, g)
        if t.n != g.n or not np.array_equal(t.level_counts, expected):
            raise ConfigurationError(
                f"the outcome table does not match the graph under {model.code} exposure "
                f"({t.n} units for a graph of {g.n})")
        return t

    def build_design(self, design: Dict[str, Any], g: InterferenceGraph, model: ExposureModel,
                     streams: SeedStreams) -> Design:
        """A design from its configuration mapping, building the cluster partition when one is needed."""
        try:
            return DesignParser.parse(design, graph=g, exposure_model=model,
                                      partition=self._partition(design, g, streams))
        except (InterferenceRequestError, KeyError, TypeError) as e:
            raise ConfigurationError(f"invalid design {design!r}: {e}") from e

    def _partition(self, design: Dict[str, Any], g: InterferenceGraph, streams: SeedStreams) -> Optional[np.ndarray]:
        if design.get("type") == RerandomizedDesign.type:
            return self._partition(design.get("base", {}), g, streams)
        if design.get("type") != ClusterDesign.type:
            return None
        if "partition_file" in design:
            return self.designs.read_partition(design["partition_file"])
        if "K" not in design:
            raise ConfigurationError("a cluster design needs K or a partition_file")
        seed = design.get("seed")
        rng = streams.generator("partition", int(design["K"])) if seed is None else seed
        return self.designs.greedy_partition(g, int(design["K"]), rng)

    def _marginal_estimand(self, config: ExperimentConfig, g: InterferenceGraph, t: PotentialOutcomeTable) -> float:
        streams = SeedStreams(config.seed)
        spec = config.estimand
        phi = self.build_design(spec.phi, g, config.exposure_model, streams)
        psi = None if spec.psi is None else self.build_design(spec.psi, g, config.exposure_model, streams)
        estimate = self.outcomes.marginal_estimand(
            t, g, config.exposure_model, phi, psi, form=spec.form, z=spec.z,
            samples=config.propensity_samples, seed=streams.generator("estimand"))
        if not estimate.defined:
            raise InterferenceRequestError(f"the marginal estimand is undefined under {phi.label}")
        return estimate.value

    # experiments

    def _for(self, config: ExperimentConfig) -> "HarnessService":
        settings = dict(self.settings, enumeration_cap=config.enumeration_cap)
        return HarnessService(logger=self._logger, **settings)

    def run(self, config: ExperimentConfig) -> List[StrategyResult]:
        """
        Evaluate every strategy of ``config``. Results come back in strategy
        order; infeasible strategies are reported with a ``skipped_reason``.
        """
        harness = self._for(config)
        if config.estimand.is_marginal and config.population == Population.POSITIVE:
            raise ConfigurationError("a marginal estimand is defined over all units; use population: all")
        g = harness.build_graph(config)
        t = harness.build_outcomes(config, g)
        estimand = harness._marginal_estimand(config, g, t) if config.estimand.is_marginal else None
        self._logger.info(f"running {len(config.strategies)} strategies on {g.n} units "
                          f"({config.mode.code}, fingerprint {config.fingerprint})")

        if config.workers > 1 and len(config.strategies) > 1:
            payloads = [(harness.settings, config, s, g, t, estimand) for s in config.strategies]
            with ProcessPoolExecutor(max_workers=config.workers) as pool:
                results = list(pool.map(_evaluate_in_worker, payloads))
        else:
            results = [harness.evaluate(config, s, g, t, estimand) for s in config.strategies]

        skipped = [r for r in results if r.is_skipped]
        if len(skipped) == len(results):
            self._logger.warning("no strategy could be evaluated")
        for result in skipped:
            self._logger.info(f"skipped {result.strategy}: {result.skipped_reason}")
        return results

    def evaluate(self, config: ExperimentConfig, strategy: StrategySpec, g: InterferenceGraph,
                 t: PotentialOutcomeTable, estimand: Optional[float] = None) -> StrategyResult:
        """One strategy's bias, variance and MSE. ``estimand`` carries a precomputed marginal estimand."""
        labels = dict(strategy=strategy.id, design=strategy.design_label, estimator=strategy.estimator.label,
                      estimand=config.estimand.label, seed=config.seed)
        try:
            return self._evaluate(config, strategy, g, t, estimand, labels)
        except InterferenceLabError as e:
            if isinstance(e, ConfigurationError):
                raise
            return StrategyResult.skipped(reason=str(e), **labels)

    def _evaluate(self, config, strategy, g, t, estimand, labels) -> StrategyResult:
        streams = SeedStreams(config.seed)
        model, level = config.exposure_model, config.exposed_level
        spec = strategy.estimator
        d = self.build_design(strategy.design, g, model, streams)
        if isinstance(d, IndependentSetDesign) and d.ego_mix_p < 1.0:
            self._report_unreachable_egos(d, g, streams)

        which = Estimand.DTE if config.estimand.is_marginal else config.estimand.estimand
        contrast = which.contrast(level)
        resolved = self.exposures.resolve_contrast(contrast, model, g, level, strict=False)

        pi = None
        if spec.type.needs_propensities or config.population == Population.POSITIVE:
            pi = self.propensity.propensities(
                d, g, model, method=config.propensity, samples=config.propensity_samples,
                seed=streams.generator(f"propensity|{strategy.id}"))

        units = self._population(config, d, g, model, contrast, resolved, pi, spec)
        if len(units) == 0:
            return StrategyResult.skipped(reason="no unit satisfies positivity for this strategy", **labels)
        full = len(units) == g.n
        sub = resolved if full else resolved.restrict(units)
        if estimand is None:
            table = t if full else t.restrict(units)
            estimand = float((table.outcomes(sub.z1, sub.e1) - table.outcomes(sub.z0, sub.e0)).mean())

        pi_sub = pi if pi is None or full else pi.restrict(units)
        auxiliaries = None
        if spec.type == EstimatorType.GD and strategy.auxiliaries == "alpha":
            auxiliaries = (t.alpha[units], t.alpha[units])
        covariates = None if t.covariates is None else t.covariates[units]
        weights = None
        if spec.type == EstimatorType.MODEL_DEP:
            weights = self.estimators.model_dependent_weights(g, model, pi, which, units=units)

        if config.mode == RunMode.EXACT:
            support = self.designs.enumerate_support(d)
            Z, p = np.asarray(support.assignments), np.asarray(support.probabilities)
        else:
            Z = np.vstack([self.designs.sample(d, streams.generator(strategy.id, r))
                           for r in range(config.replicates)])
            p = np.ones(len(Z))
        values = self._estimates(spec, Z, g, model, t, units, sub, pi_sub, auxiliaries, covariates, weights)
        return self._summarise(values, p, estimand, config.mode, labels, population=len(units))

    def _population(self, config, d, g, model, contrast: Contrast, resolved: ResolvedContrast,
                    pi: Optional[PropensityTable], spec: EstimatorSpec) -> np.ndarray:
        if config.population == Population.POSITIVE:
            p1 = pi.cell(resolved.z1, resolved.e1)
            p0 = pi.cell(resolved.z0, resolved.e0)
            units = np.flatnonzero(resolved.resolved & (p1 > 0) & (p0 > 0))
            if len(units) < g.n:
                self._logger.info(f"{d.label}: evaluating {len(units)} of {g.n} units with positive propensities")
            return units
        if not resolved.resolved.all():
            unit = int(np.flatnonzero(~resolved.resolved)[0])
            raise InterferenceRequestError(f"unit {unit} has no exposure level for the estimand")
        if spec.type.needs_propensities:
            report = self.designs.positivity_check(d, g, model, (contrast.tau1, contrast.tau0),
                                                   contrast.exposed_level, propensities=pi)
            blocking = [(i, cell, value) for i, cell, value in report.failures if value <= 0.0]
            if blocking:
                i, cell, _ = blocking[0]
                raise InterferenceRequestError(
                    f"positivity fails for {len(blocking)} unit cells, first unit {i} at cell {cell}")
        return np.arange(g.n)

    def _report_unreachable_egos(self, d: IndependentSetDesign, g: InterferenceGraph, streams: SeedStreams):
        probabilities = self.designs.ego_probabilities(g, d.ego_mix_p, seed=streams.generator("egos"))
        never = np.flatnonzero(probabilities <= 0.0)
        if len(never):
            self._logger.warning(f"{len(never)} units are never egos under {d.label}: {never.tolist()[:20]}")

    def _estimates(self, spec, Z, g, model, t, units, contrast, pi, auxiliaries, covariates, weights) -> np.ndarray:
        E = self.exposures.expose_many(model, g, Z)
        Y = t.outcomes_many(Z, E)
        estimators = self.estimators
        values = np.empty(len(Z))
        for s in range(len(Z)):
            assignment = ExposureAssignment(z=Z[s, units], e=E[s, units])
            estimate = estimators.estimate(spec, Y[s, units], assignment, contrast, pi,
                                           auxiliaries, covariates, weights)
            values[s] = estimate.value
        return values

    def _summarise(self, values: np.ndarray, weights: np.ndarray, estimand: float, mode: RunMode,
                   labels: Dict[str, Any], population: int) -> StrategyResult:
        kept, q, undefined = _moments(values, weights)
        if len(kept) == 0:
            return StrategyResult(undef_rate=1.0, replicates=0, estimand_value=estimand, population=population,
                                  skipped_reason="the estimator is undefined on every draw", **labels)
        mean = float(q @ kept)
        centred = kept - mean
        variance = float(q @ centred ** 2)
        bias = mean - estimand
        if mode == RunMode.EXACT:
            bias_se = var_se = mse_se = 0.0
        else:
            count = len(kept)
            root = math.sqrt(count)
            bias_se = float(kept.std(ddof=1) / root) if count > 1 else math.nan
            fourth = float((centred ** 4).mean())
            var_se = math.sqrt(max(fourth - variance ** 2, 0.0) / count)
            mse_se = float(((kept - estimand) ** 2).std(ddof=1) / root) if count > 1 else math.nan
        return StrategyResult(
            bias=bias, bias_se=bias_se, var=variance, mse=bias ** 2 + variance, undef_rate=undefined,
            replicates=len(kept), estimand_value=estimand, mean_estimate=mean, var_se=var_se, mse_se=mse_se,
            population=population, **labels)

    # exact moments

    def exact_expectation(
        self,
        d: Design,
        g: InterferenceGraph,
        model: Union[str, ExposureModel],
        t: PotentialOutcomeTable,
        estimator: Union[str, EstimatorSpec],
        contrast: Union[Contrast, Estimand, ResolvedContrast] = Estimand.DTE,
        exposed_level: Union[str, ExposedLevel] = ExposedLevel.FULL,
        pi: Optional[PropensityTable] = None,
        auxiliaries: Optional[Tuple[np.ndarray, np.ndarray]] = None,
        covariates: Optional[np.ndarray] = None,
        weights: Optional[np.ndarray] = None,
    ) -> ExactMoments:
        """
        sum_z p(z) est(z) and the matching variance over the enumerated
        support of ``d``, conditional on the estimator being defined.

        Propensities default to the ``auto`` method and model-dependent
        weights to the minimum-norm DTE weights.

        :raises SupportTooLargeError: if the support exceeds the enumeration cap
        """
        spec = EstimatorSpec.parse(estimator)
        model = ExposureModel.parse(model)
        resolved = self.exposures.resolve_contrast(contrast, model, g, exposed_level, strict=False)
        if spec.type.needs_propensities and pi is None:
            pi = self.propensity.propensities(d, g, model)
        if spec.type == EstimatorType.MODEL_DEP and weights is None:
            weights = self.estimators.model_dependent_weights(g, model, pi)
        support = self.designs.enumerate_support(d)
        Z = np.asarray(support.assignments)
        values = self._estimates(spec, Z, g, model, t, np.arange(g.n), resolved, pi, auxiliaries, covariates, weights)
        kept, q, undefined = _moments(values, np.asarray(support.probabilities))
        if len(kept) == 0:
            return ExactMoments(expectation=math.nan, variance=math.nan, undefined_mass=1.0,
                                support_points=len(support))
        mean = float(q @ kept)
        return ExactMoments(expectation=mean, variance=float(q @ (kept - mean) ** 2),
                            undefined_mass=undefined, support_points=len(support))

    # output

    @staticmethod
    def results_frame(results: Sequence[StrategyResult]) -> pd.DataFrame:
        columns = list(StrategyResult.COLUMNS + StrategyResult.EXTRA_COLUMNS)
        return pd.DataFrame([r.to_record() for r in results], columns=columns)

    def emit(self, results: Sequence[StrategyResult], path: str, format: str = "csv",
             meta: Optional[Dict[str, Any]] = None) -> None:
        """
        Write results as CSV (header always present) or as a JSON array of
        records. ``meta`` is written next to the file as ``<path>.meta.json``.

        :raises InterferenceRequestError: for an unknown format or an unwritable path
        """
        frame = self.results_frame(results)
        try:
            if format == "csv":
                frame.to_csv(path, index=False)
            elif format == "json":
                with open(path, "w") as f:
                    json.dump(json.loads(frame.to_json(orient="records")), f, indent=2)
            else:
                raise InterferenceRequestError(f"unknown output format {format!r}; expected csv or json")
            if meta is not None:
                with open(f"{path}.meta.json", "w") as f:
                    json.dump(meta, f, indent=2, sort_keys=True)
        except OSError as e:
            raise InterferenceRequestError(f"cannot write results to {path}: {e}") from e
        self._logger.debug(f"wrote {len(frame)} results to {path}")

    @staticmethod
    def read_results(path: str) -> pd.DataFrame:
        if os.path.splitext(path)[1] == ".json":
            with open(path, "r") as f:
                records = json.load(f)
            return pd.DataFrame(records, columns=list(StrategyResult.COLUMNS + StrategyResult.EXTRA_COLUMNS))
        return pd.read_csv(path)
