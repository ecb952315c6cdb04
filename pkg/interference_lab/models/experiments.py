from __future__ import annotations

import logging
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Set, Union

import yaml

from interference_lab.errors import ConfigurationError, InterferenceRequestError
from interference_lab.models import JsonObject, JsonValidator, ParamDef
from interference_lab.models.estimates import Estimand, EstimatorSpec
from interference_lab.models.exposures import ExposedLevel, ExposureModel
from interference_lab.models.outcomes import MarginalForm, OutcomeGenerator
from interference_lab.signature import ConfigFingerprint


class RunMode(Enum):
    """
    How a strategy's moments are obtained.
    """

    MONTE_CARLO = ('replicated draws from the design', 'monte_carlo')
    EXACT = ('exact sums over the enumerated design support', 'exact_enumeration')

    def __init__(self, description: str, code: str):
        self.description = description
        self.code = code

    def describe(self) -> str:
        return self.description

    @classmethod
    def parse(cls, code: Union[str, "RunMode"]) -> Optional["RunMode"]:
        if isinstance(code, RunMode):
            return code
        for item in list(RunMode):
            if code in (item.code, item.name.lower()):
                return item


class Population(Enum):
    """
    Which units a strategy is evaluated on.
    """

    ALL = ('every unit; strategies violating positivity are skipped', 'all')
    POSITIVE = ('units with positive propensity for both contrast cells', 'positive')

    def __init__(self, description: str, code: str):
        self.description = description
        self.code = code

    def describe(self) -> str:
        return self.description

    @classmethod
    def parse(cls, code: Union[str, "Population"]) -> Optional["Population"]:
        if isinstance(code, Population):
            return code
        for item in list(Population):
            if code == item.code:
                return item


class StrategySpec(JsonObject):
    """
    One (design, estimator) pair. ``design`` is the mapping handed to
    :class:`~interference_lab.models.designs.DesignParser`.
    """

    @property
    def attributes(self) -> Set[str]:
        return {"id", "design", "estimator", "auxiliaries"}

    def __init__(self, *, design: Dict[str, Any], estimator: Union[str, EstimatorSpec],
                 id: Optional[str] = None, auxiliaries: str = "zero", **others: dict):
        if not isinstance(design, dict) or "type" not in design:
            raise ConfigurationError(f"strategy design must be a mapping with a type, got {design!r}")
        self.design = dict(design)
        try:
            self.estimator = EstimatorSpec.parse(estimator)
        except InterferenceRequestError as e:
            raise ConfigurationError(str(e)) from e
        self.auxiliaries = auxiliaries
        self.id = id or f"{self._design_label()}|{self.estimator.label}"
        self.validate_json()

    def _design_label(self) -> str:
        params = ",".join(f"{k}={v}" for k, v in sorted(self.design.items())
                          if k != "type" and not isinstance(v, (dict, list)))
        return f"{self.design['type']}({params})" if params else self.design["type"]

    @property
    def design_label(self) -> str:
        return self._design_label()

    def to_dict(self, *args) -> dict:
        self.validate_json()
        return {"id": self.id, "design": self.design, "estimator": self.estimator.label,
                "auxiliaries": self.auxiliaries}

    @JsonValidator("auxiliaries must be zero or alpha")
    def _validate_auxiliaries(self) -> bool:
        return self.auxiliaries in ("zero", "alpha")


class EstimandSpec(JsonObject):
    """
    Either a fixed estimand (``DTE``, ``TTE``, ``gamma1``, ``gamma2``) or a
    marginal estimand defined by one or two policies.
    """

    @property
    def attributes(self) -> Set[str]:
        return {"estimand", "form", "phi", "psi", "z"}

    def __init__(
        self,
        *,
        estimand: Optional[Union[str, Estimand]] = None,
        form: Optional[Union[str, MarginalForm]] = None,
        phi: Optional[Dict[str, Any]] = None,
        psi: Optional[Dict[str, Any]] = None,
        z: int = 1,
    ):
        self.estimand = Estimand.parse(estimand) if estimand is not None else None
        self.form = MarginalForm.parse(form) if form is not None else None
        self.phi = phi
        self.psi = psi
        self.z = z
        self.validate_json()

    @property
    def is_marginal(self) -> bool:
        return self.form is not None

    @property
    def label(self) -> str:
        return self.form.code if self.is_marginal else self.estimand.code

    @classmethod
    def parse(cls, value: Union[str, Dict[str, Any]]) -> "EstimandSpec":
        if isinstance(value, dict):
            value = dict(value)
            if value.pop("type", "marginal") != "marginal":
                raise ConfigurationError("an estimand mapping must have type: marginal")
            return cls(form=value.pop("form", MarginalForm.THETA_PHI.code), phi=value.pop("phi", None),
                       psi=value.pop("psi", None), z=value.pop("z", 1))
        estimand = Estimand.parse(value)
        if estimand is None:
            raise ConfigurationError(f"unknown estimand {value!r}; expected one of {[e.code for e in Estimand]}")
        return cls(estimand=estimand)

    @JsonValidator("an estimand is either fixed or marginal")
    def _validate_kind(self) -> bool:
        return (self.estimand is None) != (self.form is None)

    @JsonValidator("a marginal estimand needs a phi policy, and a psi policy unless form is theta_phi")
    def _validate_policies(self) -> bool:
        if self.form is None:
            return True
        if self.phi is None:
            return False
        return self.form == MarginalForm.THETA_PHI or self.psi is not None


class ExperimentConfig(JsonObject):
    """
    A complete strategy-evaluation experiment.

    >>> config = ExperimentConfig.from_yaml("configs/small_exact.yaml")
    >>> config.fingerprint
    """

    logger = logging.getLogger(__name__)

    @property
    def attributes(self) -> Set[str]:
        return {"graph", "exposure_model", "exposed_level", "outcomes", "estimand", "strategies",
                "replicates", "seed", "mode", "population", "propensity", "propensity_samples",
                "workers", "enumeration_cap"}

    def __init__(
        self,
        *,
        graph: Dict[str, Any],
        outcomes: Dict[str, Any],
        strategies: Sequence[Union[Dict[str, Any], StrategySpec]],
        estimand: Union[str, Dict[str, Any]] = "DTE",
        exposure_model: str = "binary",
        exposed_level: str = "full",
        replicates: int = 1000,
        seed: int = 0,
        mode: str = "monte_carlo",
        population: str = "all",
        propensity: str = "auto",
        propensity_samples: int = 20000,
        workers: int = 1,
        enumeration_cap: int = 2 ** 20,
        **others: dict,
    ):
        if others:
            raise ConfigurationError(f"unknown configuration keys: {', '.join(sorted(others))}")
        self.graph = dict(graph)
        self.outcomes = dict(outcomes)
        self.exposure_model = ExposureModel.parse(exposure_model)
        self.exposed_level = ExposedLevel.parse(exposed_level)
        self.mode = RunMode.parse(mode)
        self.population = Population.parse(population)
        self.estimand = EstimandSpec.parse(estimand)
        self.strategies = [s if isinstance(s, StrategySpec) else StrategySpec(**s) for s in strategies]
        self.propensity = propensity
        try:
            self.replicates = ParamDef("replicates", int, low=1).validate(replicates)
            self.seed = ParamDef("seed", int, low=0).validate(seed)
            self.propensity_samples = ParamDef("propensity_samples", int, low=1).validate(propensity_samples)
            self.workers = ParamDef("workers", int, low=1).validate(workers)
            self.enumeration_cap = ParamDef("enumeration_cap", int, low=1).validate(enumeration_cap)
        except InterferenceRequestError as e:
            raise ConfigurationError(str(e)) from e
        self._validate()

    def _validate(self):
        checks = [
            (self.exposure_model is not None, "exposure_model must be binary, symmetric or general"),
            (self.exposed_level is not None, "exposed_level must be one or full"),
            (self.mode is not None, "mode must be monte_carlo or exact_enumeration"),
            (self.population is not None, "population must be all or positive"),
            (self.propensity in ("auto", "analytic", "enumerated", "monte_carlo"),
             "propensity must be auto, analytic, enumerated or monte_carlo"),
            (len(self.strategies) > 0, "at least one strategy is required"),
            (len({s.id for s in self.strategies}) == len(self.strategies), "strategy ids must be unique"),
            ("file" in self.graph or "family" in self.graph or "edges" in self.graph,
             "graph needs a file, a family or an edge list"),
            ("file" in self.outcomes or "generator" in self.outcomes or "linear" in self.outcomes,
             "outcomes need a file, a generator or linear parameters"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigurationError(message)
        generator = self.outcomes.get("generator")
        if generator is not None and OutcomeGenerator.parse(generator) is None:
            raise ConfigurationError(f"unknown outcome generator {generator!r}")

    @classmethod
    def parse(cls, config: Dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(config, dict):
            raise ConfigurationError("an experiment configuration must be a mapping")
        try:
            return cls(**config)
        except TypeError as e:
            raise ConfigurationError(f"malformed configuration: {e}") from e

    @classmethod
    def from_yaml(cls, path: str) -> "ExperimentConfig":
        with open(path, "r") as f:
            try:
                return cls.parse(yaml.safe_load(f))
            except yaml.YAMLError as e:
                raise ConfigurationError(f"could not read {path}: {e}") from e

    def to_dict(self, *args) -> dict:
        return {
            "graph": self.graph,
            "outcomes": self.outcomes,
            "estimand": self.estimand.to_dict(),
            "exposure_model": self.exposure_model.code,
            "exposed_level": self.exposed_level.code,
            "strategies": [s.to_dict() for s in self.strategies],
            "replicates": self.replicates,
            "seed": self.seed,
            "mode": self.mode.code,
            "population": self.population.code,
            "propensity": self.propensity,
            "propensity_samples": self.propensity_samples,
            "workers": self.workers,
            "enumeration_cap": self.enumeration_cap,
        }

    @property
    def fingerprint(self) -> str:
        return ConfigFingerprint().fingerprint(self.to_dict())

    def replace(self, **changes) -> "ExperimentConfig":
        """A copy with some configuration keys replaced."""
        values = self.to_dict()
        values["estimand"] = self._estimand_config()
        values.update(changes)
        return ExperimentConfig.parse(values)

    def with_mode(self, mode: Union[str, RunMode]) -> "ExperimentConfig":
        return self.replace(mode=RunMode.parse(mode).code)

    def _estimand_config(self) -> Union[str, Dict[str, Any]]:
        if not self.estimand.is_marginal:
            return self.estimand.estimand.code
        config = {"type": "marginal", "form": self.estimand.form.code, "phi": self.estimand.phi, "z": self.estimand.z}
        if self.estimand.psi is not None:
            config["psi"] = self.estimand.psi
        return config
