import logging
from typing import Optional

from interference_lab.errors import ConfigurationError, InterferenceRequestError
from interference_lab.models import ParamDef
from interference_lab.models.experiments import ExperimentConfig
from interference_lab.service import (AnalyticService, BaseService,
                                      DesignService, EstimatorService,
                                      ExposureService, GraphService,
                                      HarnessService, OutcomeService,
                                      PropensityService)


class Client(object):
    """A Client is the entry point to the library's engines.

    It holds the library-wide settings and hands them to every service it
    exposes, so that enumeration caps, Monte-Carlo sample counts and
    numerical tolerances are consistent across a session.

    >>> from interference_lab import Client
    >>> client = Client(mc_samples=50_000)
    >>> g = client.graphs.generate_graph({"family": "erdos_renyi", "p": 0.01}, n=200, seed=7)
    >>> pi = client.propensity.propensities(design, g, "binary")

    .. note:: Any attributes or methods prefixed with _underscores are intended to be "private" internal use only.
        They may be changed or removed at anytime.
    """
    _logger = logging.getLogger(__name__)

    def __init__(
        self,
        enumeration_cap: int = BaseService.DEFAULT_ENUMERATION_CAP,
        mc_samples: int = BaseService.DEFAULT_MC_SAMPLES,
        ridge: float = BaseService.DEFAULT_RIDGE,
        tolerance: float = BaseService.DEFAULT_TOLERANCE,
    ):
        try:
            #: The largest design support that is enumerated exactly.
            self.enumeration_cap = ParamDef("enumeration_cap", int, low=1).validate(enumeration_cap)
            #: Default number of draws for Monte-Carlo propensities and estimands.
            self.mc_samples = ParamDef("mc_samples", int, low=1).validate(mc_samples)
            # Ridge added to singular regression normal equations
            self.ridge = ParamDef("ridge", float, low=0.0).validate(ridge)
            #: Absolute tolerance for exactness checks.
            self.tolerance = ParamDef("tolerance", float, low=0.0).validate(tolerance)
        except InterferenceRequestError as e:
            raise ConfigurationError(str(e)) from e

    @property
    def settings(self) -> dict:
        return {
            "enumeration_cap": self.enumeration_cap,
            "mc_samples": self.mc_samples,
            "ridge": self.ridge,
            "tolerance": self.tolerance,
        }

    @property
    def graphs(self) -> GraphService:
        return GraphService(**self.settings)

    @property
    def exposures(self) -> ExposureService:
        return ExposureService(**self.settings)

    @property
    def outcomes(self) -> OutcomeService:
        return OutcomeService(**self.settings)

    @property
    def designs(self) -> DesignService:
        return DesignService(**self.settings)

    @property
    def propensity(self) -> PropensityService:
        return PropensityService(**self.settings)

    @property
    def estimators(self) -> EstimatorService:
        return EstimatorService(**self.settings)

    @property
    def analytic(self) -> AnalyticService:
        return AnalyticService(**self.settings)

    @property
    def harness(self) -> HarnessService:
        return HarnessService(**self.settings)

    def run(self, config: ExperimentConfig, output: Optional[str] = None, format: str = "csv"):
        """
        Run an experiment and optionally write its results.

        :param config: the experiment, or a path to its YAML file
        :param output: where to write the results; nothing is written when omitted
        :param format: ``csv`` or ``json``
        """
        if isinstance(config, str):
            config = ExperimentConfig.from_yaml(config)
        results = self.harness.run(config)
        if output is not None:
            self.harness.emit(results, output, format=format,
                              meta={"fingerprint": config.fingerprint, "config": config.to_dict()})
        return results
