from .analytic_service import AnalyticService  # noqa
from .base import BaseService, RandomSource  # noqa
from .design_service import DesignService  # noqa
from .estimator_service import EstimatorService  # noqa
from .exposure_service import ExposureService  # noqa
from .graph_service import GraphService  # noqa
from .harness_service import HarnessService  # noqa
from .outcome_service import OutcomeService  # noqa
from .propensity_service import PropensityService  # noqa
