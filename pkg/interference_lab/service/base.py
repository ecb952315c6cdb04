from __future__ import annotations

import logging
from abc import ABCMeta
from typing import Optional, Union

import numpy as np

RandomSource = Union[None, int, np.random.SeedSequence, np.random.Generator]


class BaseService(metaclass=ABCMeta):
    """
    Shared settings and plumbing for the computational engines.

    Every service carries the same knobs so that a service can hand its
    configuration on to the siblings it depends on.
    """

    DEFAULT_ENUMERATION_CAP = 2 ** 20
    DEFAULT_MC_SAMPLES = 20_000
    DEFAULT_RIDGE = 1e-8
    DEFAULT_TOLERANCE = 1e-10

    def __init__(
        self,
        enumeration_cap: int = DEFAULT_ENUMERATION_CAP,
        mc_samples: int = DEFAULT_MC_SAMPLES,
        ridge: float = DEFAULT_RIDGE,
        tolerance: float = DEFAULT_TOLERANCE,
        logger: Optional[logging.Logger] = None,
    ):
        self.enumeration_cap = enumeration_cap
        self.mc_samples = mc_samples
        self.ridge = ridge
        self.tolerance = tolerance
        self._logger = logger if logger is not None else logging.getLogger(self.__class__.__module__)

    @property
    def settings(self) -> dict:
        return {
            "enumeration_cap": self.enumeration_cap,
            "mc_samples": self.mc_samples,
            "ridge": self.ridge,
            "tolerance": self.tolerance,
        }

    def _new_service(self, cls) -> "BaseService":
        return cls(**self.settings)

    @staticmethod
    def _rng(seed: RandomSource) -> np.random.Generator:
        """Accept an int seed, a SeedSequence or an existing Generator."""
        if isinstance(seed, np.random.Generator):
            return seed
        return np.random.default_rng(seed)
