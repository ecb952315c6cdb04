from typing import Any, Dict, Optional, Tuple


class InterferenceLabError(Exception):
    """Base class for library errors"""


class InterferenceRequestError(InterferenceLabError):
    """Error raised when an operation receives arguments outside its domain."""


class FeatureNotSupportedError(InterferenceRequestError):
    """Error raised when no formula or implementation covers the request."""
    def __init__(self, action: str):
        msg = f"{action} is not supported for this combination of inputs"
        super(InterferenceRequestError, self).__init__(msg)


class ObjectFormationError(InterferenceLabError):
    """Error raised when a constructed object is not valid/malformed"""


class ConfigurationError(InterferenceLabError):
    """Error raised when an experiment configuration cannot be interpreted."""


class PositivityError(InterferenceLabError):
    """Error raised when a required propensity score is zero or one.

    .. note ::
        The failing unit and cell are kept on the exception so callers can
        report them, e.g. ``err.unit`` and ``err.cell``.
    """

    def __init__(self, message: str, unit: int, cell: Optional[Tuple[int, int]] = None):
        msg = f"{message} (unit {unit}, cell {cell})"
        #: The index of the first unit violating positivity
        self.unit = unit
        #: The (z, e) cell whose propensity is degenerate
        self.cell = cell
        super(PositivityError, self).__init__(msg)


class SupportTooLargeError(InterferenceRequestError):
    """Error raised when exact enumeration would exceed the configured cap."""

    def __init__(self, size: float, cap: int):
        self.size = size
        self.cap = cap
        super(InterferenceRequestError, self).__init__(
            f"design support of size {size:.0f} exceeds the enumeration cap {cap}; use Monte Carlo instead")


class RerandomizationError(InterferenceLabError):
    """
    Error raised when re-randomization exhausts its draw budget.

    ``cell_hits`` maps every constrained cell to the number of draws that met
    its minimum count on their own.
    """

    def __init__(self, tries: int, cell_hits: Dict[Tuple[int, Any], int]):
        self.tries = tries
        self.cell_hits = dict(cell_hits)
        hits = ", ".join(f"{cell}: {count}/{tries}" for cell, count in self.cell_hits.items())
        super(RerandomizationError, self).__init__(
            f"no acceptable assignment after {tries} draws (draws meeting each cell minimum: {hits})")


class InfeasibleSystemError(InterferenceLabError):
    """Error raised when a per-unit weight system has no solution."""

    def __init__(self, message: str, unit: int):
        self.unit = unit
        super(InfeasibleSystemError, self).__init__(f"{message} (unit {unit})")
