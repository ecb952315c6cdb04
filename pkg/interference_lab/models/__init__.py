"""Immutable, self-validating model objects and their parameter definitions."""

from __future__ import annotations

import logging
from abc import ABCMeta, abstractmethod
from functools import wraps
from typing import Any, Callable, Optional, Sequence, Set, Union

import numpy as np

from interference_lab.errors import InterferenceRequestError, ObjectFormationError


def show_unknown_key_warning(name: Union[str, object], others: dict):
    others.pop("type", None)
    if others:
        if not isinstance(name, str):
            name = name.__class__.__name__
        logging.getLogger(__name__).debug(f"{name} ignored constructor arguments: {', '.join(others)}")


def as_readonly(values: Any, dtype: Any = None) -> np.ndarray:
    """Copy ``values`` into a numpy array that cannot be written to."""
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


def _plain(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if callable(getattr(value, "to_dict", None)):
        return _plain(value.to_dict())
    return getattr(value, "code", value) if hasattr(value, "describe") else value


def _present(value: Any) -> bool:
    if value is None:
        return False
    return len(value) > 0 if hasattr(value, "__len__") else True


class BaseObject:
    def __str__(self):
        return f"<interference_lab.{self.__class__.__name__}>"


class JsonObject(BaseObject, metaclass=ABCMeta):
    """
    A model whose ``attributes`` define its dictionary form. Methods decorated
    with :class:`JsonValidator` are run by :meth:`validate_json`.
    """

    @property
    @abstractmethod
    def attributes(self) -> Set[str]:
        """
        Names of the attributes making up the dictionary form.

        :meta: private
        """
        return set()

    def validate_json(self) -> None:
        """
        :raises ObjectFormationError: if a validator rejects the object

        :meta: private
        """
        for name in dir(type(self)):
            if getattr(getattr(type(self), name, None), "validator", False):
                getattr(self, name)()

    def get_non_null_attributes(self) -> dict:
        """
        The non-empty ``attributes`` as plain Python values, enums by code.

        :meta: private
        """
        values = ((key, getattr(self, key, None)) for key in sorted(self.attributes))
        return {key: _plain(value) for key, value in values if _present(value)}

    def to_dict(self, *args) -> dict:
        """
        Validate, then return the dictionary form.

        :raises ObjectFormationError: if the object was not valid

        :meta: private
        """
        self.validate_json()
        return self.get_non_null_attributes()

    def __repr__(self):
        values = self.get_non_null_attributes()
        return f"<interference_lab.{self.__class__.__name__}: {values}>" if values else str(self)


class JsonValidator:
    """
    Marks a predicate method as a validator; a falsy result raises
    :class:`ObjectFormationError` with ``message``.
    """

    def __init__(self, message: str):
        self.message = message

    def __call__(self, func: Callable) -> Callable[..., None]:
        @wraps(func)
        def check(*args, **kwargs):
            if not func(*args, **kwargs):
                raise ObjectFormationError(self.message)

        check.validator = True
        return check


class ParamDef(object):
    """
    The definition of a numeric model parameter: its expected type and the
    closed or open interval it must fall in.
    """
    def __init__(
        self,
        name: str,
        type: Any,
        low: Optional[float] = None,
        high: Optional[float] = None,
        open_low: bool = False,
        open_high: bool = False,
        acceptable_values: Optional[Sequence[Any]] = None,
    ):
        self._name = name
        self._type = type
        self._low = low
        self._high = high
        self._open_low = open_low
        self._open_high = open_high
        self._acceptable_values = acceptable_values

    @property
    def name(self):
        return self._name

    @property
    def type(self):
        return self._type

    def describe_range(self) -> str:
        left = "(" if self._open_low else "["
        right = ")" if self._open_high else "]"
        low = self._low if self._low is not None else "-inf"
        high = self._high if self._high is not None else "inf"
        return f"{left}{low}, {high}{right}"

    def validate(self, value: Any) -> Any:
        if isinstance(value, bool) and self._type is not bool:
            raise InterferenceRequestError(f"{self._name}={value} must be of type {self._type.__name__}")
        if not isinstance(value, self._type):
            try:
                cast = self._type(value)
            except (TypeError, ValueError):
                logging.getLogger(__name__).debug(f"could not cast value {value} into expected type {self._type}")
                raise InterferenceRequestError(f"{self._name}={value} must be of type {self._type.__name__}")
            if self._type is int and cast != value:
                raise InterferenceRequestError(f"{self._name}={value} must be an integer")
            value = cast

        if self._acceptable_values is not None and value not in self._acceptable_values:
            raise InterferenceRequestError(f"{self._name}={value} must be one of {self._acceptable_values}")

        below = self._low is not None and (value <= self._low if self._open_low else value < self._low)
        above = self._high is not None and (value >= self._high if self._open_high else value > self._high)
        if below or above:
            raise InterferenceRequestError(f"{self._name}={value} must lie in {self.describe_range()}")

        return value
