"""Utility methods for warpspmv"""
import dataclasses
import typing

import numpy as np

from .const import VALUE_DTYPE, DimensionMismatchError


def only_fields(
    cls, message_dict: typing.Dict[str, typing.Any]
) -> typing.Dict[str, typing.Any]:
    """Return dict with only valid fields."""
    if dataclasses.is_dataclass(cls):
        field_names = set(f.name for f in dataclasses.fields(cls))
        valid_fields = set(message_dict.keys()).intersection(field_names)
        return {key: message_dict[key] for key in valid_fields}

    return message_dict


def as_vector(x: typing.Any, length: int, what: str = "x") -> np.ndarray:
    """Convert to a float64 vector, checking its length."""
    vector = np.asarray(x, dtype=VALUE_DTYPE)
    if (vector.ndim != 1) or (vector.shape[0] != length):
        raise DimensionMismatchError(length, int(vector.size), what=what)

    return vector


def parse_number_list(text: str, kind=int) -> typing.List[typing.Any]:
    """Parse "1,2,3" or "32..256:32" into a list of numbers."""
    text = text.strip()
    if not text:
        return []

    if ".." in text:
        # start..stop[:step], inclusive
        range_text, _, step_text = text.partition(":")
        start_text, stop_text = range_text.split("..", maxsplit=1)
        start, stop = kind(start_text), kind(stop_text)
        step = kind(step_text) if step_text else kind(1)
        if step <= 0:
            raise ValueError(f"Step must be positive: {text}")

        values = []
        value = start
        while value <= stop:
            values.append(value)
            value += step

        return values

    return [kind(v) for v in text.split(",") if v.strip()]


def parse_bool(value: typing.Any) -> bool:
    """Interpret ini-style booleans (true/yes/on/1)."""
    if isinstance(value, str):
        return value.strip().lower() in ("1", "true", "yes", "on")

    return bool(value)
