"""Exact-number coercion and unit parsing helpers."""

import re
from fractions import Fraction
from numbers import Rational

from .errors import InvalidConfigurationError

_TIME_UNITS = {
    "ms": Fraction(1, 1000),
    "s": Fraction(1),
    "sec": Fraction(1),
    "min": Fraction(60),
    "h": Fraction(3600),
}
_SIZE_UNITS = {"bit": 1, "bits": 1, "byte": 8, "bytes": 8}
_QUANTITY = re.compile(r"^\s*([0-9]+(?:\.[0-9]+)?)\s*([A-Za-z]+)\s*$")


def exact(x) -> Fraction:
    """Convert ints, decimal strings and floats to a Fraction.

    Floats go through their shortest repr so that ``0.001`` becomes 1/1000
    rather than the nearest binary double.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(repr(x))
    if isinstance(x, str):
        return Fraction(x.strip())
    raise TypeError(f"cannot convert {type(x).__name__} to an exact number")


def _split(text, units, what):
    m = _QUANTITY.match(text)
    if not m or m.group(2) not in units:
        raise InvalidConfigurationError(
            f"bad {what} {text!r}: expected '<number> <unit>' with unit in {sorted(units)}"
        )
    return Fraction(m.group(1)) * units[m.group(2)]


def parse_duration(text: str) -> Fraction:
    """'15 min' -> 900 seconds. A unit suffix is mandatory."""
    return _split(text, _TIME_UNITS, "duration")


def parse_size_bits(text: str) -> Fraction:
    """'100 byte' -> 800 bits."""
    return _split(text, _SIZE_UNITS, "message size")


def format_duration(seconds: Fraction) -> str:
    seconds = exact(seconds)
    if seconds and seconds % 60 == 0:
        return f"{seconds / 60} min"
    if seconds.denominator == 1:
        return f"{seconds} s"
    ms = seconds * 1000
    if ms.denominator == 1:
        return f"{ms} ms"
    raise InvalidConfigurationError(f"duration {seconds} s is not a whole number of ms")
