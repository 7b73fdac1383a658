"""Field selection: every formula runs on ``float`` or on exact ``Fraction``.

Formula coefficients are built as ``Fraction`` so that multiplying them with
table values keeps the caller's field: ``Fraction * float`` is a float and
``Fraction * Fraction`` stays exact. Table values are never stored as plain
``int`` because ``int / int`` would silently fall back to float.
"""

from __future__ import annotations

import math
from decimal import Decimal
from fractions import Fraction
from typing import Union

Number = Union[float, Fraction]


def to_exact(value) -> Fraction:
    """Convert ints, ``"p/q"`` / decimal strings, Decimals or floats to a Fraction."""
    if isinstance(value, bool):
        raise TypeError(f"boolean is not a numeric outcome: {value!r}")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite value {value!r} is not rational")
        return Fraction(value)
    if isinstance(value, (int, Decimal)):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"not a rational number: {value!r}") from exc
    raise TypeError(f"unsupported numeric type {type(value).__name__}")


def to_float(value) -> float:
    if isinstance(value, bool):
        raise TypeError(f"boolean is not a numeric outcome: {value!r}")
    if isinstance(value, str):
        out = float(to_exact(value))
    else:
        out = float(value)
    if not math.isfinite(out):
        raise ValueError(f"non-finite value {value!r}")
    return out


def convert(value, exact: bool) -> Number:
    return to_exact(value) if exact else to_float(value)


def is_exact(value) -> bool:
    return isinstance(value, Fraction)


def zero_like(value) -> Number:
    return Fraction(0) if isinstance(value, Fraction) else 0.0


def format_number(value, exact: bool):
    """JSON-friendly rendering: ``"p/q"`` strings in exact mode, floats otherwise."""
    if value is None:
        return None
    if exact:
        frac = to_exact(value)
        return str(frac.numerator) if frac.denominator == 1 else f"{frac.numerator}/{frac.denominator}"
    return float(value)
