"""Exact floor/ceil of fraction-times-count expressions.

Binary floats make floor(0.3 * 10) come out as 2. Quantile bounds and
sample-size math in this package are specified over the decimal value the
caller wrote, so fractions go through Fraction(str(x)), which reads back
the shortest decimal representation of the float.
"""

from __future__ import annotations

import math
from fractions import Fraction

__all__ = ["exact_floor", "exact_ceil"]


def _as_fraction(x) -> Fraction:
    if isinstance(x, float):
        return Fraction(str(x))
    return Fraction(x)


def exact_floor(fraction, n: int) -> int:
    """floor(fraction * n) with decimal semantics for float fractions."""
    return math.floor(_as_fraction(fraction) * n)


def exact_ceil(fraction, n: int) -> int:
    """ceil(fraction * n) with decimal semantics for float fractions."""
    return math.ceil(_as_fraction(fraction) * n)
