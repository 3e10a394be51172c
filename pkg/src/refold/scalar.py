"""Scalar arithmetic in two modes: exact rationals and floats with one global tolerance.

Exact mode uses fractions.Fraction (or int); comparisons are decided with no
tolerance.  Float mode routes every equality/sign test through a single
module-level epsilon, configurable via set_epsilon() or the REFOLD_EPS
environment variable (handled by the CLI).  Mixing a float into an expression
demotes the comparison to tolerant mode automatically.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Optional, Union

Scalar = Union[int, Fraction, float]

DEFAULT_EPSILON = 1e-9
_epsilon = DEFAULT_EPSILON


def set_epsilon(eps: float) -> None:
    global _epsilon
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    _epsilon = float(eps)


def get_epsilon() -> float:
    return _epsilon


def is_exact(x: Scalar) -> bool:
    return not isinstance(x, float)


def is_zero(x: Scalar) -> bool:
    if isinstance(x, float):
        return abs(x) <= _epsilon
    return x == 0


def eq(a: Scalar, b: Scalar) -> bool:
    return is_zero(a - b)


def sign(x: Scalar) -> int:
    if is_zero(x):
        return 0
    return 1 if x > 0 else -1


def le(a: Scalar, b: Scalar) -> bool:
    return a < b or eq(a, b)


def lt(a: Scalar, b: Scalar) -> bool:
    return a < b and not eq(a, b)


def to_float(x: Scalar) -> float:
    return float(x)


def half(x: Scalar) -> Scalar:
    if isinstance(x, float):
        return x / 2.0
    return Fraction(x) / 2


def rational_sqrt(x: Scalar) -> Optional[Fraction]:
    """Exact square root of a nonnegative rational, or None if irrational."""
    if isinstance(x, float):
        return None
    f = Fraction(x)
    if f < 0:
        raise ValueError("square root of negative value")
    n, d = f.numerator, f.denominator
    rn, rd = math.isqrt(n), math.isqrt(d)
    if rn * rn == n and rd * rd == d:
        return Fraction(rn, rd)
    return None


def scalar_sqrt(x: Scalar) -> Scalar:
    """Square root, staying exact when the argument is a rational square."""
    r = rational_sqrt(x) if not isinstance(x, float) else None
    if r is not None:
        return r
    return math.sqrt(float(x))


def parse_scalar(text: str, exact: bool = True) -> Scalar:
    """Parse "p/q", integer, or decimal notation.

    In exact mode decimal strings become exact rationals ("0.5" -> 1/2); in
    float mode everything becomes a float.
    """
    text = text.strip()
    if exact:
        f = Fraction(text)
        if f.denominator == 1:
            return f.numerator
        return f
    if "/" in text:
        return float(Fraction(text))
    return float(text)


def format_scalar(x: Scalar) -> str:
    if isinstance(x, float):
        return repr(x)
    f = Fraction(x)
    if f.denominator == 1:
        return str(f.numerator)
    return f"{f.numerator}/{f.denominator}"
