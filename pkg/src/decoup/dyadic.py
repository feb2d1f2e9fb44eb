"""Exact nonnegative dyadic rationals ``mantissa * 2**exponent``.

All cap geometry is built from these.  Arithmetic never rounds; the only
lossy step is :meth:`Dyadic.to_float`, used where the geometry is handed to
floating-point numerics.
"""

from __future__ import annotations

import re
from fractions import Fraction

__all__ = ["Dyadic", "dyadic_add", "dyadic_mul", "pow2", "parse_dyadic"]

_LITERAL = re.compile(r"^\s*(\d+)\s*\*\s*2\^\s*(-?\d+)\s*$")


def _canonical(mantissa: int, exponent: int) -> tuple[int, int]:
    if mantissa == 0:
        return 0, 0
    # strip trailing zero bits so the mantissa is odd
    tz = (mantissa & -mantissa).bit_length() - 1
    return mantissa >> tz, exponent + tz


class Dyadic:
    """Immutable value ``mantissa * 2**exponent`` in canonical form.

    The mantissa is odd (or the value is zero, stored as ``0 * 2^0``).
    Mantissas are Python ints, so deep scales never overflow.
    """

    __slots__ = ("_m", "_e")

    def __init__(self, mantissa: int = 0, exponent: int = 0):
        if not isinstance(mantissa, int) or not isinstance(exponent, int):
            raise TypeError("mantissa and exponent must be integers")
        if mantissa < 0:
            raise ValueError("negative dyadics are not supported")
        self._m, self._e = _canonical(mantissa, exponent)

    @classmethod
    def _raw(cls, m: int, e: int) -> "Dyadic":
        obj = object.__new__(cls)
        obj._m, obj._e = _canonical(m, e)
        return obj

    @property
    def mantissa(self) -> int:
        return self._m

    @property
    def exponent(self) -> int:
        return self._e

    # -- constructors -----------------------------------------------------

    @classmethod
    def from_int(cls, k: int) -> "Dyadic":
        return cls(k, 0)

    @classmethod
    def from_fraction(cls, q: Fraction | int) -> "Dyadic":
        q = Fraction(q)
        den = q.denominator
        if den & (den - 1):
            raise ValueError(f"{q} is not dyadic")
        return cls(q.numerator, -(den.bit_length() - 1))

    # -- arithmetic --------------------------------------------------------

    def _align(self, other: "Dyadic") -> tuple[int, int, int]:
        e = min(self._e, other._e)
        return self._m << (self._e - e), other._m << (other._e - e), e

    def __add__(self, other: "Dyadic") -> "Dyadic":
        if not isinstance(other, Dyadic):
            return NotImplemented
        if self._m == 0:
            return other
        if other._m == 0:
            return self
        a, b, e = self._align(other)
        return Dyadic._raw(a + b, e)

    def __sub__(self, other: "Dyadic") -> "Dyadic":
        if not isinstance(other, Dyadic):
            return NotImplemented
        a, b, e = self._align(other)
        if b > a:
            raise ValueError("dyadic subtraction would go negative")
        return Dyadic._raw(a - b, e)

    def __mul__(self, other: "Dyadic") -> "Dyadic":
        if isinstance(other, int):
            other = Dyadic(other)
        if not isinstance(other, Dyadic):
            return NotImplemented
        return Dyadic._raw(self._m * other._m, self._e + other._e)

    __rmul__ = __mul__

    def __truediv__(self, other: "Dyadic") -> "Dyadic":
        """Exact division; the divisor must be a power of two."""
        if isinstance(other, int):
            other = Dyadic(other)
        if not isinstance(other, Dyadic):
            return NotImplemented
        if other._m == 0:
            raise ZeroDivisionError("division by zero dyadic")
        if other._m != 1:
            raise ValueError(f"divisor {other} is not a power of two")
        return Dyadic._raw(self._m, self._e - other._e)

    def __pow__(self, k: int) -> "Dyadic":
        if not isinstance(k, int):
            return NotImplemented
        if k < 0:
            if self._m != 1:
                raise ValueError("negative powers only of powers of two")
            return Dyadic._raw(1, self._e * k)
        return Dyadic._raw(self._m**k, self._e * k)

    def mul_pow2(self, k: int) -> "Dyadic":
        """Multiply by ``2**k`` (``k`` may be negative)."""
        return Dyadic._raw(self._m, self._e + k) if self._m else self

    def is_power_of_two(self) -> bool:
        return self._m == 1

    def log2(self) -> int:
        """Exact base-2 logarithm of a power of two."""
        if self._m != 1:
            raise ValueError(f"{self} is not a power of two")
        return self._e

    # -- comparison --------------------------------------------------------

    def _cmp(self, other: "Dyadic") -> int:
        a, b, _ = self._align(other)
        return (a > b) - (a < b)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, int):
            other = Dyadic(other) if other >= 0 else None
        if not isinstance(other, Dyadic):
            return NotImplemented if other is not None else False
        return self._m == other._m and self._e == other._e

    def __hash__(self) -> int:
        return hash((self._m, self._e))

    def __lt__(self, other: "Dyadic") -> bool:
        return self._cmp(other) < 0

    def __le__(self, other: "Dyadic") -> bool:
        return self._cmp(other) <= 0

    def __gt__(self, other: "Dyadic") -> bool:
        return self._cmp(other) > 0

    def __ge__(self, other: "Dyadic") -> bool:
        return self._cmp(other) >= 0

    def __bool__(self) -> bool:
        return self._m != 0

    # -- conversion --------------------------------------------------------

    def to_fraction(self) -> Fraction:
        return Fraction(self._m) * Fraction(2) ** self._e

    def to_float(self) -> float:
        """Lossy conversion for the floating-point boundary."""
        return float(self.to_fraction())

    def __str__(self) -> str:
        return f"{self._m}*2^{self._e}"

    def __repr__(self) -> str:
        return f"Dyadic({self._m}, {self._e})"


def pow2(k: int) -> Dyadic:
    return Dyadic._raw(1, k)


def dyadic_add(a: Dyadic, b: Dyadic) -> Dyadic:
    return a + b


def dyadic_mul(a: Dyadic, b: Dyadic) -> Dyadic:
    return a * b


def parse_dyadic(text: str) -> Dyadic:
    """Parse the ``"m*2^e"`` literal used in configs and CSV files."""
    match = _LITERAL.match(text)
    if not match:
        raise ValueError(f"not a dyadic literal: {text!r}")
    return Dyadic(int(match.group(1)), int(match.group(2)))
