"""Exact complex-rational arithmetic.

The symbolic identity checks in this package must come out as equalities,
not small residuals, so the coefficient ring used by the form calculus is
Q(i): complex numbers whose real and imaginary parts are ``Fraction``.
``QC`` is deliberately minimal; it interoperates with ``int`` and
``Fraction`` and converts to ``complex`` at the numeric boundary.
"""

from __future__ import annotations

from fractions import Fraction


def _as_fraction(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    raise TypeError(f"cannot coerce {type(x).__name__} to Fraction")


class QC:
    """A complex number with exact rational real and imaginary parts."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = _as_fraction(re)
        self.im = _as_fraction(im)

    # -- ring operations ---------------------------------------------------

    def __add__(self, other):
        if type(other) is QC:
            return QC(self.re + other.re, self.im + other.im)
        other = qc(other)
        return QC(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __neg__(self):
        return QC(-self.re, -self.im)

    def __sub__(self, other):
        other = qc(other)
        return QC(self.re - other.re, self.im - other.im)

    def __rsub__(self, other):
        return qc(other) - self

    def __mul__(self, other):
        if type(other) is QC:
            return QC(
                self.re * other.re - self.im * other.im,
                self.re * other.im + self.im * other.re,
            )
        if isinstance(other, (int, Fraction)):
            return QC(self.re * other, self.im * other)
        other = qc(other)
        return QC(
            self.re * other.re - self.im * other.im,
            self.re * other.im + self.im * other.re,
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = qc(other)
        d = other.re * other.re + other.im * other.im
        if d == 0:
            raise ZeroDivisionError("division by zero in QC")
        return QC(
            (self.re * other.re + self.im * other.im) / d,
            (self.im * other.re - self.re * other.im) / d,
        )

    def __rtruediv__(self, other):
        return qc(other) / self

    def __pow__(self, n):
        if not isinstance(n, int):
            raise TypeError("QC powers must be integers")
        if n < 0:
            return qc(1) / self ** (-n)
        out = QC(1)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    # -- comparisons and conversions ---------------------------------------

    def __eq__(self, other):
        try:
            other = qc(other)
        except TypeError:
            return NotImplemented
        return self.re == other.re and self.im == other.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __bool__(self):
        return self.re != 0 or self.im != 0

    def conjugate(self):
        return QC(self.re, -self.im)

    def abs2(self) -> Fraction:
        """Squared modulus, exact."""
        return self.re * self.re + self.im * self.im

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __repr__(self):
        if self.im == 0:
            return f"QC({self.re})"
        return f"QC({self.re}, {self.im})"


def qc(x) -> QC:
    """Coerce an int, Fraction, or QC to QC."""
    if isinstance(x, QC):
        return x
    if isinstance(x, (int, Fraction)):
        return QC(x)
    raise TypeError(f"cannot coerce {type(x).__name__} to QC")


QC_ZERO = QC(0)
QC_ONE = QC(1)
QC_I = QC(0, 1)


def scalar_scale(value, factor: Fraction):
    """Multiply a ring element by an exact rational factor.

    Works for QC, Fraction, int (stay exact) and float/complex (factor is
    converted). This is the one place where exact and floating scalar rings
    meet, so every formula written against it stays ring-generic.
    """
    if isinstance(value, (complex, float)):
        return value * float(factor)
    return value * factor


def scalar_zero_like(value):
    if isinstance(value, (complex, float)):
        return 0.0
    if isinstance(value, QC):
        return QC_ZERO
    return 0
