"""Forward-mode automatic differentiation scalars.

``Dual`` carries a value together with a vector of first partials, so a
single evaluation sweep through an expression yields the full gradient.
``HyperDual`` carries two independent first-order legs plus the mixed
second derivative, giving one exact Hessian entry per evaluation. Neither
type truncates: all derivatives are exact up to floating-point rounding,
which is what makes kernel-rank decisions downstream trustworthy.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["Dual", "HyperDual", "sin", "cos", "exp", "log", "power"]


class Dual:
    """Number a + sum_i b_i eps_i with eps_i eps_j = 0 (vector forward mode)."""

    __slots__ = ("value", "partials")

    def __init__(self, value, partials):
        self.value = float(value)
        self.partials = np.asarray(partials, dtype=float)

    @classmethod
    def seed(cls, value, index, width):
        """Variable number `index` among `width` active coordinates."""
        partials = np.zeros(width)
        partials[index] = 1.0
        return cls(value, partials)

    @classmethod
    def constant(cls, value, width):
        return cls(value, np.zeros(width))

    def __repr__(self):
        return f"Dual({self.value}, {self.partials.tolist()})"

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value + other.value, self.partials + other.partials)
        return Dual(self.value + other, self.partials)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value - other.value, self.partials - other.partials)
        return Dual(self.value - other, self.partials)

    def __rsub__(self, other):
        return Dual(other - self.value, -self.partials)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.value * other.value,
                self.value * other.partials + other.value * self.partials,
            )
        return Dual(self.value * other, other * self.partials)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            if other.value == 0.0:
                raise ZeroDivisionError("division by zero")
            inv = 1.0 / other.value
            return Dual(
                self.value * inv,
                inv * self.partials - (self.value * inv * inv) * other.partials,
            )
        if other == 0.0:
            raise ZeroDivisionError("division by zero")
        return Dual(self.value / other, self.partials / other)

    def __rtruediv__(self, other):
        if self.value == 0.0:
            raise ZeroDivisionError("division by zero")
        inv = 1.0 / self.value
        return Dual(other * inv, (-other * inv * inv) * self.partials)

    def __neg__(self):
        return Dual(-self.value, -self.partials)


class HyperDual:
    """Two independent dual legs plus their mixed term.

    Evaluating f with x_i seeded on leg 1 and x_j on leg 2 yields
    d12 = d^2 f / dx_i dx_j exactly (i = j included).
    """

    __slots__ = ("value", "d1", "d2", "d12")

    def __init__(self, value, d1=0.0, d2=0.0, d12=0.0):
        self.value = float(value)
        self.d1 = float(d1)
        self.d2 = float(d2)
        self.d12 = float(d12)

    def __repr__(self):
        return f"HyperDual({self.value}, {self.d1}, {self.d2}, {self.d12})"

    def __add__(self, other):
        if isinstance(other, HyperDual):
            return HyperDual(
                self.value + other.value,
                self.d1 + other.d1,
                self.d2 + other.d2,
                self.d12 + other.d12,
            )
        return HyperDual(self.value + other, self.d1, self.d2, self.d12)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, HyperDual):
            return HyperDual(
                self.value - other.value,
                self.d1 - other.d1,
                self.d2 - other.d2,
                self.d12 - other.d12,
            )
        return HyperDual(self.value - other, self.d1, self.d2, self.d12)

    def __rsub__(self, other):
        return HyperDual(other - self.value, -self.d1, -self.d2, -self.d12)

    def __mul__(self, other):
        if isinstance(other, HyperDual):
            return HyperDual(
                self.value * other.value,
                self.d1 * other.value + self.value * other.d1,
                self.d2 * other.value + self.value * other.d2,
                self.d12 * other.value
                + self.d1 * other.d2
                + self.d2 * other.d1
                + self.value * other.d12,
            )
        return HyperDual(
            self.value * other, self.d1 * other, self.d2 * other, self.d12 * other
        )

    __rmul__ = __mul__

    def _reciprocal(self):
        if self.value == 0.0:
            raise ZeroDivisionError("division by zero")
        inv = 1.0 / self.value
        inv2 = inv * inv
        return HyperDual(
            inv,
            -self.d1 * inv2,
            -self.d2 * inv2,
            -self.d12 * inv2 + 2.0 * self.d1 * self.d2 * inv2 * inv,
        )

    def __truediv__(self, other):
        if isinstance(other, HyperDual):
            return self * other._reciprocal()
        if other == 0.0:
            raise ZeroDivisionError("division by zero")
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        return self._reciprocal() * other

    def __neg__(self):
        return HyperDual(-self.value, -self.d1, -self.d2, -self.d12)


def _lift_dual(x, f, fprime):
    return Dual(f, fprime * x.partials)


def _lift_hyper(x, f, fprime, fsecond):
    return HyperDual(
        f,
        fprime * x.d1,
        fprime * x.d2,
        fprime * x.d12 + fsecond * x.d1 * x.d2,
    )


def sin(x):
    if isinstance(x, Dual):
        return _lift_dual(x, math.sin(x.value), math.cos(x.value))
    if isinstance(x, HyperDual):
        return _lift_hyper(x, math.sin(x.value), math.cos(x.value), -math.sin(x.value))
    return math.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return _lift_dual(x, math.cos(x.value), -math.sin(x.value))
    if isinstance(x, HyperDual):
        return _lift_hyper(x, math.cos(x.value), -math.sin(x.value), -math.cos(x.value))
    return math.cos(x)


def exp(x):
    if isinstance(x, Dual):
        e = math.exp(x.value)
        return _lift_dual(x, e, e)
    if isinstance(x, HyperDual):
        e = math.exp(x.value)
        return _lift_hyper(x, e, e, e)
    return math.exp(x)


def log(x):
    # math.log raises ValueError for non-positive arguments, which the
    # expression evaluator converts into an EvaluationDomainError.
    if isinstance(x, Dual):
        if x.value <= 0.0:
            raise ValueError("log of non-positive value")
        return _lift_dual(x, math.log(x.value), 1.0 / x.value)
    if isinstance(x, HyperDual):
        if x.value <= 0.0:
            raise ValueError("log of non-positive value")
        v = x.value
        return _lift_hyper(x, math.log(v), 1.0 / v, -1.0 / (v * v))
    if x <= 0.0:
        raise ValueError("log of non-positive value")
    return math.log(x)


def _int_power(x, n):
    if n == 0:
        return 1.0
    if n < 0:
        return 1.0 / _int_power(x, -n)
    out = x
    for _ in range(n - 1):
        out = out * x
    return out


def power(x, exponent):
    """x ** exponent for an exponent known at parse time.

    Integer exponents use repeated multiplication so that negative bases
    stay inside the domain; fractional exponents require a positive base.
    """
    if float(exponent) == int(exponent):
        return _int_power(x, int(exponent))
    c = float(exponent)
    if isinstance(x, Dual):
        v = x.value
        if v < 0.0 or (v == 0.0 and c < 1.0):
            raise ValueError("fractional power of non-positive value")
        return _lift_dual(x, v**c, c * v ** (c - 1.0))
    if isinstance(x, HyperDual):
        v = x.value
        if v < 0.0 or (v == 0.0 and c < 2.0):
            raise ValueError("fractional power of non-positive value")
        return _lift_hyper(
            x, v**c, c * v ** (c - 1.0), c * (c - 1.0) * v ** (c - 2.0)
        )
    if x < 0.0:
        raise ValueError("fractional power of negative value")
    return float(x) ** c
