"""Nested truncated dual arithmetic for exact directional derivatives.

A :class:`Jet` carries a value together with the first-order coefficient of a
perturbation along a single direction.  Both slots may themselves hold jets,
so wrapping a jet inside a fresh jet adds one differentiation level; a k-fold
wrapped jet supports k-fold nested directional derivatives evaluated exactly
(up to floating-point rounding), with no step-size error.  Plain floats act
as depth-0 jets, i.e. constants at every nesting level, so mixed expressions
need no explicit promotion.

Everything here is pure and stateless; all helpers are safe to call from any
number of threads.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence, Union

import numpy as np

from .errors import NonFiniteEvaluation

Scalar = Union[float, "Jet"]
ScalarFn = Callable[[Sequence[Scalar]], Scalar]


class Jet:
    """Truncated dual scalar ``value + infinitesimal * eps`` with ``eps**2 = 0``.

    Arithmetic follows the product/chain rules exactly.  Piecewise primitives
    (`absolute`, `relu`) branch on the innermost real value; at the kink they
    take the zero-slope branch, which is the convention the rectifier
    construction relies on (its outer composition has zero slope there anyway,
    so the value of the convention never leaks into results).
    """

    __slots__ = ("value", "infinitesimal")

    def __init__(self, value: Scalar, infinitesimal: Scalar = 0.0):
        self.value = value
        self.infinitesimal = infinitesimal

    @property
    def depth(self) -> int:
        """Nesting level: plain reals are depth 0, one wrap adds one."""
        inner = self.value
        return 1 + (inner.depth if isinstance(inner, Jet) else 0)

    def __repr__(self) -> str:
        return f"Jet({self.value!r}, {self.infinitesimal!r})"

    # -- ring operations ----------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(self.value + other.value, self.infinitesimal + other.infinitesimal)
        return Jet(self.value + other, self.infinitesimal)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Jet):
            return Jet(self.value - other.value, self.infinitesimal - other.infinitesimal)
        return Jet(self.value - other, self.infinitesimal)

    def __rsub__(self, other):
        return Jet(other - self.value, -self.infinitesimal)

    def __neg__(self):
        return Jet(-self.value, -self.infinitesimal)

    def __mul__(self, other):
        if isinstance(other, Jet):
            return Jet(
                self.value * other.value,
                self.value * other.infinitesimal + self.infinitesimal * other.value,
            )
        return Jet(self.value * other, self.infinitesimal * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            ov = other.value
            return Jet(
                self.value / ov,
                (self.infinitesimal * ov - self.value * other.infinitesimal) / (ov * ov),
            )
        return Jet(self.value / other, self.infinitesimal / other)

    def __rtruediv__(self, other):
        ov = self.value
        return Jet(other / ov, -(other * self.infinitesimal) / (ov * ov))

    def __pow__(self, exponent):
        if not isinstance(exponent, int):
            raise TypeError("jet exponent must be an integer")
        if exponent < 0:
            return 1.0 / self.__pow__(-exponent)
        if exponent == 0:
            return 1.0
        if exponent == 1:
            return self
        return Jet(
            self.value ** exponent,
            exponent * self.value ** (exponent - 1) * self.infinitesimal,
        )

    def __abs__(self):
        s = _sign(real(self))
        return Jet(abs(self.value), self.infinitesimal * s)


def _sign(r: float) -> float:
    if r > 0.0:
        return 1.0
    if r < 0.0:
        return -1.0
    return 0.0


def real(x: Scalar) -> float:
    """Innermost real value of ``x`` (identity on plain reals)."""
    while isinstance(x, Jet):
        x = x.value
    return float(x)


def sin(x: Scalar) -> Scalar:
    if isinstance(x, Jet):
        return Jet(sin(x.value), cos(x.value) * x.infinitesimal)
    return math.sin(x)


def cos(x: Scalar) -> Scalar:
    if isinstance(x, Jet):
        return Jet(cos(x.value), -sin(x.value) * x.infinitesimal)
    return math.cos(x)


def absolute(x: Scalar) -> Scalar:
    """|x| with slope sign(x); slope 0 at the kink."""
    return abs(x) if isinstance(x, Jet) else math.fabs(x)


def relu(x: Scalar) -> Scalar:
    """max(x, 0) piecewise; the x = 0 branch returns the flat side (slope 0)."""
    if real(x) > 0.0:
        return x
    return x * 0.0 if isinstance(x, Jet) else 0.0


def as_real_vector(entries, n: int | None = None) -> np.ndarray:
    """Validate and return a finite 1-D float vector.

    Raises ValueError on wrong length or non-finite entries.
    """
    vec = np.asarray(entries, dtype=float)
    if vec.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {vec.shape}")
    if n is not None and vec.shape[0] != n:
        raise ValueError(f"expected length {n}, got {vec.shape[0]}")
    if not np.all(np.isfinite(vec)):
        raise ValueError(f"vector has non-finite entries: {vec!r}")
    return vec


def _coefficient(out: Scalar) -> Scalar:
    # Constant results carry no perturbation, hence zero derivative.
    return out.infinitesimal if isinstance(out, Jet) else 0.0


def directional_derivative(fn: ScalarFn, x: Sequence[Scalar], v: Sequence[Scalar]) -> Scalar:
    """Derivative of ``fn`` at ``x`` along direction ``v`` (i.e. grad(fn)(x) . v).

    Entries of ``x`` and ``v`` may themselves be jets, in which case the
    result is a jet one level shallower than the lifted evaluation; this is
    what makes nested (higher-order) differentiation work.
    """
    lifted = [Jet(xi, vi) for xi, vi in zip(x, v, strict=True)]
    out = _coefficient(fn(lifted))
    if not math.isfinite(real(out)):
        raise NonFiniteEvaluation(
            f"directional derivative is non-finite at x={[real(xi) for xi in x]}"
        )
    return out


def gradient(fn: ScalarFn, x: Sequence[Scalar]) -> np.ndarray:
    """Gradient of ``fn`` at ``x`` via one directional derivative per axis."""
    n = len(x)
    grad = np.empty(n)
    for i in range(n):
        v = [0.0] * n
        v[i] = 1.0
        grad[i] = directional_derivative(fn, x, v)
    return grad


def nested_directional(fn: ScalarFn, x: Sequence[Scalar], v1, v2) -> float:
    """Mixed second directional derivative ``v2' Hess(fn)(x) v1``."""

    def first_order(y):
        return directional_derivative(fn, y, v1)

    return directional_derivative(first_order, x, v2)


def fd_gradient(fn: ScalarFn, x, step: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient; the independent test oracle."""
    base = np.asarray(x, dtype=float)
    grad = np.empty(base.shape[0])
    for i in range(base.shape[0]):
        plus = base.copy()
        minus = base.copy()
        plus[i] += step
        minus[i] -= step
        grad[i] = (fn(plus) - fn(minus)) / (2.0 * step)
    return grad
