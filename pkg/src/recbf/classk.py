"""Smooth extended class-K functions and the rectifier built on them.

An extended class-K function vanishes at zero and is strictly increasing.
Two families ship built in:

* ``Linear(c)``       -- c * s, with c > 0.
* ``SignedSquare(c)`` -- c * s * |s|, with c > 0.  Its slope 2c|s| vanishes
  exactly at s = 0 and nowhere else, the property that makes the rectifier
  below continuously differentiable.

``Shifted`` composes any of these with an argument offset, and
``CustomClassK`` wraps a user-supplied jet-evaluable function after a
sampling self-check.

The rectifier Theta(s) = relu(-gamma(s - eps)) is the activation applied to
chain margins when building rectified barriers: it is nonnegative, vanishes
(with zero slope) for s >= eps, and is C1 everywhere because gamma has zero
slope at the origin.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .jets import Jet, Scalar, absolute, real, relu


class ClassKFn:
    """Base class: a scalar map evaluable on floats and jets alike."""

    def __call__(self, s: Scalar) -> Scalar:  # pragma: no cover - abstract
        raise NotImplementedError

    def derivative(self, s: float) -> float:
        """Slope at a real point; generic fallback differentiates via a jet."""
        out = self(Jet(float(s), 1.0))
        return out.infinitesimal if isinstance(out, Jet) else 0.0

    def to_config(self) -> dict:  # pragma: no cover - abstract
        raise NotImplementedError


@dataclass(frozen=True)
class Linear(ClassKFn):
    """s -> coeff * s with coeff > 0."""

    coeff: float = 1.0

    def __post_init__(self):
        if not self.coeff > 0.0:
            raise ValueError(f"Linear coefficient must be positive, got {self.coeff}")

    def __call__(self, s: Scalar) -> Scalar:
        return self.coeff * s

    def derivative(self, s: float) -> float:
        return self.coeff

    def to_config(self) -> dict:
        return {"kind": "linear", "coeff": self.coeff}


@dataclass(frozen=True)
class SignedSquare(ClassKFn):
    """s -> coeff * s * |s| with coeff > 0; slope vanishes only at 0."""

    coeff: float = 1.0

    def __post_init__(self):
        if not self.coeff > 0.0:
            raise ValueError(f"SignedSquare coefficient must be positive, got {self.coeff}")

    def __call__(self, s: Scalar) -> Scalar:
        return self.coeff * s * absolute(s)

    def derivative(self, s: float) -> float:
        return 2.0 * self.coeff * abs(s)

    def to_config(self) -> dict:
        return {"kind": "signed_square", "coeff": self.coeff}


@dataclass(frozen=True)
class Shifted(ClassKFn):
    """s -> inner(s - shift)."""

    inner: ClassKFn
    shift: float

    def __call__(self, s: Scalar) -> Scalar:
        return self.inner(s - self.shift)

    def derivative(self, s: float) -> float:
        return self.inner.derivative(s - self.shift)

    def to_config(self) -> dict:
        return {"kind": "shifted", "inner": self.inner.to_config(), "shift": self.shift}


class CustomClassK(ClassKFn):
    """Extension point for user-supplied jet-evaluable scalings.

    The constructor runs :func:`validate_class_k` so violating functions are
    rejected up front rather than producing silently invalid barriers.
    """

    def __init__(self, fn: Callable[[Scalar], Scalar], name: str = "custom",
                 flat_only_at_zero: bool = False):
        validate_class_k(fn, flat_only_at_zero=flat_only_at_zero)
        self._fn = fn
        self.name = name

    def __call__(self, s: Scalar) -> Scalar:
        return self._fn(s)

    def to_config(self) -> dict:
        raise ValueError("custom class-K functions are not serializable")


def validate_class_k(fn: Callable[[Scalar], Scalar], lo: float = -10.0, hi: float = 10.0,
                     samples: int = 1001, flat_only_at_zero: bool = False,
                     tol: float = 1e-12) -> None:
    """Sampling self-check of the class-K properties; raises ValueError.

    Checks fn(0) = 0 and strict monotonicity on a grid over [lo, hi].  With
    ``flat_only_at_zero`` additionally requires slope zero at the origin and
    strictly positive slope immediately off it (sampled at +/-1e-9), the
    hypothesis the rectifier needs from its inner scaling.
    """
    if abs(real(fn(0.0))) > tol:
        raise ValueError("class-K candidate does not vanish at zero")
    grid = np.linspace(lo, hi, samples)
    values = np.array([real(fn(float(s))) for s in grid])
    if not np.all(np.diff(values) > 0.0):
        raise ValueError("class-K candidate is not strictly increasing on the sampled grid")
    if flat_only_at_zero:
        slope0 = _slope(fn, 0.0)
        if abs(slope0) > tol:
            raise ValueError(f"slope at zero is {slope0}, expected 0")
        for probe in (-1e-9, 1e-9):
            if _slope(fn, probe) <= 0.0:
                raise ValueError(f"slope at {probe} is not positive")


def _slope(fn: Callable[[Scalar], Scalar], s: float) -> float:
    out = fn(Jet(s, 1.0))
    return real(out.infinitesimal) if isinstance(out, Jet) else 0.0


@dataclass(frozen=True)
class Rectifier:
    """Theta(s) = relu(-gamma(s - epsilon)).

    Nonnegative everywhere, identically zero for s >= epsilon, and C1 because
    gamma's slope vanishes at the origin.  ``epsilon > 0`` yields the strict
    variant used when controller continuity matters.
    """

    gamma: ClassKFn
    epsilon: float = 0.0

    def __post_init__(self):
        if self.epsilon < 0.0:
            raise ValueError(f"rectifier shift must be nonnegative, got {self.epsilon}")

    def __call__(self, s: Scalar) -> Scalar:
        return relu(-self.gamma(s - self.epsilon))

    def slope(self, s: float) -> float:
        """Theta'(s): zero for s >= epsilon, else -gamma'(s - epsilon)."""
        if s >= self.epsilon:
            return 0.0
        return -self.gamma.derivative(s - self.epsilon)

    def to_config(self) -> dict:
        cfg = self.gamma.to_config()
        cfg["epsilon"] = self.epsilon
        return cfg


def ensure_nondecreasing(fns: Sequence[ClassKFn], lo: float = -10.0, hi: float = 10.0,
                         samples: int = 1001) -> None:
    """Reject families that are not pointwise ordered fn[i] >= fn[i-1].

    Sampled gate over [lo, hi].  Note that scaling one base function by
    growing constants does NOT produce an ordered family: on negative
    arguments the larger scaling is the smaller function.  Repeating a single
    base (see :func:`uniform_family`) is ordered by equality, which is what
    the shipped configurations use.
    """
    grid = np.linspace(lo, hi, samples)
    for i in range(1, len(fns)):
        lower = np.array([real(fns[i - 1](float(s))) for s in grid])
        upper = np.array([real(fns[i](float(s))) for s in grid])
        if np.any(upper < lower - 1e-12):
            raise ValueError(
                f"family member {i} is not pointwise >= member {i - 1} on the sampled grid"
            )


def uniform_family(fn: ClassKFn, count: int) -> list[ClassKFn]:
    """``count`` copies of one scaling: trivially pointwise ordered."""
    if count < 1:
        raise ValueError("count must be at least 1")
    return [fn] * count


def classk_from_config(cfg: dict) -> ClassKFn:
    """Build a scaling from ``{"kind": ..., "coeff": ...}`` (plus optional shift)."""
    kind = cfg["kind"]
    if kind == "linear":
        fn: ClassKFn = Linear(float(cfg.get("coeff", 1.0)))
    elif kind == "signed_square":
        fn = SignedSquare(float(cfg.get("coeff", 1.0)))
    elif kind == "shifted":
        fn = Shifted(classk_from_config(cfg["inner"]), float(cfg["shift"]))
    else:
        raise ValueError(f"unknown class-K kind {kind!r}")
    return fn


def rectifier_from_config(cfg: dict) -> Rectifier:
    """Build a rectifier from ``{"kind", "coeff", "epsilon"}``."""
    gamma_cfg = {k: v for k, v in cfg.items() if k != "epsilon"}
    return Rectifier(classk_from_config(gamma_cfg), float(cfg.get("epsilon", 0.0)))
