"""Min-norm safety filtering through a single affine input constraint.

All filters in this package impose exactly one constraint of the form
``a(x) + b(x) . u >= 0``, so the minimum-deviation input has a closed form:
the Euclidean projection of the nominal input onto a half space.  No QP
solver is involved; a brute-force minimizer guards the formula in tests.

Infeasibility (``b`` numerically zero with a negative offset) is reported as
a result state rather than an exception, so simulations can log it as a
termination event and keep going with other initial conditions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .barriers import Barrier, HocbfBarrier
from .classk import ClassKFn

FILTER_MODES = ("cbf", "hocbf")


@dataclass(frozen=True)
class FilterConfig:
    """Outer scaling, which barrier condition to enforce, and the zero cutoff.

    ``zero_tolerance`` bounds the input-row norm below which the constraint
    direction is treated as numerically meaningless; reporting infeasibility
    there avoids dividing by a vanishing norm.
    """

    alpha: ClassKFn
    mode: str = "cbf"
    zero_tolerance: float = 1e-9

    def __post_init__(self):
        if self.mode not in FILTER_MODES:
            raise ValueError(f"unknown filter mode {self.mode!r}")
        if not self.zero_tolerance > 0.0:
            raise ValueError("zero_tolerance must be positive")


@dataclass(frozen=True)
class FilterResult:
    """Filtered input plus solve diagnostics.

    ``margin`` is the constraint value ``a + b . u`` at the returned input:
    nonnegative whenever the result is feasible, and zero (up to rounding)
    when the constraint is active.
    """

    u: np.ndarray
    active: bool
    feasible: bool
    margin: float


def project_halfspace(a: float, b, u_nom, zero_tolerance: float = 1e-9) -> FilterResult:
    """argmin ||u - u_nom||^2 subject to a + b . u >= 0, in closed form.

    Deficits within ``zero_tolerance`` of zero count as satisfied: near
    activation onset both the deficit and the constraint direction vanish
    together, and declaring infeasibility over a sub-tolerance deficit would
    abort runs that are riding the boundary exactly as intended.
    """
    b = np.asarray(b, dtype=float)
    u_nom = np.asarray(u_nom, dtype=float)
    nominal_margin = a + float(b @ u_nom)
    if nominal_margin >= -zero_tolerance:
        return FilterResult(u=u_nom, active=False, feasible=True, margin=nominal_margin)
    norm_sq = float(b @ b)
    if math.sqrt(norm_sq) <= zero_tolerance:
        return FilterResult(u=u_nom, active=False, feasible=False, margin=nominal_margin)
    u = u_nom + b * (-nominal_margin / norm_sq)
    return FilterResult(u=u, active=True, feasible=True, margin=a + float(b @ u))


def safety_filter(barrier: Barrier, config: FilterConfig, x, u_nom) -> FilterResult:
    """Filter a nominal input through the barrier's certificate inequality.

    In ``cbf`` mode the half space is ``L_f h + alpha(h) + L_g h . u >= 0``;
    ``hocbf`` mode delegates to :func:`hocbf_filter`.
    """
    if config.mode == "hocbf":
        return hocbf_filter(barrier, config, x, u_nom)
    value, lf, lg = barrier.condition_terms(x)
    a = lf + float(config.alpha(value))
    return project_halfspace(a, lg, u_nom, config.zero_tolerance)


def hocbf_filter(barrier: Barrier, config: FilterConfig, x, u_nom) -> FilterResult:
    """Chain-condition filter: constrains the last stage of the chain."""
    if not isinstance(barrier, HocbfBarrier):
        raise TypeError("hocbf filtering requires a chain (hocbf) barrier")
    ev = barrier.chain(x)
    a = ev.lf_last + float(config.alpha(ev.stages[-1]))
    return project_halfspace(a, ev.lg_last, u_nom, config.zero_tolerance)
