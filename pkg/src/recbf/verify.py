"""Sampling-based certification of barrier validity hypotheses.

Every check grids a state box, evaluates the relevant implication at each
grid point, and returns a :class:`VerifyReport` listing violations in grid
order.  Checks are deterministic for a fixed grid and tolerance set, and the
reports serialize to JSON for the CLI.

Zero rows are detected with an absolute tolerance (default 1e-9); a secondary
band (default 1e-6) flags points whose input row is merely near zero, where
the implication is numerically fragile, as ``indeterminate`` rather than
violated.  Condition residuals must undercut a small rounding guard before a
point is reported, so activation boundaries hit exactly by grid nodes do not
produce spurious 1e-17-sized findings.

Grid-based sampling is a desk-scale substitute for exhaustive verification:
nothing is claimed between grid points.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .barriers import Barrier
from .classk import ClassKFn
from .jets import real
from .systems import ControlAffineSystem, ConstraintFn, lie_f, lie_g_lie_f

ZERO_TOLERANCE = 1e-9
NEAR_ZERO_BAND = 1e-6
RESIDUAL_GUARD = 1e-12


@dataclass
class VerifyReport:
    """Outcome of one sampled check; ``passed`` iff ``violations`` is empty."""

    condition: str
    grid: dict
    tolerances: dict
    violations: list[dict] = field(default_factory=list)
    indeterminate: list[dict] = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "passed": self.passed,
            "grid": self.grid,
            "tolerances": self.tolerances,
            "violations": self.violations,
            "indeterminate": self.indeterminate,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def default_resolution(n: int) -> int:
    """Per-axis point count: odd so symmetric boxes place 0 on the grid."""
    return 201 if n <= 2 else 31


def domain_axes(system: ControlAffineSystem, resolution: int | None = None,
                box: tuple | None = None) -> list[np.ndarray]:
    """Per-axis sample points over ``box`` (default: the system's state box)."""
    if box is None:
        if system.state_domain is None:
            raise ValueError(f"system {system.name!r} declares no state domain")
        box = system.state_domain
    lo, hi = box
    count = resolution or default_resolution(system.n)
    return [np.linspace(float(a), float(b), count) for a, b in zip(lo, hi)]


def iter_grid(axes: Sequence[np.ndarray]) -> Iterator[tuple[int, np.ndarray]]:
    """Row-major enumeration of the grid as (flat index, state)."""
    mesh = np.meshgrid(*axes, indexing="ij")
    stacked = np.stack([m.ravel() for m in mesh], axis=-1)
    for index in range(stacked.shape[0]):
        yield index, stacked[index]


def _grid_meta(axes: Sequence[np.ndarray]) -> dict:
    return {"axes": [[float(a[0]), float(a[-1]), int(a.shape[0])] for a in axes]}


def _row_norm(row) -> float:
    return float(np.max(np.abs(np.asarray(row, dtype=float))))


def check_relative_degree(system: ControlAffineSystem, constraint: ConstraintFn,
                          order: int, resolution: int | None = None,
                          zero_tolerance: float = ZERO_TOLERANCE) -> VerifyReport:
    """Verify the constraint's weak relative degree claim on a grid.

    All input rows of order below ``order - 1`` must vanish at every grid
    point, and the order ``order - 1`` row must be nonzero somewhere.  The
    report's ``zero_set`` note lists the grid points where that last row
    vanishes (the singular states).
    """
    axes = domain_axes(system, resolution)
    report = VerifyReport(
        condition=f"relative_degree_{order}",
        grid=_grid_meta(axes),
        tolerances={"zero": zero_tolerance},
    )
    zero_set = []
    attained = False
    for index, state in iter_grid(axes):
        for i in range(order - 1):
            row = lie_g_lie_f(system, constraint.psi, i, state)
            norm = _row_norm(row)
            if norm > zero_tolerance:
                report.violations.append({
                    "index": index,
                    "state": [float(v) for v in state],
                    "lower_order": i,
                    "row_norm": norm,
                })
        last = lie_g_lie_f(system, constraint.psi, order - 1, state)
        if _row_norm(last) <= zero_tolerance:
            zero_set.append({"index": index, "state": [float(v) for v in state]})
        else:
            attained = True
    if not attained:
        report.violations.append({
            "index": -1,
            "state": None,
            "reason": "order_never_attained",
        })
    report.notes["zero_set"] = zero_set
    report.notes["zero_set_size"] = len(zero_set)
    return report


def check_degree_two_validity(system: ControlAffineSystem, constraint: ConstraintFn,
                              alpha: ClassKFn, strict_margin: float = 0.0,
                              resolution: int | None = None,
                              zero_tolerance: float = ZERO_TOLERANCE) -> VerifyReport:
    """Hypothesis for the order-2 rectified construction.

    Wherever the order-1 input row vanishes, the unforced margin must hold:
    ``L_f psi >= -alpha(psi) + strict_margin``.
    """
    axes = domain_axes(system, resolution)
    report = VerifyReport(
        condition="degree_two_validity",
        grid=_grid_meta(axes),
        tolerances={"zero": zero_tolerance, "strict_margin": strict_margin},
    )
    for index, state in iter_grid(axes):
        row = lie_g_lie_f(system, constraint.psi, 1, state)
        if _row_norm(row) > zero_tolerance:
            continue
        drift = lie_f(system, constraint.psi, 1, state)
        residual = drift + float(real(alpha(constraint.psi(state)))) - strict_margin
        if residual < -RESIDUAL_GUARD:
            report.violations.append({
                "index": index,
                "state": [float(v) for v in state],
                "residual": float(residual),
            })
    return report


def check_mixed_input_validity(system: ControlAffineSystem, constraint: ConstraintFn,
                               alpha: ClassKFn, resolution: int | None = None,
                               zero_tolerance: float = ZERO_TOLERANCE,
                               independence_tolerance: float = 1e-9) -> VerifyReport:
    """Hypotheses for mixed-input constraints.

    (i) the order-0 and order-1 input rows are linearly independent wherever
    both are nonzero (smallest singular value of the stacked 2 x m matrix
    above ``independence_tolerance``); (ii) where both vanish, the unforced
    margin ``L_f psi >= -alpha(psi)`` holds.
    """
    axes = domain_axes(system, resolution)
    report = VerifyReport(
        condition="mixed_input_validity",
        grid=_grid_meta(axes),
        tolerances={"zero": zero_tolerance, "independence": independence_tolerance},
    )
    for index, state in iter_grid(axes):
        row0 = np.asarray(lie_g_lie_f(system, constraint.psi, 0, state), dtype=float)
        row1 = np.asarray(lie_g_lie_f(system, constraint.psi, 1, state), dtype=float)
        n0, n1 = _row_norm(row0), _row_norm(row1)
        if n0 > zero_tolerance and n1 > zero_tolerance:
            sigma = np.linalg.svd(np.vstack([row0, row1]), compute_uv=False)
            if sigma[-1] <= independence_tolerance:
                report.violations.append({
                    "index": index,
                    "state": [float(v) for v in state],
                    "smallest_singular_value": float(sigma[-1]),
                })
        elif n0 <= zero_tolerance and n1 <= zero_tolerance:
            drift = lie_f(system, constraint.psi, 1, state)
            residual = drift + float(real(alpha(constraint.psi(state))))
            if residual < -RESIDUAL_GUARD:
                report.violations.append({
                    "index": index,
                    "state": [float(v) for v in state],
                    "residual": float(residual),
                })
    return report


def check_recursive_validity(system: ControlAffineSystem, constraint: ConstraintFn,
                             barrier: Barrier, resolution: int | None = None,
                             zero_tolerance: float = ZERO_TOLERANCE) -> VerifyReport:
    """Hypothesis for the recursive rectified construction.

    Wherever the order ``r - 1`` input row of the constraint vanishes, at
    least one stage activation margin must be nonnegative.
    """
    order = barrier.spec.order
    axes = domain_axes(system, resolution)
    report = VerifyReport(
        condition=f"recursive_validity_order_{order}",
        grid=_grid_meta(axes),
        tolerances={"zero": zero_tolerance},
    )
    for index, state in iter_grid(axes):
        row = lie_g_lie_f(system, constraint.psi, order - 1, state)
        if _row_norm(row) > zero_tolerance:
            continue
        margins = barrier.stage_values(state)
        if not any(margin >= -RESIDUAL_GUARD for margin in margins):
            report.violations.append({
                "index": index,
                "state": [float(v) for v in state],
                "stage_margins": [float(m) for m in margins],
            })
    return report


def safe_set_box(barrier: Barrier, axes: Sequence[np.ndarray],
                 inflate: float = 0.1) -> tuple[tuple, tuple, bool]:
    """Bounding box of the sampled safe set, padded by ``inflate`` per side.

    Returns (lo, hi, found); when no sampled point is safe the base box is
    returned unchanged with ``found = False``.
    """
    los, his = [], []
    found = False
    mins = [np.inf] * len(axes)
    maxs = [-np.inf] * len(axes)
    for _, state in iter_grid(axes):
        if float(real(barrier.value(state))) >= 0.0:
            found = True
            for i, v in enumerate(state):
                mins[i] = min(mins[i], v)
                maxs[i] = max(maxs[i], v)
    if not found:
        return (tuple(float(a[0]) for a in axes), tuple(float(a[-1]) for a in axes), False)
    for lo, hi in zip(mins, maxs):
        width = hi - lo
        pad = inflate * width if width > 0.0 else inflate
        los.append(float(lo - pad))
        his.append(float(hi + pad))
    return tuple(los), tuple(his), True


def check_cbf_condition(barrier: Barrier, alpha: ClassKFn,
                        resolution: int | None = None,
                        inflate: float = 0.1,
                        strict_margin: float = 0.0,
                        zero_tolerance: float = ZERO_TOLERANCE,
                        near_band: float = NEAR_ZERO_BAND,
                        box: tuple | None = None) -> VerifyReport:
    """Zero-input implication for the barrier's certificate scalar.

    Grids an open neighborhood of the sampled safe set (its bounding box
    padded by ``inflate`` per side) and requires, wherever the certificate's
    input row vanishes, ``L_f h >= -alpha(h) + strict_margin``.  Points whose
    input row is merely within ``near_band`` of zero are reported separately
    as indeterminate.  ``box`` overrides the base sampling window (default:
    the system's state box).
    """
    system = barrier.system
    base_axes = domain_axes(system, resolution, box=box)
    lo, hi, found = safe_set_box(barrier, base_axes, inflate)
    axes = domain_axes(system, resolution or base_axes[0].shape[0], box=(lo, hi))
    report = VerifyReport(
        condition="cbf_condition",
        grid=_grid_meta(axes),
        tolerances={
            "zero": zero_tolerance,
            "near_band": near_band,
            "strict_margin": strict_margin,
        },
        notes={"safe_set_found": found, "inflate": inflate},
    )
    for index, state in iter_grid(axes):
        value, lf, lg = barrier.condition_terms(state)
        row_norm = _row_norm(lg)
        if row_norm > near_band:
            continue
        residual = lf + float(real(alpha(value))) - strict_margin
        if residual >= -RESIDUAL_GUARD:
            continue
        entry = {
            "index": index,
            "state": [float(v) for v in state],
            "residual": float(residual),
            "input_row_norm": row_norm,
        }
        if row_norm <= zero_tolerance:
            report.violations.append(entry)
        else:
            report.indeterminate.append(entry)
    return report
