"""Barrier constructions over a control-affine system.

Every barrier exposes the same contract: a scalar ``value`` whose zero
superlevel set is the candidate safe set, a ``certificate`` scalar the filter
inequality is written on (identical to ``value`` for everything except the
chain construction), and that certificate's drift/input Lie derivatives.

Kinds
-----
``plain``
    The raw constraint itself, for degree-one problems and level-set export.
``recbf2``
    Rectified construction for (weak) degree-two constraints:
    ``h = psi - Theta(L_f psi + alpha(psi))``.  The rectifier deactivates
    wherever the unforced margin is already nonnegative, so ``h`` coincides
    with ``psi`` there.
``recbf_recursive``
    Iterates the same idea through ``order - 1`` stages, each stage taking
    the drift derivative of the previous rectified value.  Stage derivatives
    come from nested jet evaluation of the composite, never from hand-derived
    formulas; the degree-two closed forms are kept as a cross-check path.
``hocbf``
    Classic chain ``psi_{i+1} = L_f psi_i + alpha_i(psi_i)``, whose safe set
    is the intersection of all stage superlevel sets.  Its recorded value is
    the minimum over stages (the membership indicator of that intersection);
    the filter inequality uses the last stage.
``breeden``
    Degree-two piecewise construction ``psi`` / ``psi - (L_f psi)^2 / 2``,
    continuous across the seam because the drift margin vanishes there.
``backstepping`` / ``rectified_backstepping``
    Double-integrator constructions built around a smooth virtual velocity
    command ``k(x) = -k_gain * x``: a quadratic penalty on ``xdot - k(x)``,
    and its rectified variant which only activates when the constraint
    derivative along the mismatch is negative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classk import (
    ClassKFn,
    Rectifier,
    classk_from_config,
    ensure_nondecreasing,
    rectifier_from_config,
)
from .errors import NestingDepthExceeded, NonFiniteEvaluation, WrongSystem
from .jets import Scalar, ScalarFn, directional_derivative, real
from .systems import ControlAffineSystem, ConstraintFn, lie_g_lie_f, polynomial_fn

BARRIER_KINDS = (
    "plain",
    "recbf2",
    "recbf_recursive",
    "hocbf",
    "breeden",
    "backstepping",
    "rectified_backstepping",
)

#: Rectified recursion depth cap; jet nesting cost doubles per stage.
MAX_ORDER = 4


@dataclass(frozen=True)
class BarrierSpec:
    """Declarative description of a barrier construction.

    ``alphas`` holds the stage scalings followed by the default outer scaling
    used in the filter inequality (so its length equals ``order`` for the
    chain-style kinds).  ``gammas`` holds the rectifiers, one per rectified
    stage.  ``k_gain`` is the virtual-command gain for the backstepping kinds.
    """

    kind: str
    constraint: ConstraintFn
    alphas: tuple[ClassKFn, ...] = ()
    gammas: tuple[Rectifier, ...] = ()
    order: int = 2
    k_gain: float = 0.5

    def __post_init__(self):
        if self.kind not in BARRIER_KINDS:
            raise ValueError(f"unknown barrier kind {self.kind!r}")
        object.__setattr__(self, "alphas", tuple(self.alphas))
        object.__setattr__(self, "gammas", tuple(self.gammas))
        checker = getattr(self, f"_check_{self.kind}")
        checker()

    def _require(self, n_alphas: int, n_gammas: int) -> None:
        if len(self.alphas) != n_alphas:
            raise ValueError(
                f"{self.kind} expects {n_alphas} scaling(s), got {len(self.alphas)}"
            )
        if len(self.gammas) != n_gammas:
            raise ValueError(
                f"{self.kind} expects {n_gammas} rectifier(s), got {len(self.gammas)}"
            )

    def _check_order(self) -> None:
        if self.order < 2:
            raise ValueError(f"{self.kind} needs order >= 2, got {self.order}")
        if self.order > MAX_ORDER:
            raise NestingDepthExceeded(
                f"order {self.order} exceeds the nesting cap of {MAX_ORDER}"
            )

    def _check_plain(self):
        self._require(1, 0)

    def _check_recbf2(self):
        if self.order != 2:
            raise ValueError("recbf2 is the order-2 construction")
        self._require(2, 1)

    def _check_recbf_recursive(self):
        self._check_order()
        self._require(self.order, self.order - 1)
        ensure_nondecreasing(self.alphas)

    def _check_hocbf(self):
        self._check_order()
        self._require(self.order, 0)

    def _check_breeden(self):
        self._require(1, 0)
        if self.constraint.relative_degree != 2:
            raise ValueError("breeden construction expects a degree-two constraint")

    def _check_backstepping(self):
        self._require(1, 0)
        if not self.k_gain > 0.0:
            raise ValueError("k_gain must be positive")

    def _check_rectified_backstepping(self):
        self._require(1, 1)
        if not self.k_gain > 0.0:
            raise ValueError("k_gain must be positive")

    @property
    def outer_alpha(self) -> ClassKFn:
        """Default scaling for the filter inequality."""
        return self.alphas[-1]

    def to_config(self) -> dict:
        cfg: dict = {
            "kind": self.kind,
            "order": self.order,
            "alphas": [a.to_config() for a in self.alphas],
            "gammas": [g.to_config() for g in self.gammas],
        }
        if self.kind in ("backstepping", "rectified_backstepping"):
            cfg["k_gain"] = self.k_gain
        return cfg


class Barrier:
    """A barrier spec bound to a system; immutable and reentrant."""

    def __init__(self, spec: BarrierSpec, system: ControlAffineSystem):
        self.spec = spec
        self.system = system
        self._psi = spec.constraint.psi

    # -- contract -----------------------------------------------------------

    def value(self, x) -> Scalar:
        """Safe-set membership scalar h(x); jet-evaluable."""
        raise NotImplementedError

    def certificate(self, x) -> Scalar:
        """Scalar the filter inequality is written on; jet-evaluable."""
        return self.value(x)

    def condition_terms(self, x) -> tuple[float, float, np.ndarray]:
        """(certificate, its drift derivative, its input-direction row) at ``x``.

        Default route differentiates the certificate composite with jets;
        kinds with cheap closed forms override it.
        """
        cert = self.certificate
        value = float(real(cert(x)))
        self._check_value(value, x)
        fvec = self.system.f(x)
        lf = directional_derivative(cert, x, fvec)
        lg = np.array(
            [directional_derivative(cert, x, self.system.g_column(x, j))
             for j in range(self.system.m)]
        )
        return value, lf, lg

    def lie(self, x) -> tuple[float, np.ndarray]:
        """Drift and input-direction derivatives of the certificate."""
        _, lf, lg = self.condition_terms(x)
        return lf, lg

    def psi(self, x) -> float:
        """Raw constraint value at ``x``."""
        return float(real(self._psi(x)))

    def stage_values(self, x) -> list[float]:
        """Activation margins of the rectified stages (empty when none)."""
        return []

    def _check_value(self, value: float, x) -> None:
        if not np.isfinite(value):
            raise NonFiniteEvaluation(f"barrier value is non-finite at {x!r}")


class PlainBarrier(Barrier):
    """h = psi; for degree-one constraints and raw level sets."""

    def value(self, x) -> Scalar:
        return self._psi(x)

    def condition_terms(self, x):
        value = self.psi(x)
        self._check_value(value, x)
        lf = directional_derivative(self._psi, x, self.system.f(x))
        lg = lie_g_lie_f(self.system, self._psi, 0, x)
        return value, lf, lg


class Recbf2Barrier(Barrier):
    """Order-two rectified barrier with closed-form derivatives.

    The derivative route keeps the raw-constraint input row, which vanishes
    identically for pure degree-two constraints but carries the first-order
    input contribution in the mixed-input case.
    """

    def __init__(self, spec: BarrierSpec, system: ControlAffineSystem):
        super().__init__(spec, system)
        self._alpha = spec.alphas[0]
        self._theta = spec.gammas[0]

    def _margin(self, x) -> Scalar:
        base = self._psi(x)
        drift = directional_derivative(self._psi, x, self.system.f(x))
        return drift + self._alpha(base)

    def value(self, x) -> Scalar:
        return self._psi(x) - self._theta(self._margin(x))

    def stage_values(self, x) -> list[float]:
        return [float(real(self._margin(x)))]

    def condition_terms(self, x):
        system = self.system
        psi = self._psi
        base = self.psi(x)
        fvec = system.f(x)
        lf_psi = directional_derivative(psi, x, fvec)
        margin = lf_psi + self._alpha(base)
        gmat = system.g(x)
        columns = [[row[j] for row in gmat] for j in range(system.m)]
        lg_psi = [directional_derivative(psi, x, col) for col in columns]
        value = base - self._theta(margin)
        self._check_value(value, x)
        slope = self._theta.slope(margin)
        if slope == 0.0:
            # Rectifier off: the barrier locally coincides with psi.
            return value, lf_psi, np.asarray(lg_psi)

        def lf_psi_fn(y):
            return directional_derivative(psi, y, system.f(y))

        lf2_psi = directional_derivative(lf_psi_fn, x, fvec)
        lg_lf_psi = [directional_derivative(lf_psi_fn, x, col) for col in columns]
        alpha_slope = self._alpha.derivative(base)
        lf = lf_psi - slope * (lf2_psi + alpha_slope * lf_psi)
        lg = [raw - slope * (second + alpha_slope * raw)
              for raw, second in zip(lg_psi, lg_lf_psi)]
        return value, lf, np.asarray(lg)


class RecursiveRecbfBarrier(Barrier):
    """Rectified construction iterated to arbitrary order (capped at 4).

    Each stage value is a jet-evaluable composite, so stage drift derivatives
    nest exactly; the overall derivatives come from one more differentiation
    of the final composite.
    """

    def __init__(self, spec: BarrierSpec, system: ControlAffineSystem):
        super().__init__(spec, system)
        stages: list[ScalarFn] = [self._psi]
        for i in range(1, spec.order):
            stages.append(self._make_stage(stages[-1], spec.alphas[i - 1], spec.gammas[i - 1]))
        self._stages = stages

    def _make_stage(self, prev: ScalarFn, alpha: ClassKFn, theta: Rectifier) -> ScalarFn:
        system = self.system

        def stage(x):
            base = prev(x)
            margin = directional_derivative(prev, x, system.f(x)) + alpha(base)
            return base - theta(margin)

        return stage

    def value(self, x) -> Scalar:
        return self._stages[-1](x)

    def stage_values(self, x) -> list[float]:
        margins = []
        for i in range(1, self.spec.order):
            prev = self._stages[i - 1]
            margin = directional_derivative(prev, x, self.system.f(x)) \
                + self.spec.alphas[i - 1](prev(x))
            margins.append(float(real(margin)))
        return margins

    def lie_product_formula(self, x) -> np.ndarray:
        """Input row via the rectifier-slope product over the raw chain.

        Valid when every lower-order input row of the constraint vanishes
        identically (the weak-degree structure); used as an independent
        cross-check of the jet route.
        """
        r = self.spec.order
        sign = -1.0 if (r - 1) % 2 else 1.0
        slope_product = 1.0
        for theta, margin in zip(self.spec.gammas, self.stage_values(x)):
            slope_product *= theta.slope(margin)
        tail = lie_g_lie_f(self.system, self._psi, r - 1, x)
        return sign * slope_product * tail


@dataclass(frozen=True)
class ChainEval:
    """Stage values of the chain plus the last stage's Lie derivatives."""

    stages: np.ndarray
    lf_last: float
    lg_last: np.ndarray


class HocbfBarrier(Barrier):
    """Dynamic-extension chain; the safe set is the stage intersection.

    ``value`` is the minimum over stage values (nonnegative exactly on the
    intersection); ``certificate`` is the last stage, the scalar the chain
    filter condition constrains.
    """

    def __init__(self, spec: BarrierSpec, system: ControlAffineSystem):
        super().__init__(spec, system)
        stages: list[ScalarFn] = [self._psi]
        for i in range(spec.order - 1):
            stages.append(self._make_stage(stages[-1], spec.alphas[i]))
        self._stages = stages

    def _make_stage(self, prev: ScalarFn, alpha: ClassKFn) -> ScalarFn:
        system = self.system

        def stage(x):
            return directional_derivative(prev, x, system.f(x)) + alpha(prev(x))

        return stage

    def value(self, x) -> Scalar:
        values = [stage(x) for stage in self._stages]
        return min(values, key=real)

    def certificate(self, x) -> Scalar:
        return self._stages[-1](x)

    def stage_values(self, x) -> list[float]:
        return [float(real(stage(x))) for stage in self._stages[1:]]

    def chain(self, x) -> ChainEval:
        last = self._stages[-1]
        stages = np.array([float(real(stage(x))) for stage in self._stages])
        lf_last = directional_derivative(last, x, self.system.f(x))
        lg_last = np.array(
            [directional_derivative(last, x, self.system.g_column(x, j))
             for j in range(self.system.m)]
        )
        return ChainEval(stages=stages, lf_last=lf_last, lg_last=lg_last)

    def condition_terms(self, x):
        ev = self.chain(x)
        cert = float(ev.stages[-1])
        self._check_value(cert, x)
        return cert, ev.lf_last, ev.lg_last


class BreedenBarrier(Barrier):
    """Piecewise degree-two construction with a quadratic drift-margin penalty."""

    def value(self, x) -> Scalar:
        base = self._psi(x)
        drift = directional_derivative(self._psi, x, self.system.f(x))
        if real(drift) >= 0.0:
            return base
        return base - 0.5 * drift * drift

    def condition_terms(self, x):
        system = self.system
        psi = self._psi
        base = self.psi(x)
        fvec = system.f(x)
        lf_psi = directional_derivative(psi, x, fvec)
        gmat = system.g(x)
        columns = [[row[j] for row in gmat] for j in range(system.m)]
        lg_psi = [directional_derivative(psi, x, col) for col in columns]
        if lf_psi >= 0.0:
            self._check_value(base, x)
            return base, lf_psi, np.asarray(lg_psi)

        def lf_psi_fn(y):
            return directional_derivative(psi, y, system.f(y))

        lf2_psi = directional_derivative(lf_psi_fn, x, fvec)
        lg_lf_psi = [directional_derivative(lf_psi_fn, x, col) for col in columns]
        value = base - 0.5 * lf_psi * lf_psi
        self._check_value(value, x)
        lf = lf_psi - lf_psi * lf2_psi
        lg = [raw - lf_psi * second for raw, second in zip(lg_psi, lg_lf_psi)]
        return value, lf, np.asarray(lg)


class BacksteppingBarrier(Barrier):
    """Quadratic penalty on the mismatch to a virtual velocity command.

    Built for the double integrator only: the construction hard-codes that
    the second state is the derivative of the first and carries the input.
    The virtual command ``k(x) = -k_gain * x`` keeps the constraint
    derivative along it nonnegative on the constraint set, which the
    constructor verifies by sampling.
    """

    rectified = False

    def __init__(self, spec: BarrierSpec, system: ControlAffineSystem):
        if system.name != "double_integrator":
            raise WrongSystem(
                f"backstepping constructions are double-integrator only, got {system.name!r}"
            )
        super().__init__(spec, system)
        self._alpha = spec.alphas[0]
        self._validate_virtual_command()

    def _k(self, x0: Scalar) -> Scalar:
        return -self.spec.k_gain * x0

    def _constraint_slope(self, x) -> Scalar:
        """d psi / d position at ``x`` (psi depends on the first state only)."""
        direction = [0.0] * self.system.n
        direction[0] = 1.0
        return directional_derivative(self._psi, x, direction)

    def _validate_virtual_command(self, samples: int = 201) -> None:
        lo, hi = self.system.state_domain or ((-1.5, 0.0), (1.5, 0.0))
        for x0 in np.linspace(lo[0], hi[0], samples):
            state = [float(x0), 0.0]
            base = self.psi(state)
            if base < 0.0:
                continue  # command inequality is required on the constraint set
            slope_term = real(self._constraint_slope(state) * self._k(float(x0)))
            if slope_term < -real(self._alpha(base)) - 1e-12:
                raise ValueError(
                    f"virtual command violates its slope inequality at x={x0}"
                )

    def value(self, x) -> Scalar:
        mismatch = x[1] - self._k(x[0])
        return self._psi(x) - 0.5 * mismatch * mismatch


class RectifiedBacksteppingBarrier(BacksteppingBarrier):
    """Backstepping penalty applied only when the constraint is being eroded."""

    rectified = True

    def __init__(self, spec: BarrierSpec, system: ControlAffineSystem):
        super().__init__(spec, system)
        self._theta = spec.gammas[0]

    def _mismatch_rate(self, x) -> Scalar:
        return self._constraint_slope(x) * (x[1] - self._k(x[0]))

    def value(self, x) -> Scalar:
        return self._psi(x) - self._theta(self._mismatch_rate(x))

    def stage_values(self, x) -> list[float]:
        return [float(real(self._mismatch_rate(x)))]


_BARRIER_CLASSES = {
    "plain": PlainBarrier,
    "recbf2": Recbf2Barrier,
    "recbf_recursive": RecursiveRecbfBarrier,
    "hocbf": HocbfBarrier,
    "breeden": BreedenBarrier,
    "backstepping": BacksteppingBarrier,
    "rectified_backstepping": RectifiedBacksteppingBarrier,
}


def build_barrier(spec: BarrierSpec, system: ControlAffineSystem) -> Barrier:
    """Bind a spec to a system, returning the matching construction."""
    return _BARRIER_CLASSES[spec.kind](spec, system)


def default_barrier_spec(system_name: str, constraint: ConstraintFn) -> BarrierSpec:
    """The pinned default construction for each builtin system."""
    from .classk import Linear, SignedSquare  # local alias for readability

    if system_name == "triple_integrator":
        return BarrierSpec(
            kind="recbf_recursive",
            constraint=constraint,
            alphas=(Linear(1.0), Linear(1.0), Linear(1.0)),
            gammas=(Rectifier(SignedSquare(1.0)), Rectifier(SignedSquare(1.0))),
            order=3,
        )
    if system_name == "aircraft_pitch":
        return BarrierSpec(
            kind="recbf2",
            constraint=constraint,
            alphas=(Linear(0.5), Linear(0.5)),
            gammas=(Rectifier(SignedSquare(1.0), epsilon=0.1),),
        )
    return BarrierSpec(
        kind="recbf2",
        constraint=constraint,
        alphas=(Linear(1.0), Linear(1.0)),
        gammas=(Rectifier(SignedSquare(1.0)),),
    )


def barrier_spec_from_config(cfg: dict, constraint: ConstraintFn) -> BarrierSpec:
    """Build a spec from its JSON form, binding the given constraint.

    A config may override the constraint with a polynomial table under
    ``"psi"`` (paired with ``"relative_degree"``), matching the system loader.
    """
    if "psi" in cfg:
        n = len(cfg["psi"][0][1])
        constraint = ConstraintFn(
            psi=polynomial_fn(cfg["psi"], n),
            relative_degree=int(cfg.get("relative_degree", constraint.relative_degree)),
        )
    return BarrierSpec(
        kind=str(cfg["kind"]),
        constraint=constraint,
        alphas=tuple(classk_from_config(a) for a in cfg.get("alphas", [])),
        gammas=tuple(rectifier_from_config(g) for g in cfg.get("gammas", [])),
        order=int(cfg.get("order", 2)),
        k_gain=float(cfg.get("k_gain", 0.5)),
    )
