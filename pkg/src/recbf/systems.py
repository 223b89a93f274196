"""Control-affine system models and Lie-derivative accessors.

A system is ``xdot = f(x) + g(x) u`` with smooth, jet-evaluable ``f`` and
``g``.  Lie derivatives are computed by lifting points into jets: each
differentiation stage re-evaluates the vector field at the perturbed point,
so iterated derivatives are the full Lie derivatives rather than
frozen-direction ones.

Ships the four example models used throughout the test suite and the
reproduction experiments, plus a small polynomial-table loader so desk
experiments can define systems in JSON without an expression parser.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence, TYPE_CHECKING

import numpy as np

from . import jets
from .errors import NestingDepthExceeded, NonFiniteEvaluation, UnknownSystem
from .jets import Jet, Scalar, ScalarFn, directional_derivative

if TYPE_CHECKING:  # pragma: no cover
    from .barriers import BarrierSpec

VectorFn = Callable[[Sequence[Scalar]], list]
MatrixFn = Callable[[Sequence[Scalar]], list]

#: Iterated drift derivatives beyond this order are rejected; the jet nesting
#: cost doubles per level and nothing in the library needs more.
MAX_LIE_ORDER = 3


@dataclass(frozen=True)
class ControlAffineSystem:
    """Dimensions plus jet-evaluable drift ``f`` and input matrix ``g``.

    ``f`` maps a state sequence to a length-n list and ``g`` to an n x m
    nested list; both must accept jets.  ``state_domain`` is an optional box
    used for sampling and default verification grids.
    """

    name: str
    n: int
    m: int
    f: VectorFn
    g: MatrixFn
    state_domain: tuple[tuple[float, ...], tuple[float, ...]] | None = None

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("state and input dimensions must be at least 1")
        if self.state_domain is not None:
            lo, hi = self.state_domain
            if len(lo) != self.n or len(hi) != self.n:
                raise ValueError("state_domain bounds must have length n")

    def f_at(self, x) -> np.ndarray:
        """Drift as a float vector, checked for shape and finiteness."""
        out = np.asarray(self.f(x), dtype=float)
        if out.shape != (self.n,):
            raise ValueError(f"f returned shape {out.shape}, expected ({self.n},)")
        if not np.all(np.isfinite(out)):
            raise NonFiniteEvaluation(f"drift of {self.name!r} is non-finite at {x!r}")
        return out

    def g_at(self, x) -> np.ndarray:
        """Input matrix as an n x m float array, checked like :meth:`f_at`."""
        out = np.asarray(self.g(x), dtype=float)
        if out.shape != (self.n, self.m):
            raise ValueError(f"g returned shape {out.shape}, expected ({self.n}, {self.m})")
        if not np.all(np.isfinite(out)):
            raise NonFiniteEvaluation(f"input matrix of {self.name!r} is non-finite at {x!r}")
        return out

    def g_column(self, x, j: int) -> list:
        """Column j of g(x) as a list; jet-evaluable."""
        return [row[j] for row in self.g(x)]

    def sample_states(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform samples from the declared state box."""
        if self.state_domain is None:
            raise ValueError(f"system {self.name!r} declares no state domain")
        lo = np.asarray(self.state_domain[0])
        hi = np.asarray(self.state_domain[1])
        return rng.uniform(lo, hi, size=(count, self.n))


@dataclass(frozen=True)
class ConstraintFn:
    """Scalar state constraint ``psi(x) >= 0`` with its declared weak relative degree."""

    psi: ScalarFn
    relative_degree: int
    name: str = "psi"

    def __post_init__(self):
        if self.relative_degree < 1:
            raise ValueError("relative degree must be at least 1")
        if self.relative_degree > MAX_LIE_ORDER + 1:
            raise NestingDepthExceeded(
                f"relative degree {self.relative_degree} exceeds the nesting cap"
            )


def _along_drift(system: ControlAffineSystem, fn: ScalarFn) -> ScalarFn:
    """The map x -> grad(fn)(x) . f(x), itself jet-evaluable."""

    def lifted(x):
        return directional_derivative(fn, x, system.f(x))

    return lifted


def lie_f(system: ControlAffineSystem, fn: ScalarFn, order: int, x) -> float:
    """Iterated drift Lie derivative of ``fn`` at ``x`` (order 0 returns fn(x))."""
    if order < 0 or order > MAX_LIE_ORDER:
        raise NestingDepthExceeded(f"drift derivative order {order} not supported")
    phi = fn
    for _ in range(order):
        phi = _along_drift(system, phi)
    out = phi(x)
    if not isinstance(out, Jet) and not math.isfinite(out):
        raise NonFiniteEvaluation(f"order-{order} drift derivative is non-finite at {x!r}")
    return out


def lie_g_lie_f(system: ControlAffineSystem, fn: ScalarFn, order: int, x) -> np.ndarray:
    """Row vector of input-direction derivatives of the order-``order`` drift derivative.

    Component j is grad(L_f^order fn)(x) . g_j(x) where g_j is the j-th
    column of the input matrix.
    """
    if order < 0 or order > MAX_LIE_ORDER:
        raise NestingDepthExceeded(f"input derivative order {order} not supported")
    phi = fn
    for _ in range(order):
        phi = _along_drift(system, phi)
    row = [directional_derivative(phi, x, system.g_column(x, j)) for j in range(system.m)]
    if isinstance(row[0], Jet):
        return row  # nested use: keep jets
    out = np.asarray(row, dtype=float)
    if not np.all(np.isfinite(out)):
        raise NonFiniteEvaluation(f"input-direction derivative is non-finite at {x!r}")
    return out


# ---------------------------------------------------------------------------
# Builtin models
# ---------------------------------------------------------------------------


class BuiltinModel(NamedTuple):
    system: ControlAffineSystem
    constraint: ConstraintFn
    barrier: "BarrierSpec"


# Pitch-dynamics constants for the aircraft model.  The barrier literature the
# model comes from fixes none of these numerically; the values below are the
# pinned defaults every reproduction config records.
AIRCRAFT_GRAVITY = 9.81
AIRCRAFT_AIRSPEED = 30.0
AIRCRAFT_ACTUATOR_TAU = 0.5
AIRCRAFT_PITCH_LIMIT = 0.3


def double_integrator_system() -> tuple[ControlAffineSystem, ConstraintFn]:
    """Position-bounded double integrator: state (x, xdot), psi = 1 - x^2."""

    def drift(x):
        return [x[1], 0.0]

    def actuation(x):
        return [[0.0], [1.0]]

    def psi(x):
        return 1.0 - x[0] * x[0]

    system = ControlAffineSystem(
        name="double_integrator", n=2, m=1, f=drift, g=actuation,
        state_domain=((-1.5, -4.0), (1.5, 4.0)),
    )
    return system, ConstraintFn(psi=psi, relative_degree=2)


def triple_integrator_system() -> tuple[ControlAffineSystem, ConstraintFn]:
    """Chain of three integrators with the same position bound (degree 3)."""

    def drift(x):
        return [x[1], x[2], 0.0]

    def actuation(x):
        return [[0.0], [0.0], [1.0]]

    def psi(x):
        return 1.0 - x[0] * x[0]

    system = ControlAffineSystem(
        name="triple_integrator", n=3, m=1, f=drift, g=actuation,
        state_domain=((-1.5, -3.0, -3.0), (1.5, 3.0, 3.0)),
    )
    return system, ConstraintFn(psi=psi, relative_degree=3)


def aircraft_pitch_system(
    gravity: float = AIRCRAFT_GRAVITY,
    airspeed: float = AIRCRAFT_AIRSPEED,
    actuator_tau: float = AIRCRAFT_ACTUATOR_TAU,
    pitch_limit: float = AIRCRAFT_PITCH_LIMIT,
) -> tuple[ControlAffineSystem, ConstraintFn]:
    """Fixed-wing pitch dynamics with a first-order vertical-acceleration actuator.

    State is (theta, A_z); the input is the commanded A_z.  The constraint
    bounds the pitch magnitude: psi = pitch_limit^2 - theta^2.
    """
    rate_gain = gravity / airspeed

    def drift(x):
        return [rate_gain * (x[1] - jets.cos(x[0])), -x[1] / actuator_tau]

    def actuation(x):
        return [[0.0], [1.0 / actuator_tau]]

    def psi(x):
        return pitch_limit * pitch_limit - x[0] * x[0]

    margin = 1.5 * pitch_limit
    system = ControlAffineSystem(
        name="aircraft_pitch", n=2, m=1, f=drift, g=actuation,
        state_domain=((-margin, -30.0), (margin, 30.0)),
    )
    return system, ConstraintFn(psi=psi, relative_degree=2)


def mixed_two_input_system() -> tuple[ControlAffineSystem, ConstraintFn]:
    """Two-input test model where inputs enter at different derivative orders.

    xdot1 = x2 + u1, xdot2 = u2, psi = 1 - x1^2.  The first-order input row
    (-2 x1, 0) and the second-order row (-2 x2, -2 x1) are linearly
    independent wherever both are nonzero.
    """

    def drift(x):
        return [x[1], 0.0]

    def actuation(x):
        return [[1.0, 0.0], [0.0, 1.0]]

    def psi(x):
        return 1.0 - x[0] * x[0]

    system = ControlAffineSystem(
        name="mixed_two_input", n=2, m=2, f=drift, g=actuation,
        state_domain=((-1.5, -3.0), (1.5, 3.0)),
    )
    return system, ConstraintFn(psi=psi, relative_degree=2)


_BUILTIN_FACTORIES = {
    "double_integrator": double_integrator_system,
    "triple_integrator": triple_integrator_system,
    "aircraft_pitch": aircraft_pitch_system,
    "mixed_two_input": mixed_two_input_system,
}


def builtin(name: str) -> BuiltinModel:
    """Return (system, constraint, default barrier spec) for a builtin model."""
    from .barriers import default_barrier_spec  # deferred: barriers imports this module

    try:
        factory = _BUILTIN_FACTORIES[name]
    except KeyError:
        raise UnknownSystem(
            f"unknown system {name!r}; available: {sorted(_BUILTIN_FACTORIES)}"
        ) from None
    system, constraint = factory()
    return BuiltinModel(system, constraint, default_barrier_spec(name, constraint))


def builtin_names() -> list[str]:
    return sorted(_BUILTIN_FACTORIES)


# ---------------------------------------------------------------------------
# Polynomial systems from JSON tables
# ---------------------------------------------------------------------------


def polynomial_fn(terms: Sequence, n: int) -> ScalarFn:
    """Scalar polynomial from a term table ``[[coeff, [e1, ..., en]], ...]``."""
    parsed = [(float(c), tuple(int(e) for e in exps)) for c, exps in terms]
    for _, exps in parsed:
        if len(exps) != n:
            raise ValueError(f"exponent tuple {exps} does not match state dimension {n}")

    def fn(x):
        total = 0.0
        for coeff, exps in parsed:
            term = coeff
            for xi, e in zip(x, exps):
                if e:
                    term = term * xi ** e
            total = total + term
        return total

    return fn


def system_from_config(cfg: dict) -> tuple[ControlAffineSystem, ConstraintFn]:
    """Build a polynomial system from its JSON description.

    Expected keys: ``n``, ``m``, ``f`` (n component term tables), ``g``
    (n x m nested term tables), ``psi`` (term table), ``relative_degree``,
    and optionally ``name`` and ``domain`` ([[lo, hi]] per coordinate).
    """
    n, m = int(cfg["n"]), int(cfg["m"])
    f_components = [polynomial_fn(t, n) for t in cfg["f"]]
    g_entries = [[polynomial_fn(t, n) for t in row] for row in cfg["g"]]
    if len(f_components) != n or len(g_entries) != n or any(len(r) != m for r in g_entries):
        raise ValueError("f/g table shapes do not match declared dimensions")

    def drift(x):
        return [component(x) for component in f_components]

    def actuation(x):
        return [[entry(x) for entry in row] for row in g_entries]

    domain = None
    if "domain" in cfg:
        bounds = cfg["domain"]
        domain = (tuple(float(b[0]) for b in bounds), tuple(float(b[1]) for b in bounds))
    system = ControlAffineSystem(
        name=str(cfg.get("name", "custom")), n=n, m=m, f=drift, g=actuation,
        state_domain=domain,
    )
    constraint = ConstraintFn(
        psi=polynomial_fn(cfg["psi"], n),
        relative_degree=int(cfg["relative_degree"]),
    )
    return system, constraint
