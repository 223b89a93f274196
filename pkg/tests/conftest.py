import numpy as np
import pytest

from recbf.barriers import BarrierSpec, build_barrier
from recbf.classk import Linear
from recbf.systems import builtin


@pytest.fixture(scope="session")
def double_integrator():
    return builtin("double_integrator")


@pytest.fixture(scope="session")
def triple_integrator():
    return builtin("triple_integrator")


@pytest.fixture(scope="session")
def aircraft():
    return builtin("aircraft_pitch")


@pytest.fixture(scope="session")
def mixed():
    return builtin("mixed_two_input")


@pytest.fixture(scope="session")
def recbf2_di(double_integrator):
    """Default order-2 rectified barrier on the double integrator."""
    return build_barrier(double_integrator.barrier, double_integrator.system)


@pytest.fixture(scope="session")
def hocbf_di(double_integrator):
    spec = BarrierSpec(
        kind="hocbf",
        constraint=double_integrator.constraint,
        alphas=(Linear(1.0), Linear(1.0)),
        order=2,
    )
    return build_barrier(spec, double_integrator.system)


@pytest.fixture(scope="session")
def breeden_di(double_integrator):
    spec = BarrierSpec(
        kind="breeden",
        constraint=double_integrator.constraint,
        alphas=(Linear(1.0),),
    )
    return build_barrier(spec, double_integrator.system)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def sample_away_from_seams(barrier, count, rng, seam_gap=1e-3):
    """Domain samples at which the barrier is smooth in a seam_gap window.

    Rejects states whose rectifier stage margins sit within ``seam_gap`` of
    the activation threshold (and, for the piecewise construction, whose
    drift margin is within ``seam_gap`` of its seam): central differences are
    not a valid derivative oracle across a curvature kink.
    """
    system = barrier.system
    kept = []
    thresholds = [g.epsilon for g in barrier.spec.gammas]
    while len(kept) < count:
        for state in system.sample_states(4 * count, rng):
            margins = barrier.stage_values(state)
            if any(abs(m - eps) <= seam_gap for m, eps in zip(margins, thresholds)):
                continue
            if barrier.spec.kind == "breeden":
                from recbf.jets import directional_derivative

                drift = directional_derivative(
                    barrier.spec.constraint.psi, state, system.f(state)
                )
                if abs(drift) <= seam_gap:
                    continue
            kept.append(state)
            if len(kept) == count:
                break
    return kept
