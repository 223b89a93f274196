import numpy as np
import pytest

from recbf.barriers import BarrierSpec, build_barrier
from recbf.classk import Linear, Rectifier, SignedSquare
from recbf.filtering import FilterConfig, hocbf_filter, project_halfspace, safety_filter


def brute_force_projection(a, b, u_nom, lo=-10.0, hi=10.0, step=1e-4):
    """Grid minimizer of ||u - u_nom|| over the feasible half space (1-D input)."""
    grid = np.arange(lo, hi + step, step)
    feasible = a + b[0] * grid >= 0.0
    if not feasible.any():
        return None
    candidates = grid[feasible]
    return candidates[np.argmin(np.abs(candidates - u_nom[0]))]


def test_inactive_when_already_satisfied():
    res = project_halfspace(1.0, [2.0], np.zeros(1))
    assert res.feasible and not res.active
    np.testing.assert_array_equal(res.u, [0.0])
    assert res.margin == 1.0


def test_active_projection_hand_solved():
    res = project_halfspace(-1.0, [2.0], np.zeros(1))
    assert res.active and res.feasible
    np.testing.assert_allclose(res.u, [0.5])
    assert res.margin == pytest.approx(0.0, abs=1e-12)
    oracle = brute_force_projection(-1.0, [2.0], np.zeros(1))
    assert abs(res.u[0] - oracle) <= 1e-3


def test_infeasible_empty_halfspace():
    res = project_halfspace(-1.0, [0.0, 0.0], np.zeros(2))
    assert not res.feasible
    np.testing.assert_array_equal(res.u, [0.0, 0.0])


def test_sub_tolerance_deficit_counts_as_satisfied():
    res = project_halfspace(-1e-10, [0.0], np.zeros(1))
    assert res.feasible and not res.active
    assert res.margin >= -1e-9


def test_brute_force_oracle_on_random_instances(rng):
    for _ in range(1000):
        a = float(rng.uniform(-3.0, 3.0))
        b = np.array([float(rng.uniform(-2.0, 2.0))])
        u_nom = np.array([float(rng.uniform(-4.0, 4.0))])
        res = project_halfspace(a, b, u_nom)
        oracle = brute_force_projection(a, b, u_nom)
        if oracle is None:
            if abs(b[0]) <= 1e-9:
                assert not res.feasible
            continue
        assert res.feasible
        assert abs(res.u[0] - oracle) <= 1e-3
        if res.active:
            assert abs(res.margin) <= 1e-9


def test_kkt_structure_on_multi_input(rng):
    for _ in range(300):
        a = float(rng.uniform(-4.0, 0.0))
        b = rng.uniform(-2.0, 2.0, size=3)
        u_nom = rng.uniform(-3.0, 3.0, size=3)
        res = project_halfspace(a, b, u_nom)
        if not res.active:
            continue
        # correction parallel to the constraint row, zero residual margin
        correction = res.u - u_nom
        cross = np.linalg.norm(correction) * np.linalg.norm(b)
        assert abs(abs(correction @ b) - cross) <= 1e-9 * max(1.0, cross)
        assert abs(res.margin) <= 1e-9


def test_idempotence(rng):
    for _ in range(200):
        a = float(rng.uniform(-3.0, 3.0))
        b = rng.uniform(-2.0, 2.0, size=2)
        u_nom = rng.uniform(-3.0, 3.0, size=2)
        first = project_halfspace(a, b, u_nom)
        if not first.feasible:
            continue
        second = project_halfspace(a, b, first.u)
        np.testing.assert_allclose(second.u, first.u, atol=1e-12)


def test_safety_filter_on_rectified_barrier(recbf2_di):
    cfg = FilterConfig(alpha=Linear(1.0))
    # hand numbers at (0.5, 1): a = -2.5 + 0.6875, b = -0.5
    res = safety_filter(recbf2_di, cfg, [0.5, 1.0], np.zeros(1))
    assert res.active
    np.testing.assert_allclose(res.u, [-3.625])
    assert res.margin == pytest.approx(0.0, abs=1e-12)


def test_chain_filter_examples(hocbf_di):
    cfg = FilterConfig(alpha=Linear(1.0), mode="hocbf")
    # singular state with excessive speed: no input helps
    res = hocbf_filter(hocbf_di, cfg, [0.0, 3.0], np.zeros(1))
    assert not res.feasible
    assert res.margin == pytest.approx(-17.0)
    # singular state with modest speed: nominal already satisfies the condition
    res2 = hocbf_filter(hocbf_di, cfg, [0.0, 0.5], np.zeros(1))
    assert res2.feasible and not res2.active
    np.testing.assert_array_equal(res2.u, [0.0])
    assert res2.margin == pytest.approx(0.5)
    # away from the singular line the constraint binds with zero residual
    res3 = hocbf_filter(hocbf_di, cfg, [0.5, 3.0], np.zeros(1))
    assert res3.active and res3.feasible
    assert res3.margin == pytest.approx(0.0, abs=1e-12)


def test_safety_filter_dispatches_chain_mode(hocbf_di):
    cfg = FilterConfig(alpha=Linear(1.0), mode="hocbf")
    res = safety_filter(hocbf_di, cfg, [0.0, 3.0], np.zeros(1))
    assert not res.feasible


def test_chain_filter_requires_chain_barrier(recbf2_di):
    with pytest.raises(TypeError):
        hocbf_filter(recbf2_di, FilterConfig(alpha=Linear(1.0), mode="hocbf"),
                     [0.0, 0.0], np.zeros(1))


def test_chain_filter_blows_up_near_singular_line(hocbf_di):
    """Fixed approach speed, position shrinking toward the singular line."""
    cfg = FilterConfig(alpha=Linear(1.0), mode="hocbf")
    res = hocbf_filter(hocbf_di, cfg, [1e-4, 3.0], np.zeros(1))
    assert res.feasible
    assert np.linalg.norm(res.u) >= 1e3
    norms = []
    for x_pos in (1e-2, 1e-3, 1e-4, 1e-5):
        out = hocbf_filter(hocbf_di, cfg, [x_pos, 3.0], np.zeros(1))
        norms.append(np.linalg.norm(out.u))
    assert all(b > 5.0 * a for a, b in zip(norms, norms[1:]))


def test_filtered_input_continuous_across_activation(double_integrator):
    """Strict-variant filter along a path crossing the activation threshold."""
    spec = BarrierSpec(
        kind="recbf2",
        constraint=double_integrator.constraint,
        alphas=(Linear(1.0), Linear(1.0)),
        gammas=(Rectifier(SignedSquare(1.0), epsilon=0.1),),
    )
    barrier = build_barrier(spec, double_integrator.system)
    cfg = FilterConfig(alpha=Linear(1.0))
    u_nom = np.zeros(1)
    speeds = np.linspace(0.0, 3.0, 3001)
    inputs = np.array([safety_filter(barrier, cfg, [0.5, s], u_nom).u[0] for s in speeds])
    jumps = np.abs(np.diff(inputs))
    assert jumps.max() <= 0.5  # no O(1) jump anywhere on the path
    # grid refinement halves the largest step-to-step change: bounded slope,
    # not a hidden discontinuity
    speeds2 = np.linspace(0.0, 3.0, 6001)
    inputs2 = np.array([safety_filter(barrier, cfg, [0.5, s], u_nom).u[0] for s in speeds2])
    assert np.abs(np.diff(inputs2)).max() <= 0.6 * jumps.max()


def test_filter_config_validation():
    with pytest.raises(ValueError):
        FilterConfig(alpha=Linear(1.0), mode="sontag")
    with pytest.raises(ValueError):
        FilterConfig(alpha=Linear(1.0), zero_tolerance=0.0)
