"""End-to-end acceptance gates.

Each test prints one ``criterion N: PASS/FAIL`` line with the measured
quantities (run with ``pytest -s`` or ``-rA`` to see all of them), and
asserts the stated tolerances.
"""

import math
import time

import numpy as np
import pytest

from recbf.barriers import BarrierSpec, build_barrier
from recbf.classk import Linear, Rectifier, SignedSquare
from recbf.experiments import (
    filtered_controller,
    pitch_reference,
    run_experiment,
    sample_initial_conditions,
    zero_nominal,
    pitch_tracking_nominal,
)
from recbf.filtering import FilterConfig, project_halfspace
from recbf.jets import directional_derivative, fd_gradient
from recbf.sim import GridSpec, SimConfig, integrate, levelset, sweep
from recbf.systems import builtin
from recbf.verify import check_cbf_condition

from conftest import sample_away_from_seams


def announce(number: int, ok: bool, detail: str) -> None:
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")


@pytest.fixture(scope="module")
def di_model():
    return builtin("double_integrator")


@pytest.fixture(scope="module")
def di_recbf(di_model):
    return build_barrier(di_model.barrier, di_model.system)


@pytest.fixture(scope="module")
def di_hocbf(di_model):
    spec = BarrierSpec(kind="hocbf", constraint=di_model.constraint,
                       alphas=(Linear(1.0), Linear(1.0)), order=2)
    return build_barrier(spec, di_model.system)


def test_criterion_01_zero_input_certification(di_recbf):
    start = time.perf_counter()
    report = check_cbf_condition(di_recbf, Linear(1.0), resolution=200)
    elapsed = time.perf_counter() - start
    ok = report.passed and elapsed < 10.0
    announce(1, ok, f"violations={len(report.violations)}, runtime={elapsed:.2f}s")
    assert report.passed
    assert elapsed < 10.0


def test_criterion_02_chain_candidate_violation_band(di_hocbf):
    report = check_cbf_condition(di_hocbf, Linear(1.0), resolution=201)
    (x_lo, x_hi, nx), (v_lo, v_hi, nv) = report.grid["axes"]
    expected = set()
    for x_pos in np.linspace(x_lo, x_hi, nx):
        for speed in np.linspace(v_lo, v_hi, nv):
            # singular column of the last-stage input row; drift shortfall
            # -2 xdot^2 < -alpha(alpha0(1)) = -1, i.e. |xdot| > 1/sqrt(2)
            if abs(-2.0 * x_pos) <= 1e-9 and -2.0 * speed * speed < -1.0:
                expected.add((round(float(x_pos), 12), round(float(speed), 12)))
    reported = {(round(v["state"][0], 12), round(v["state"][1], 12))
                for v in report.violations}
    band_edge = min(abs(s) for _, s in reported)
    ok = reported == expected and band_edge >= 1.0 / math.sqrt(2.0)
    announce(2, ok, f"{len(reported)} violations on x=0, min |xdot| = {band_edge:.4f} "
                    f">= 1/sqrt(2) = {1.0 / math.sqrt(2.0):.4f}")
    assert reported == expected
    assert band_edge >= 1.0 / math.sqrt(2.0)


def test_criterion_03_finite_escape_vs_rectified(di_model, di_recbf, di_hocbf):
    x0 = [-1.2, 3.0]
    cfg = SimConfig(horizon=10.0, dt=1e-3)
    chain_ctrl = filtered_controller(
        di_hocbf, FilterConfig(alpha=Linear(1.0), mode="hocbf"), zero_nominal(1))
    chain_run = integrate(di_model.system, chain_ctrl, cfg, x0, barrier=di_hocbf)

    rect_ctrl = filtered_controller(
        di_recbf, FilterConfig(alpha=Linear(1.0)), zero_nominal(1))
    rect_run = integrate(di_model.system, rect_ctrl, cfg, x0, barrier=di_recbf)

    min_psi = float(rect_run.psi_values.min())
    entered = np.flatnonzero(rect_run.psi_values >= 0.0)
    post_entry_min = float(rect_run.psi_values[entered[0]:].min()) if entered.size else math.nan

    ok = (chain_run.termination.status in ("escape", "infeasible")
          and chain_run.termination.time <= 10.0
          and chain_run.max_input_norm >= 1e3
          and rect_run.completed
          and min_psi >= -1e-6)
    announce(3, ok,
             f"chain: {chain_run.termination.status} at t={chain_run.termination.time}, "
             f"max|u|={chain_run.max_input_norm:.3g}; rectified: "
             f"{rect_run.termination.status}, min psi={min_psi:.3g} "
             f"(psi(x0)={rect_run.psi_values[0]:.3g}, post-entry min={post_entry_min:.3g})")

    assert chain_run.termination.status in ("escape", "infeasible")
    assert chain_run.termination.time <= 10.0
    assert chain_run.max_input_norm >= 1e3
    assert rect_run.completed
    # Having entered the constraint set, the run never leaves it again.
    assert entered.size and post_entry_min >= -1e-6
    assert min_psi >= -1e-6, (
        f"min psi over the whole run is {min_psi}: the pinned start (-1.2, 3) has "
        f"psi(x0) = 1 - 1.2^2 = -0.44 < 0, so the bound cannot hold at t = 0"
    )


def test_criterion_04_forward_invariance_sweep(di_model, di_recbf):
    rng = np.random.default_rng(2024)
    starts = sample_initial_conditions(di_model.system, di_recbf, 50, rng, region="safe")
    ctrl = filtered_controller(di_recbf, FilterConfig(alpha=Linear(1.0)), zero_nominal(1))
    cfg = SimConfig(horizon=10.0, dt=1e-3)
    begin = time.perf_counter()
    runs = sweep(di_model.system, ctrl, cfg, starts, barrier=di_recbf, jobs=2)
    elapsed = time.perf_counter() - begin
    min_h = min(float(t.h_values.min()) for t in runs)
    min_psi = min(float(t.psi_values.min()) for t in runs)
    completed = sum(t.completed for t in runs)
    ok = (completed == 50 and min_h >= -1e-6 and min_psi >= -1e-6 and elapsed < 60.0)
    announce(4, ok, f"completed={completed}/50, min h={min_h:.3g}, "
                    f"min psi={min_psi:.3g}, runtime={elapsed:.1f}s")
    assert completed == 50
    assert min_h >= -1e-6
    assert min_psi >= -1e-6
    assert elapsed < 60.0


def test_criterion_05_stabilization_contrast(di_model, di_recbf):
    cfg = SimConfig(horizon=10.0, dt=1e-3)
    rect_ctrl = filtered_controller(
        di_recbf, FilterConfig(alpha=Linear(1.0)), zero_nominal(1))
    starts = [[1.3, 0.0], [-1.3, 0.0], [1.2, -0.5], [-1.2, 0.5], [1.25, 1.0]]
    reach_times = []
    for x0 in starts:
        assert di_recbf.value(x0) < 0.0
        assert abs(x0[0]) > 1e-6  # away from the singular line
        run = integrate(di_model.system, rect_ctrl, cfg, x0, barrier=di_recbf)
        hit = np.flatnonzero(run.h_values >= 0.0)
        reach_times.append(float(run.times[hit[0]]) if hit.size else math.inf)

    spec = BarrierSpec(kind="breeden", constraint=di_model.constraint,
                       alphas=(Linear(1.0),))
    piecewise = build_barrier(spec, di_model.system)
    pw_ctrl = filtered_controller(
        piecewise, FilterConfig(alpha=Linear(1.0)), zero_nominal(1))
    stuck_start = [1.3, 0.0]
    drift = directional_derivative(di_model.constraint.psi, stuck_start,
                                   di_model.system.f(stuck_start))
    assert drift == 0.0 and piecewise.psi(stuck_start) < 0.0
    stuck = integrate(di_model.system, pw_ctrl, cfg, stuck_start, barrier=piecewise)
    never_safe = bool(np.all(stuck.h_values < 0.0))

    ok = all(t <= 10.0 for t in reach_times) and never_safe
    announce(5, ok, f"rectified reach times={[round(t, 3) for t in reach_times]}; "
                    f"piecewise stuck start: {stuck.termination.status}, "
                    f"reached safe set: {not never_safe}")
    assert all(t <= 10.0 for t in reach_times)
    assert never_safe


def test_criterion_06_conservativeness_ordering(di_model):
    grid = GridSpec(ranges=((-1.5, 1.5), (-4.0, 4.0)), resolution=(201, 201))
    con = di_model.constraint
    rectified = build_barrier(di_model.barrier, di_model.system)
    back = build_barrier(
        BarrierSpec(kind="backstepping", constraint=con, alphas=(Linear(1.0),),
                    k_gain=0.05),
        di_model.system)
    rect_back = build_barrier(
        BarrierSpec(kind="rectified_backstepping", constraint=con,
                    alphas=(Linear(1.0),),
                    gammas=(Rectifier(SignedSquare(0.25)),), k_gain=0.05),
        di_model.system)
    n_rect = levelset(rectified, grid).nonnegative_cells()
    n_back = levelset(back, grid).nonnegative_cells()
    n_rb = levelset(rect_back, grid).nonnegative_cells()
    gap = abs(n_rb - n_rect) / n_rect
    ok = n_back < n_rb and gap <= 0.05
    announce(6, ok, f"cells: backstepping={n_back} < rectified-backstepping={n_rb} "
                    f"~ rectified={n_rect} (gap {100 * gap:.2f}%)")
    assert n_back < n_rb
    assert gap <= 0.05


def test_criterion_07_recursive_consistency(di_model, rng):
    closed = build_barrier(di_model.barrier, di_model.system)
    spec = BarrierSpec(
        kind="recbf_recursive", constraint=di_model.constraint,
        alphas=(Linear(1.0), Linear(1.0)),
        gammas=(Rectifier(SignedSquare(1.0)),), order=2)
    recursive = build_barrier(spec, di_model.system)
    worst_value = 0.0
    for x in di_model.system.sample_states(1000, rng):
        worst_value = max(worst_value, abs(recursive.value(x) - closed.value(x)))

    triple = builtin("triple_integrator")
    barrier3 = build_barrier(triple.barrier, triple.system)
    worst_rel = 0.0
    for x in triple.system.sample_states(1000, rng):
        _, lg = barrier3.lie(x)
        product = barrier3.lie_product_formula(x)
        scale = max(abs(lg[0]), abs(product[0]), 1e-30)
        if scale > 1e-12:
            worst_rel = max(worst_rel, abs(lg[0] - product[0]) / scale)
        else:
            assert lg[0] == product[0] == 0.0
    ok = worst_value <= 1e-12 and worst_rel <= 1e-8
    announce(7, ok, f"order-2 value gap={worst_value:.2e} <= 1e-12; "
                    f"product-formula rel gap={worst_rel:.2e} <= 1e-8")
    assert worst_value <= 1e-12
    assert worst_rel <= 1e-8


def test_criterion_08_derivative_oracle(di_model, rng):
    triple = builtin("triple_integrator")
    con = di_model.constraint
    unit_rect = (Rectifier(SignedSquare(1.0)),)
    cases = {
        "plain": (di_model.system,
                  BarrierSpec(kind="plain", constraint=con, alphas=(Linear(1.0),))),
        "recbf2": (di_model.system, di_model.barrier),
        "recbf_recursive": (triple.system, triple.barrier),
        "hocbf": (di_model.system,
                  BarrierSpec(kind="hocbf", constraint=con,
                              alphas=(Linear(1.0), Linear(1.0)), order=2)),
        "breeden": (di_model.system,
                    BarrierSpec(kind="breeden", constraint=con, alphas=(Linear(1.0),))),
        "backstepping": (di_model.system,
                         BarrierSpec(kind="backstepping", constraint=con,
                                     alphas=(Linear(1.0),), k_gain=0.5)),
        "rectified_backstepping": (di_model.system,
                                   BarrierSpec(kind="rectified_backstepping",
                                               constraint=con, alphas=(Linear(1.0),),
                                               gammas=unit_rect, k_gain=0.5)),
    }
    failures = []
    per_kind = 1000
    for kind, (system, spec) in cases.items():
        barrier = build_barrier(spec, system)
        for x in sample_away_from_seams(barrier, per_kind, rng):
            value_lf, value_lg = barrier.lie(x)
            grad = fd_gradient(barrier.certificate, np.asarray(x), step=1e-5)
            lf_fd = float(grad @ system.f_at(x))
            lg_fd = grad @ system.g_at(x)
            for got, want in [(value_lf, lf_fd), *zip(value_lg, lg_fd)]:
                if abs(got - want) > 1e-8 + 1e-6 * abs(want):
                    failures.append((kind, list(x), got, want))
    ok = not failures
    announce(8, ok, f"{len(cases)} barrier kinds x {per_kind} states, "
                    f"{len(failures)} finite-difference mismatches")
    assert not failures, failures[:5]


def test_criterion_09_aircraft_reproduction(tmp_path):
    rect = run_experiment("aircraft_recbf", out_dir=tmp_path, jobs=1)
    run = rect.trajectories[0]
    theta = run.states[:, 0]
    pitch_limit = 0.3
    bound_ok = bool(np.max(np.abs(theta)) <= pitch_limit + 1e-4)

    nominal = pitch_tracking_nominal(feedforward=True)
    reference = pitch_reference(run.times)
    u_nom = np.array([nominal(t, s)[0] for t, s in zip(run.times, run.states)])
    inactive = np.abs(run.inputs[:, 0] - u_nom) <= 1e-12
    window = 1000  # filter quiescent for the trailing second
    csum = np.cumsum(inactive)
    steady = np.zeros(len(run.times), dtype=bool)
    steady[window:] = (csum[window:] - csum[:-window]) == window
    tracking_error = float(np.max(np.abs(theta - reference)[steady]))

    chain = run_experiment("aircraft_hocbf", out_dir=tmp_path, jobs=1)
    chain_run = chain.trajectories[0]
    failure = chain_run.termination

    ok = (rect.trajectories[0].completed and bound_ok and steady.any()
          and tracking_error < 0.02
          and failure.status in ("escape", "infeasible") and failure.time is not None)
    announce(9, ok, f"max|theta|={np.max(np.abs(theta)):.4f} <= {pitch_limit + 1e-4}, "
                    f"steady tracking err={tracking_error:.4f} < 0.02 "
                    f"({int(steady.sum())} samples); chain failure: {failure.status} "
                    f"at t={failure.time}")
    assert run.completed
    assert bound_ok
    assert steady.any() and tracking_error < 0.02
    assert failure.status in ("escape", "infeasible")
    assert failure.time is not None and math.isfinite(failure.time)


def test_criterion_10_filter_exactness(rng):
    grid = np.arange(-10.0, 10.0 + 1e-4, 1e-4)
    worst_gap = 0.0
    worst_margin = 0.0
    checked_active = 0
    for _ in range(1000):
        # draw so the constrained optimum provably lies inside the oracle
        # window: |u*| <= |u_nom| + (|a| + |b||u_nom|)/|b| <= 2 + 6/0.8 < 10
        a = float(rng.uniform(-2.0, 2.0))
        b = np.array([float(rng.uniform(0.8, 2.0)) * rng.choice([-1.0, 1.0])])
        u_nom = np.array([float(rng.uniform(-2.0, 2.0))])
        res = project_halfspace(a, b, u_nom)
        assert res.feasible
        candidates = grid[a + b[0] * grid >= 0.0]
        oracle = candidates[np.argmin(np.abs(candidates - u_nom[0]))]
        worst_gap = max(worst_gap, abs(res.u[0] - oracle))
        if res.active:
            checked_active += 1
            worst_margin = max(worst_margin, abs(res.margin))
    # degenerate directions: unsatisfied constraint with no input authority
    for _ in range(50):
        a = float(rng.uniform(-3.0, -0.1))
        assert not project_halfspace(a, np.zeros(2), rng.uniform(-2, 2, 2)).feasible
    ok = worst_gap <= 1e-3 and worst_margin <= 1e-9 and checked_active > 100
    announce(10, ok, f"max |closed-form - brute-force| = {worst_gap:.2e} <= 1e-3; "
                     f"max active margin residual = {worst_margin:.2e} <= 1e-9 "
                     f"({checked_active} active cases)")
    assert worst_gap <= 1e-3
    assert worst_margin <= 1e-9
    assert checked_active > 100
