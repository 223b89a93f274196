"""Closed-loop simulation, trajectory recording, and level-set sampling.

Integration is classic fixed-step RK4 with the controller evaluated at every
stage state, which tracks the continuous-time filter semantics as closely as
a desk simulation allows.  The fixed step is deliberate: near input blow-up
an adaptive integrator stalls, whereas a fixed step plus explicit thresholds
turns "the solution stops existing" into a detected, time-stamped event.

Controllers are callables ``(t, x) -> FilterResult | array``; time is passed
so tracking controllers can follow a reference signal.  An infeasible filter
result or a threshold crossing terminates the trajectory with the matching
event instead of raising.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from joblib import Parallel, delayed

from .barriers import Barrier
from .errors import NonFiniteEvaluation
from .filtering import FilterResult
from .jets import as_real_vector, real

Controller = Callable[[float, np.ndarray], "FilterResult | np.ndarray"]

COMPLETED = "completed"
ESCAPE = "escape"
INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class Termination:
    """How a trajectory ended: completed the horizon, or an event at ``time``."""

    status: str
    time: float | None = None

    def __post_init__(self):
        if self.status not in (COMPLETED, ESCAPE, INFEASIBLE):
            raise ValueError(f"unknown termination status {self.status!r}")
        if self.status != COMPLETED and self.time is None:
            raise ValueError("event terminations carry their detection time")


@dataclass(frozen=True)
class SimConfig:
    """Fixed-step integration settings and event thresholds."""

    horizon: float
    dt: float = 1e-3
    integrator: str = "rk4"
    blowup_state: float = 1e6
    blowup_input: float = 1e6
    record_stride: int = 1

    def __post_init__(self):
        if not self.dt > 0.0 or not self.horizon > 0.0:
            raise ValueError("dt and horizon must be positive")
        if self.integrator != "rk4":
            raise ValueError(f"unsupported integrator {self.integrator!r}")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")


@dataclass
class Trajectory:
    """Time-indexed record of a closed-loop run.

    ``h_values``/``psi_values`` are NaN when no barrier was attached.
    ``max_input_norm`` tracks every controller evaluation, including RK4
    stage evaluations between recorded rows.
    """

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    h_values: np.ndarray
    psi_values: np.ndarray
    termination: Termination
    max_input_norm: float = 0.0

    def __post_init__(self):
        rows = self.times.shape[0]
        for name in ("states", "inputs", "h_values", "psi_values"):
            if getattr(self, name).shape[0] != rows:
                raise ValueError(f"{name} length does not match times")
        if rows > 1 and not np.all(np.diff(self.times) > 0.0):
            raise ValueError("times must be strictly increasing")

    @property
    def completed(self) -> bool:
        return self.termination.status == COMPLETED


def _as_result(out) -> tuple[np.ndarray, bool]:
    if isinstance(out, FilterResult):
        return out.u, out.feasible
    return np.asarray(out, dtype=float), True


class _EventStop(Exception):
    def __init__(self, termination: Termination):
        self.termination = termination


def integrate(system, controller: Controller, config: SimConfig, x0,
              barrier: Barrier | None = None) -> Trajectory:
    """Simulate ``xdot = f(x) + g(x) u`` under the controller from ``x0``.

    Events: a controller reporting infeasibility stops the run with an
    ``infeasible`` termination; non-finite states/inputs or norms beyond the
    configured thresholds stop it with ``escape``.  Both are recorded, never
    raised.
    """
    x = [float(v) for v in as_real_vector(x0, system.n)]
    n, m = system.n, system.m
    dt = config.dt
    steps = int(round(config.horizon / dt))
    times: list[float] = []
    states: list[list[float]] = []
    inputs: list[list[float]] = []
    max_input = 0.0

    # The inner loop runs on plain floats: at these dimensions (n <= 4) array
    # dispatch overhead dominates the arithmetic it would vectorize.

    def eval_controller(t: float, state: list[float]) -> list[float]:
        nonlocal max_input
        u, feasible = _as_result(controller(t, state))
        if not feasible:
            raise _EventStop(Termination(INFEASIBLE, t))
        u = [float(v) for v in u]
        norm_sq = sum(v * v for v in u)
        if not math.isfinite(norm_sq) or norm_sq >= config.blowup_input ** 2:
            max_input = math.inf if not math.isfinite(norm_sq) else \
                max(max_input, math.sqrt(norm_sq))
            raise _EventStop(Termination(ESCAPE, t))
        norm = math.sqrt(norm_sq)
        if norm > max_input:
            max_input = norm
        return u

    def derivative(t: float, state: list[float]) -> list[float]:
        u = eval_controller(t, state)
        f = system.f(state)
        g = system.g(state)
        return [float(f[i]) + sum(float(g[i][j]) * u[j] for j in range(m)) for i in range(n)]

    def record(t: float, state: list[float], u: list[float]) -> None:
        times.append(t)
        states.append(list(state))
        inputs.append([float(v) for v in u])

    termination = Termination(COMPLETED)
    try:
        for k in range(steps):
            t = k * dt
            u0 = eval_controller(t, x)
            if k % config.record_stride == 0:
                record(t, x, u0)
            f = system.f(x)
            g = system.g(x)
            k1 = [float(f[i]) + sum(float(g[i][j]) * u0[j] for j in range(m)) for i in range(n)]
            half = 0.5 * dt
            k2 = derivative(t + half, [x[i] + half * k1[i] for i in range(n)])
            k3 = derivative(t + half, [x[i] + half * k2[i] for i in range(n)])
            k4 = derivative(t + dt, [x[i] + dt * k3[i] for i in range(n)])
            sixth = dt / 6.0
            x = [x[i] + sixth * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]) for i in range(n)]
            norm_sq = sum(v * v for v in x)
            if not math.isfinite(norm_sq) or norm_sq >= config.blowup_state ** 2:
                raise _EventStop(Termination(ESCAPE, (k + 1) * dt))
        final_t = steps * dt
        u_final, feasible = _as_result(controller(final_t, x))
        record(final_t, x, [float(v) for v in u_final])
        if not feasible:
            termination = Termination(INFEASIBLE, final_t)
    except _EventStop as stop:
        termination = stop.termination
        if not times or times[-1] < stop.termination.time:
            # keep the state at the event so short runs still have a row
            record(stop.termination.time, x, inputs[-1] if inputs else [0.0] * m)

    times_arr = np.asarray(times)
    states_arr = np.vstack(states)
    inputs_arr = np.vstack(inputs)
    if barrier is not None:
        h_vals = np.array([float(real(barrier.value(s))) for s in states_arr])
        psi_vals = np.array([barrier.psi(s) for s in states_arr])
    else:
        h_vals = np.full(times_arr.shape, np.nan)
        psi_vals = np.full(times_arr.shape, np.nan)
    return Trajectory(
        times=times_arr, states=states_arr, inputs=inputs_arr,
        h_values=h_vals, psi_values=psi_vals,
        termination=termination, max_input_norm=max_input,
    )


def sweep(system, controller: Controller, config: SimConfig,
          initial_conditions: Sequence, barrier: Barrier | None = None,
          jobs: int = 1) -> list[Trajectory]:
    """Independent runs from each initial condition, in input order.

    ``jobs > 1`` fans trajectories out to worker processes; each trajectory
    stays single-threaded and results are merged back in order.
    """
    ics = [as_real_vector(x0, system.n) for x0 in initial_conditions]
    if jobs == 1 or len(ics) <= 1:
        return [integrate(system, controller, config, x0, barrier) for x0 in ics]
    return Parallel(n_jobs=jobs)(
        delayed(integrate)(system, controller, config, x0, barrier) for x0 in ics
    )


# ---------------------------------------------------------------------------
# Level-set grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Two varying state coordinates sampled over a rectangle.

    ``fixed_state`` supplies the remaining coordinates for systems with more
    than two states.
    """

    axes: tuple[int, int] = (0, 1)
    ranges: tuple[tuple[float, float], tuple[float, float]] = ((-1.5, 1.5), (-4.0, 4.0))
    resolution: tuple[int, int] = (201, 201)
    fixed_state: tuple[float, ...] = ()

    def axis_values(self) -> tuple[np.ndarray, np.ndarray]:
        (lo0, hi0), (lo1, hi1) = self.ranges
        return (np.linspace(lo0, hi0, self.resolution[0]),
                np.linspace(lo1, hi1, self.resolution[1]))

    @classmethod
    def from_config(cls, cfg: dict) -> "GridSpec":
        return cls(
            axes=tuple(cfg.get("axes", (0, 1))),
            ranges=tuple(tuple(r) for r in cfg["ranges"]),
            resolution=tuple(cfg.get("resolution", (201, 201))),
            fixed_state=tuple(cfg.get("fixed_state", ())),
        )

    def to_config(self) -> dict:
        return {
            "axes": list(self.axes),
            "ranges": [list(r) for r in self.ranges],
            "resolution": list(self.resolution),
            "fixed_state": list(self.fixed_state),
        }


@dataclass
class LevelSetGrid:
    """Barrier values sampled on a grid; cells that failed to evaluate are NaN."""

    spec: GridSpec
    values: np.ndarray

    def nonnegative_cells(self) -> int:
        return int(np.count_nonzero(self.values >= 0.0))


def levelset(barrier: Barrier, spec: GridSpec) -> LevelSetGrid:
    """Sample the barrier value on the grid; contouring is left to consumers."""
    n = barrier.system.n
    ax0, ax1 = spec.axis_values()
    base = np.zeros(n)
    if spec.fixed_state:
        base = as_real_vector(spec.fixed_state, n)
    values = np.empty((ax0.shape[0], ax1.shape[0]))
    state = base.copy()
    for i, v0 in enumerate(ax0):
        for j, v1 in enumerate(ax1):
            state[:] = base
            state[spec.axes[0]] = v0
            state[spec.axes[1]] = v1
            try:
                values[i, j] = float(real(barrier.value(state)))
            except (NonFiniteEvaluation, ZeroDivisionError, OverflowError):
                values[i, j] = np.nan
    return LevelSetGrid(spec=spec, values=values)


# ---------------------------------------------------------------------------
# Artifact serialization (deterministic: repr floats, no timestamps)
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trajectory_csv(trajectory: Trajectory, n: int, m: int, path: Path) -> None:
    """CSV rows ``t,x1..xn,u1..um,h,psi,event``; the final row carries the event."""
    header = (
        ["t"]
        + [f"x{i + 1}" for i in range(n)]
        + [f"u{j + 1}" for j in range(m)]
        + ["h", "psi", "event"]
    )
    lines = [",".join(header)]
    last = trajectory.times.shape[0] - 1
    for row in range(last + 1):
        cells = [_fmt(trajectory.times[row])]
        cells += [_fmt(v) for v in trajectory.states[row]]
        cells += [_fmt(v) for v in trajectory.inputs[row]]
        cells += [_fmt(trajectory.h_values[row]), _fmt(trajectory.psi_values[row])]
        cells.append(trajectory.termination.status if row == last else "")
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")


def write_grid_csv(grid: LevelSetGrid, path: Path) -> None:
    """Value matrix as CSV plus a sidecar JSON with the axis metadata."""
    lines = [",".join(_fmt(v) for v in row) for row in grid.values]
    path.write_text("\n".join(lines) + "\n")
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps(grid.spec.to_config(), indent=2, sort_keys=True) + "\n")


def trajectory_summary(trajectory: Trajectory) -> dict:
    """Event-log entry for one trajectory."""
    summary = {
        "termination": trajectory.termination.status,
        "event_time": trajectory.termination.time,
        "rows": int(trajectory.times.shape[0]),
        "max_input_norm": float(trajectory.max_input_norm),
        "x0": [float(v) for v in trajectory.states[0]],
    }
    if not np.all(np.isnan(trajectory.h_values)):
        summary["min_h"] = float(np.nanmin(trajectory.h_values))
        summary["min_psi"] = float(np.nanmin(trajectory.psi_values))
    return summary
