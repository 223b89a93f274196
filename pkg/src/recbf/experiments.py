"""Config-driven experiment assembly and the pinned reproductions.

A run config (JSON) names a system, a barrier spec, a filter, a nominal
controller, simulation settings, initial conditions, and optional level-set
grids.  ``assemble`` turns one into live objects; ``run`` executes it and
``write_bundle`` lays the artifacts out as::

    <out>/<name>/
        trajectories/traj_###.csv
        grids/<label>.csv (+ .json sidecar)
        events.json
        config.json

The named reproductions ship as pinned configs inside the package, so
``run_experiment("...")`` is the deterministic regression entry point.
Figure-style choices the source material leaves open (initial conditions,
grid windows, nominal gains) live in those configs, not in code.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .barriers import Barrier, BarrierSpec, barrier_spec_from_config, build_barrier
from .classk import classk_from_config
from .errors import UnknownExperiment
from .filtering import FilterConfig, safety_filter
from .sim import (
    GridSpec,
    LevelSetGrid,
    SimConfig,
    Trajectory,
    levelset,
    sweep,
    trajectory_summary,
    write_grid_csv,
    write_trajectory_csv,
)
from .systems import (
    AIRCRAFT_AIRSPEED,
    AIRCRAFT_GRAVITY,
    ControlAffineSystem,
    ConstraintFn,
    builtin,
    system_from_config,
)

EXPERIMENT_NAMES = (
    "ex1_hocbf_failure",
    "ex2_recbf",
    "ex2_breeden",
    "ex3_backstepping",
    "ex3_rectified_backstepping",
    "aircraft_recbf",
    "aircraft_hocbf",
)


# ---------------------------------------------------------------------------
# Nominal controllers
# ---------------------------------------------------------------------------


def zero_nominal(m: int) -> Callable[[float, np.ndarray], np.ndarray]:
    u = np.zeros(m)
    return lambda t, x: u


def constant_nominal(u_const: Sequence[float]) -> Callable[[float, np.ndarray], np.ndarray]:
    u = np.asarray(u_const, dtype=float)
    return lambda t, x: u


def pitch_tracking_nominal(
    kp: float = 20.0,
    kd: float = 5.0,
    amplitude: float = 0.4,
    frequency: float = 0.5,
    rate_gain: float = AIRCRAFT_GRAVITY / AIRCRAFT_AIRSPEED,
    feedforward: bool = True,
) -> Callable[[float, np.ndarray], np.ndarray]:
    """PD tracking of a sinusoidal pitch reference for the aircraft model.

    With ``feedforward`` the command adds the trim and rate terms needed to
    hold the reference exactly in steady state (the bare PD law carries a
    gravity-trim bias of a few hundredths of a radian); without it the law is
    the bare PD on the pitch error.
    """

    def nominal(t: float, x) -> np.ndarray:
        theta, a_z = float(x[0]), float(x[1])
        theta_des = amplitude * math.sin(frequency * t)
        theta_des_rate = amplitude * frequency * math.cos(frequency * t)
        theta_rate = rate_gain * (a_z - math.cos(theta))
        u = kp * (theta_des - theta)
        if feedforward:
            u += math.cos(theta) + theta_des_rate / rate_gain
            u += kd * (theta_des_rate - theta_rate)
        else:
            u += kd * (-theta_rate)
        return np.array([u])

    return nominal


def pitch_reference(t, amplitude: float = 0.4, frequency: float = 0.5):
    """The reference signal the aircraft nominal controller tracks."""
    return amplitude * np.sin(frequency * np.asarray(t))


def nominal_from_config(cfg: dict, system: ControlAffineSystem):
    kind = cfg.get("kind", "zero")
    if kind == "zero":
        return zero_nominal(system.m)
    if kind == "constant":
        return constant_nominal(cfg["u"])
    if kind == "pitch_tracking":
        keys = ("kp", "kd", "amplitude", "frequency", "feedforward")
        return pitch_tracking_nominal(**{k: cfg[k] for k in keys if k in cfg})
    raise ValueError(f"unknown nominal controller kind {kind!r}")


def filtered_controller(barrier: Barrier, config: FilterConfig, nominal):
    """Controller closure: filter the nominal input at every query."""

    def controller(t: float, x):
        return safety_filter(barrier, config, x, nominal(t, x))

    return controller


# ---------------------------------------------------------------------------
# Config assembly
# ---------------------------------------------------------------------------


@dataclass
class RunSetup:
    """Live objects assembled from one run config."""

    name: str
    system: ControlAffineSystem
    constraint: ConstraintFn
    barrier: Barrier
    filter_config: FilterConfig
    controller: Callable
    sim_config: SimConfig
    initial_conditions: list[np.ndarray]
    grids: list[tuple[str, GridSpec, Barrier]]
    jobs: int
    config: dict


def resolve_system(cfg) -> tuple[ControlAffineSystem, ConstraintFn, BarrierSpec | None]:
    if isinstance(cfg, str):
        model = builtin(cfg)
        return model.system, model.constraint, model.barrier
    system, constraint = system_from_config(cfg)
    return system, constraint, None


def sample_initial_conditions(system: ControlAffineSystem, barrier: Barrier,
                              count: int, rng: np.random.Generator,
                              region: str = "safe") -> list[np.ndarray]:
    """Rejection-sample states from the box; ``safe`` keeps barrier.value >= 0."""
    out: list[np.ndarray] = []
    while len(out) < count:
        for state in system.sample_states(4 * count, rng):
            if region == "domain" or float(barrier.value(state)) >= 0.0:
                out.append(state)
                if len(out) == count:
                    break
    return out


def assemble(config: dict) -> RunSetup:
    system, constraint, default_spec = resolve_system(config["system"])
    if "barrier" in config:
        spec = barrier_spec_from_config(config["barrier"], constraint)
    elif default_spec is not None:
        spec = default_spec
    else:
        raise ValueError("config defines no barrier and the system has no default")
    barrier = build_barrier(spec, system)

    filter_cfg = config.get("filter", {})
    filter_config = FilterConfig(
        alpha=classk_from_config(filter_cfg["alpha"]) if "alpha" in filter_cfg
        else spec.outer_alpha,
        mode=filter_cfg.get("mode", "hocbf" if spec.kind == "hocbf" else "cbf"),
        zero_tolerance=float(filter_cfg.get("zero_tolerance", 1e-9)),
    )
    nominal = nominal_from_config(config.get("nominal", {"kind": "zero"}), system)
    controller = filtered_controller(barrier, filter_config, nominal)

    sim_cfg = config.get("sim", {})
    sim_config = SimConfig(
        horizon=float(sim_cfg.get("horizon", 10.0)),
        dt=float(sim_cfg.get("dt", 1e-3)),
        blowup_state=float(sim_cfg.get("blowup_state", 1e6)),
        blowup_input=float(sim_cfg.get("blowup_input", 1e6)),
        record_stride=int(sim_cfg.get("record_stride", 1)),
    )

    ics_cfg = config.get("initial_conditions", [])
    rng = np.random.default_rng(int(config.get("seed", 0)))
    if isinstance(ics_cfg, dict):
        initial_conditions = sample_initial_conditions(
            system, barrier, int(ics_cfg["count"]), rng,
            region=ics_cfg.get("region", "safe"),
        )
    else:
        initial_conditions = [np.asarray(x0, dtype=float) for x0 in ics_cfg]

    grids = []
    for grid_cfg in config.get("grids", []):
        label = grid_cfg.get("label", spec.kind)
        if "barrier" in grid_cfg:
            grid_barrier = build_barrier(
                barrier_spec_from_config(grid_cfg["barrier"], constraint), system
            )
        else:
            grid_barrier = barrier
        grids.append((label, GridSpec.from_config(grid_cfg), grid_barrier))

    return RunSetup(
        name=str(config.get("name", "run")),
        system=system,
        constraint=constraint,
        barrier=barrier,
        filter_config=filter_config,
        controller=controller,
        sim_config=sim_config,
        initial_conditions=initial_conditions,
        grids=grids,
        jobs=int(config.get("jobs", 1)),
        config=config,
    )


# ---------------------------------------------------------------------------
# Running and bundling
# ---------------------------------------------------------------------------


@dataclass
class ExperimentResult:
    name: str
    setup: RunSetup
    trajectories: list[Trajectory] = field(default_factory=list)
    grids: list[tuple[str, LevelSetGrid]] = field(default_factory=list)

    @property
    def any_event(self) -> bool:
        return any(not t.completed for t in self.trajectories)

    def events(self) -> dict:
        return {
            "experiment": self.name,
            "any_event": self.any_event,
            "trajectories": [trajectory_summary(t) for t in self.trajectories],
        }


def run(setup: RunSetup, jobs: int | None = None) -> ExperimentResult:
    result = ExperimentResult(name=setup.name, setup=setup)
    if setup.initial_conditions:
        result.trajectories = sweep(
            setup.system, setup.controller, setup.sim_config,
            setup.initial_conditions, barrier=setup.barrier,
            jobs=jobs or setup.jobs,
        )
    for label, grid_spec, grid_barrier in setup.grids:
        result.grids.append((label, levelset(grid_barrier, grid_spec)))
    return result


def write_bundle(result: ExperimentResult, out_dir: Path) -> Path:
    bundle = Path(out_dir) / result.name
    (bundle / "trajectories").mkdir(parents=True, exist_ok=True)
    system = result.setup.system
    for i, trajectory in enumerate(result.trajectories):
        write_trajectory_csv(
            trajectory, system.n, system.m, bundle / "trajectories" / f"traj_{i:03d}.csv"
        )
    if result.grids:
        (bundle / "grids").mkdir(exist_ok=True)
        for label, grid in result.grids:
            write_grid_csv(grid, bundle / "grids" / f"{label}.csv")
    (bundle / "events.json").write_text(
        json.dumps(result.events(), indent=2, sort_keys=True) + "\n"
    )
    (bundle / "config.json").write_text(
        json.dumps(result.setup.config, indent=2, sort_keys=True) + "\n"
    )
    return bundle


def load_pinned_config(name: str) -> dict:
    """Read one of the reproduction configs shipped inside the package."""
    if name not in EXPERIMENT_NAMES:
        raise UnknownExperiment(
            f"unknown experiment {name!r}; available: {list(EXPERIMENT_NAMES)}"
        )
    payload = resources.files("recbf.configs").joinpath(f"{name}.json").read_text()
    return json.loads(payload)


def run_experiment(name: str, out_dir: Path | str | None = None,
                   jobs: int | None = None) -> ExperimentResult:
    """Execute a pinned reproduction; optionally write its artifact bundle."""
    setup = assemble(load_pinned_config(name))
    result = run(setup, jobs=jobs)
    if out_dir is not None:
        write_bundle(result, Path(out_dir))
    return result
