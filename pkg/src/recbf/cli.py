"""Command-line entry point.

Subcommands map onto the library surfaces::

    recbf simulate  --config run.json  [--out DIR] [--jobs N]
    recbf verify    --config checks.json [--out DIR]
    recbf levelset  --config grids.json  [--out DIR]
    recbf reproduce NAME [--out DIR] [--jobs N]

Exit codes: 0 success, 1 verification violations, 2 simulation safety events
(artifacts are still written), 64 usage errors.  The output root is, in
precedence order: ``--out``, the ``RECBF_OUT`` environment variable, the
config's ``out`` field, then ``./out``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import experiments, verify as verify_mod
from .barriers import barrier_spec_from_config, build_barrier
from .classk import classk_from_config
from .errors import RecbfError, UnknownExperiment
from .experiments import EXPERIMENT_NAMES, assemble, run, write_bundle
from .sim import GridSpec, levelset, write_grid_csv

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_SAFETY_EVENTS = 2
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    """argparse variant whose usage failures exit with code 64."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config(path: str) -> dict:
    return json.loads(Path(path).read_text())


def _out_dir(args, config: dict) -> Path:
    if args.out:
        return Path(args.out)
    env = os.environ.get("RECBF_OUT")
    if env:
        return Path(env)
    return Path(config.get("out", "out"))


def cmd_simulate(args) -> int:
    config = _load_config(args.config)
    setup = assemble(config)
    result = run(setup, jobs=args.jobs)
    bundle = write_bundle(result, _out_dir(args, config))
    events = result.events()
    completed = sum(t.completed for t in result.trajectories)
    print(f"{setup.name}: {completed}/{len(result.trajectories)} trajectories completed; "
          f"bundle at {bundle}")
    for entry in events["trajectories"]:
        if entry["termination"] != "completed":
            print(f"  event {entry['termination']} at t={entry['event_time']} "
                  f"from x0={entry['x0']}")
    return EXIT_SAFETY_EVENTS if result.any_event else EXIT_OK


_CHECK_BUILDERS = {}


def _register_check(name):
    def wrap(fn):
        _CHECK_BUILDERS[name] = fn
        return fn
    return wrap


@_register_check("relative_degree")
def _check_relative_degree(setup, cfg):
    return verify_mod.check_relative_degree(
        setup.system, setup.constraint,
        order=int(cfg.get("order", setup.constraint.relative_degree)),
        resolution=cfg.get("resolution"),
    )


@_register_check("degree_two")
def _check_degree_two(setup, cfg):
    return verify_mod.check_degree_two_validity(
        setup.system, setup.constraint,
        alpha=classk_from_config(cfg["alpha"]) if "alpha" in cfg
        else setup.filter_config.alpha,
        strict_margin=float(cfg.get("strict_margin", 0.0)),
        resolution=cfg.get("resolution"),
    )


@_register_check("mixed_input")
def _check_mixed_input(setup, cfg):
    return verify_mod.check_mixed_input_validity(
        setup.system, setup.constraint,
        alpha=classk_from_config(cfg["alpha"]) if "alpha" in cfg
        else setup.filter_config.alpha,
        resolution=cfg.get("resolution"),
    )


@_register_check("recursive")
def _check_recursive(setup, cfg):
    return verify_mod.check_recursive_validity(
        setup.system, setup.constraint, setup.barrier,
        resolution=cfg.get("resolution"),
    )


@_register_check("cbf_condition")
def _check_cbf_condition(setup, cfg):
    return verify_mod.check_cbf_condition(
        setup.barrier,
        alpha=classk_from_config(cfg["alpha"]) if "alpha" in cfg
        else setup.filter_config.alpha,
        resolution=cfg.get("resolution"),
        inflate=float(cfg.get("inflate", 0.1)),
        strict_margin=float(cfg.get("strict_margin", 0.0)),
    )


def cmd_verify(args) -> int:
    config = _load_config(args.config)
    setup = assemble(config)
    reports = []
    for check_cfg in config.get("checks", [{"name": "cbf_condition"}]):
        name = check_cfg["name"]
        try:
            builder = _CHECK_BUILDERS[name]
        except KeyError:
            print(f"unknown check {name!r}; available: {sorted(_CHECK_BUILDERS)}",
                  file=sys.stderr)
            return EXIT_USAGE
        reports.append(builder(setup, check_cfg))
    out = _out_dir(args, config)
    out.mkdir(parents=True, exist_ok=True)
    report_path = out / f"{setup.name}_verify.json"
    report_path.write_text(
        json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n"
    )
    all_passed = True
    for report in reports:
        status = "pass" if report.passed else f"FAIL ({len(report.violations)} violations)"
        print(f"{report.condition}: {status}")
        all_passed &= report.passed
    print(f"report written to {report_path}")
    return EXIT_OK if all_passed else EXIT_VIOLATIONS


def cmd_levelset(args) -> int:
    config = _load_config(args.config)
    setup = assemble(config)
    out = _out_dir(args, config) / setup.name / "grids"
    out.mkdir(parents=True, exist_ok=True)
    grid_cfg = config.get("grid", {"ranges": [[-1.5, 1.5], [-4.0, 4.0]]})
    spec = GridSpec.from_config(grid_cfg)
    barrier_cfgs = config.get("barriers")
    if barrier_cfgs:
        pairs = [
            (cfg.get("label", cfg["kind"]),
             build_barrier(barrier_spec_from_config(cfg, setup.constraint), setup.system))
            for cfg in barrier_cfgs
        ]
    else:
        pairs = [(setup.barrier.spec.kind, setup.barrier)]
    for label, barrier in pairs:
        grid = levelset(barrier, spec)
        write_grid_csv(grid, out / f"{label}.csv")
        print(f"{label}: {grid.nonnegative_cells()} nonnegative cells -> {out / (label + '.csv')}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    try:
        config = experiments.load_pinned_config(args.name)
    except UnknownExperiment as err:
        print(f"error: {err}", file=sys.stderr)
        print(f"usage: recbf reproduce {{{','.join(EXPERIMENT_NAMES)}}}", file=sys.stderr)
        return EXIT_USAGE
    setup = assemble(config)
    result = run(setup, jobs=args.jobs)
    bundle = write_bundle(result, _out_dir(args, config))
    print(f"{args.name}: bundle at {bundle}")
    for entry in result.events()["trajectories"]:
        status = entry["termination"]
        extra = "" if status == "completed" else f" at t={entry['event_time']}"
        print(f"  x0={entry['x0']}: {status}{extra}, max |u| = {entry['max_input_norm']:.4g}")
    return EXIT_SAFETY_EVENTS if result.any_event else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="recbf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a config's closed-loop sweep")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out", default=None)
    p_sim.add_argument("--jobs", type=int, default=None)
    p_sim.set_defaults(fn=cmd_simulate)

    p_verify = sub.add_parser("verify", help="run sampled certification checks")
    p_verify.add_argument("--config", required=True)
    p_verify.add_argument("--out", default=None)
    p_verify.set_defaults(fn=cmd_verify)

    p_level = sub.add_parser("levelset", help="export barrier level-set grids")
    p_level.add_argument("--config", required=True)
    p_level.add_argument("--out", default=None)
    p_level.set_defaults(fn=cmd_levelset)

    p_repro = sub.add_parser("reproduce", help="run a pinned reproduction experiment")
    p_repro.add_argument("name")
    p_repro.add_argument("--out", default=None)
    p_repro.add_argument("--jobs", type=int, default=None)
    p_repro.set_defaults(fn=cmd_reproduce)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except RecbfError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as err:
        print(f"error: {err!r}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
