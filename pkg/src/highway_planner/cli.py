"""Command-line front end.

Subcommands: gen (emit a seeded scenario document), plan (one planning cycle
at a chosen scene time), simulate (closed-loop run of one scenario), batch
(seeded scenario batches with optional worker processes), corridor-debug
(print the corridor cells the planner would see).

Exit codes: 0 on success, 1 when planning/simulation fails, 2 on bad input.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .core import (ARCHETYPES, PlannerConfig, Scenario, ScenarioError, VehicleState,
                   dump_scenario, generate_scenario, load_config, load_scenario)
from .corridor import CorridorEmpty, build_corridor
from .harness import (ExecutedPoint, SvPredictor, batch_fingerprint,
                      gap_keeping_provider, report_to_json, run_batch, run_scenario,
                      write_batch_csv, write_trajectory_csv)
from .planner import PlanStatus, plan_cycle
from .velocity import load_profile, positions_from_profile

__all__ = ["main"]


def _read(path: str) -> str:
    with open(path) as fh:
        return fh.read()


def _load_cfg(path: str | None) -> PlannerConfig:
    if path is None:
        return PlannerConfig()
    return load_config(_read(path))


def _view_at(scenario: Scenario, t: float, config: PlannerConfig,
             predictor: SvPredictor) -> Scenario:
    """Horizon view with the ego advanced straight down its lane to time t."""
    ev = scenario.ev
    ev_now = VehicleState(s=ev.s + ev.v * t, l=ev.l, v=ev.v, a=ev.a,
                          heading=ev.heading, width=ev.width, length=ev.length)
    return Scenario(
        road=scenario.road,
        ev=ev_now,
        svs=predictor.predict(scenario, t, config.n_steps, config.dt),
        dt=config.dt,
        duration=config.n_steps * config.dt,
    )


def _cmd_gen(args) -> int:
    scenario = generate_scenario(args.archetype, args.seed)
    text = dump_scenario(scenario)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def _cmd_plan(args) -> int:
    config = _load_cfg(args.config)
    scenario = load_scenario(_read(args.scenario))
    view = _view_at(scenario, args.t, config, SvPredictor(args.predictor))
    if args.profile:
        profile = load_profile(_read(args.profile), config.n_steps, config.dt,
                               config.v_max)
        provider = lambda _view, _cfg: profile  # noqa: E731
    else:
        provider = gap_keeping_provider
    outcome = plan_cycle(view, config, profile_provider=provider, mode=args.mode)

    if args.json:
        doc = {
            "status": outcome.status.value,
            "message": outcome.message,
            "corridor_steps": outcome.corridor.k if outcome.corridor else 0,
            "objective": outcome.solution.objective if outcome.solution else None,
            "timings_ms": outcome.timings,
            "trajectory": [[p.t, p.s, p.l] for p in outcome.trajectory or []],
        }
        print(json.dumps(doc, sort_keys=True, separators=(",", ":")))
    else:
        line = f"status={outcome.status.value}"
        if outcome.corridor is not None:
            line += f" corridor_steps={outcome.corridor.k}"
        if outcome.solution is not None:
            line += (f" objective={outcome.solution.objective:.6f}"
                     f" qp_iterations={outcome.solution.qp_iterations}")
        if outcome.message:
            line += f" message={outcome.message!r}"
        print(line)
    if args.trajectory and outcome.trajectory is not None:
        sol = outcome.solution
        rows = [ExecutedPoint(t=p.t, s=p.s, l=p.l,
                              heading=float(np.arctan(sol.slope[i])),
                              v=float(outcome.profile.v[i]))
                for i, p in enumerate(outcome.trajectory)]
        write_trajectory_csv(rows, args.trajectory)
    return 0 if outcome.status == PlanStatus.SOLVED else 1


def _cmd_simulate(args) -> int:
    config = _load_cfg(args.config)
    scenario = load_scenario(_read(args.scenario))
    report = run_scenario(scenario, config, mode=args.mode, predictor=args.predictor)
    print(f"success={report.success} cycles={report.cycle_count}"
          f" cycle_success={report.cycle_success_count}"
          f" violations={len(report.violations)} aborted={report.aborted}")
    if args.verbose:
        for c in report.cycles:
            print(f"  cycle={c.index} t={c.t:.2f} status={c.status}"
                  f" steps={c.corridor_steps} success={c.success}"
                  f" optimize_ms={c.optimize_ms:.2f}")
    if args.trajectory:
        write_trajectory_csv(report.executed, args.trajectory)
    if args.out:
        doc = {
            "success": report.success,
            "aborted": report.aborted,
            "violations": [[t, sid] for t, sid in report.violations],
            "cycles": [{
                "index": c.index, "t": c.t, "status": c.status,
                "corridor_steps": c.corridor_steps, "success": c.success,
                "adopted": c.adopted, "message": c.message,
            } for c in report.cycles],
            "residuals": {k: (v if v == v and abs(v) != float("inf") else None)
                          for k, v in sorted(report.residuals.items())},
        }
        with open(args.out, "w") as fh:
            fh.write(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")
    return 0 if report.success else 1


def _cmd_batch(args) -> int:
    config = _load_cfg(args.config)
    names = list(ARCHETYPES) if args.archetype == "all" else [args.archetype]
    scenarios = []
    ids = []
    for ai, name in enumerate(names):
        for i in range(args.count):
            scenarios.append(generate_scenario(name, args.seed + i))
            ids.append(ai * args.count + i)
    report = run_batch(scenarios, config, parallelism=args.workers, mode=args.mode,
                       predictor=args.predictor, scenario_ids=ids)
    print(f"scenarios={report.scenario_count} success={report.success_count}"
          f" rate={report.success_rate:.3f} cycles={report.cycle_count}"
          f" violations={report.violation_total}"
          f" cycle_mean_ms={report.runtime['cycle_mean_ms']:.2f}")
    if args.csv:
        write_batch_csv(report, args.csv)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(report_to_json(report) + "\n")
    if args.fingerprint:
        print(json.dumps(batch_fingerprint(report), sort_keys=True,
                         separators=(",", ":")))
    return 0 if report.success_count == report.scenario_count else 1


def _cmd_corridor_debug(args) -> int:
    config = _load_cfg(args.config)
    scenario = load_scenario(_read(args.scenario))
    view = _view_at(scenario, args.t, config, SvPredictor(args.predictor))
    profile = gap_keeping_provider(view, config)
    positions = positions_from_profile(profile)
    try:
        corridor = build_corridor(view, positions, profile, config)
    except CorridorEmpty as e:
        print(f"corridor empty: {e}")
        return 1
    print("step s_center cell_len l_lb l_ub")
    for cell in corridor.cells:
        print(f"{cell.step_index} {cell.s_center:.3f} {cell.cell_len:.3f}"
              f" {cell.l_lb:.3f} {cell.l_ub:.3f}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="highway-planner",
                                 description="Corridor-based highway path planner")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a seeded scenario document")
    p.add_argument("--archetype", required=True, choices=sorted(ARCHETYPES))
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("-o", "--out")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("plan", help="run one planning cycle at scene time t")
    p.add_argument("--scenario", required=True)
    p.add_argument("--config")
    p.add_argument("--profile", help="speed-per-line profile file")
    p.add_argument("--mode", choices=("bnb", "convex"), default="bnb")
    p.add_argument("--predictor", choices=SvPredictor.MODES, default="ground_truth")
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--trajectory", help="write the planned path as CSV")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("simulate", help="closed-loop run of one scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--config")
    p.add_argument("--mode", choices=("bnb", "convex"), default="bnb")
    p.add_argument("--predictor", choices=SvPredictor.MODES, default="ground_truth")
    p.add_argument("--trajectory", help="write the executed path as CSV")
    p.add_argument("-o", "--out", help="write a JSON run report")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("batch", help="run seeded scenario batches")
    p.add_argument("--archetype", choices=sorted(ARCHETYPES) + ["all"], default="all")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.add_argument("--mode", choices=("bnb", "convex"), default="bnb")
    p.add_argument("--predictor", choices=SvPredictor.MODES, default="ground_truth")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--csv", help="write per-scenario results as CSV")
    p.add_argument("-o", "--out", help="write the full JSON report")
    p.add_argument("--fingerprint", action="store_true",
                   help="print the timing-free outcome projection")
    p.set_defaults(func=_cmd_batch)

    p = sub.add_parser("corridor-debug", help="print corridor cells at scene time t")
    p.add_argument("--scenario", required=True)
    p.add_argument("--config")
    p.add_argument("--predictor", choices=SvPredictor.MODES, default="ground_truth")
    p.add_argument("--t", type=float, default=0.0)
    p.set_defaults(func=_cmd_corridor_debug)
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, ValueError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
