"""Closed-loop replanning harness and batch evaluation.

Replans every dt_replan seconds of scene time against a predicted horizon view,
executes the freshest plan between cycles, and falls back to the remainder of
the previous plan when a cycle fails. A run is checked afterwards against
ground truth with an exact rectangle-overlap test, and (optionally) every
solved cycle is re-audited against the constraints it claimed to satisfy.
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from statistics import median
import time

import numpy as np

from .core import PlannerConfig, Scenario, SvTrack, VehicleState, pose_at
from .geometry import GeometryModel, Obb, footprint_bounds, obb_intersect
from .planner import (InitialLateralState, PlanOutcome, PlanStatus, plan_cycle,
                      propagate_kinematics)
from .velocity import gap_keeping_profile, positions_from_profile

__all__ = [
    "SvPredictor",
    "ExecutedPoint",
    "CycleRecord",
    "ScenarioReport",
    "ScenarioSummary",
    "BatchReport",
    "gap_keeping_provider",
    "run_scenario",
    "verify_collision_free",
    "solution_residuals",
    "run_batch",
    "batch_fingerprint",
    "write_batch_csv",
    "write_trajectory_csv",
    "report_to_json",
]

_RESIDUAL_KEYS = ("containment", "kinematic", "road", "bounds")


class SvPredictor:
    """Builds per-cycle predicted tracks for the surrounding vehicles.

    ground_truth replays the recorded future; constant_velocity rolls the pose
    at the cycle start forward along its own heading. Predicted offsets are
    clipped into the road, so a vehicle leaving the pavement stops claiming
    corridor space it no longer occupies.
    """

    MODES = ("ground_truth", "constant_velocity")

    def __init__(self, mode: str = "ground_truth"):
        if mode not in self.MODES:
            raise ValueError(f"predictor mode must be one of {self.MODES}, got {mode!r}")
        self.mode = mode

    def predict(self, scenario: Scenario, t0: float, n_steps: int, dt: float) -> tuple[SvTrack, ...]:
        out = []
        for sv in scenario.svs:
            if self.mode == "ground_truth":
                rows = np.stack([pose_at(sv, t0 + i * dt, scenario.dt)
                                 for i in range(n_steps + 1)])
            else:
                p0 = pose_at(sv, t0, scenario.dt)
                i = np.arange(n_steps + 1)[:, None]
                step = np.array([p0[3] * np.cos(p0[2]), p0[3] * np.sin(p0[2]), 0.0, 0.0])
                rows = p0[None, :] + i * step * dt
            rows[:, 1] = np.clip(rows[:, 1], scenario.road.l_lb, scenario.road.l_ub)
            out.append(SvTrack(id=sv.id, width=sv.width, length=sv.length, poses=rows))
        return tuple(out)


def gap_keeping_provider(view: Scenario, config: PlannerConfig):
    """Default longitudinal layer: follow the nearest same-lane vehicle ahead."""
    lead = None
    best = np.inf
    half_lane = 0.5 * view.road.lane_width
    for sv in view.svs:
        s0, l0 = sv.poses[0, 0], sv.poses[0, 1]
        if s0 > view.ev.s and abs(l0 - view.ev.l) < half_lane and s0 - view.ev.s < best:
            best = s0 - view.ev.s
            lead = sv
    return gap_keeping_profile(view.ev, lead, config.n_steps, config.dt, config.v_max)


@dataclass(frozen=True)
class ExecutedPoint:
    t: float
    s: float
    l: float
    heading: float
    v: float


@dataclass(frozen=True)
class CycleRecord:
    index: int
    t: float
    status: str
    corridor_steps: int
    success: bool
    adopted: bool
    optimize_ms: float
    cycle_ms: float
    message: str = ""


@dataclass(frozen=True)
class _PlanStep:
    s: float
    l: float
    heading: float
    v: float
    curv: float


@dataclass(frozen=True, eq=False)
class ScenarioReport:
    scenario_id: int
    success: bool
    aborted: bool
    cycles: tuple[CycleRecord, ...]
    executed: tuple[ExecutedPoint, ...]
    violations: tuple[tuple[float, str], ...]
    residuals: dict[str, float]

    @property
    def cycle_count(self) -> int:
        return len(self.cycles)

    @property
    def cycle_success_count(self) -> int:
        return sum(c.success for c in self.cycles)

    def summary(self) -> "ScenarioSummary":
        cyc = [c.cycle_ms for c in self.cycles]
        opt = [c.optimize_ms for c in self.cycles]
        return ScenarioSummary(
            scenario_id=self.scenario_id,
            success=self.success,
            aborted=self.aborted,
            cycles=self.cycle_count,
            cycle_success=self.cycle_success_count,
            violations=len(self.violations),
            mean_ms=float(np.mean(cyc)) if cyc else 0.0,
            median_ms=float(median(cyc)) if cyc else 0.0,
            p95_ms=float(np.percentile(cyc, 95)) if cyc else 0.0,
            optimize_mean_ms=float(np.mean(opt)) if opt else 0.0,
            residuals=dict(self.residuals),
        )


@dataclass(frozen=True)
class ScenarioSummary:
    scenario_id: int
    success: bool
    aborted: bool
    cycles: int
    cycle_success: int
    violations: int
    mean_ms: float
    median_ms: float
    p95_ms: float
    optimize_mean_ms: float
    residuals: dict[str, float]


@dataclass(frozen=True, eq=False)
class BatchReport:
    summaries: tuple[ScenarioSummary, ...]
    residuals: dict[str, float]
    runtime: dict[str, float]

    @property
    def scenario_count(self) -> int:
        return len(self.summaries)

    @property
    def success_count(self) -> int:
        return sum(s.success for s in self.summaries)

    @property
    def success_rate(self) -> float:
        return self.success_count / self.scenario_count if self.summaries else 0.0

    @property
    def cycle_count(self) -> int:
        return sum(s.cycles for s in self.summaries)

    @property
    def cycle_success_count(self) -> int:
        return sum(s.cycle_success for s in self.summaries)

    @property
    def violation_total(self) -> int:
        return sum(s.violations for s in self.summaries)


def solution_residuals(outcome: PlanOutcome, view: Scenario,
                       config: PlannerConfig) -> dict[str, float]:
    """Re-audit a solved cycle: worst signed violation per constraint family
    (non-positive means satisfied)."""
    sol, corr = outcome.solution, outcome.corridor
    if sol is None or corr is None or outcome.init is None:
        raise ValueError("solution_residuals needs a solved outcome")
    geometry = GeometryModel.from_dims(view.ev.width, view.ev.length,
                                       lam=config.lam, phi_max=config.heading_max)

    cont = -np.inf
    for i, cell in enumerate(corr.cells):
        fp_ub, fp_lb = footprint_bounds(sol.l[i], sol.slope[i], cell.cell_len, geometry)
        cont = max(cont,
                   float((fp_ub - (cell.l_ub - config.l_mar)).max()),
                   float(((cell.l_lb + config.l_mar) - fp_lb).max()))

    positions = positions_from_profile(outcome.profile)[:corr.k]
    ds = np.diff(np.concatenate([[0.0], positions]))
    init = outcome.init
    prev_l = np.concatenate([[init.l], sol.l[:-1]])
    prev_s = np.concatenate([[init.slope], sol.slope[:-1]])
    prev_c = np.concatenate([[init.curv], sol.curv[:-1]])
    row1 = sol.curv - ds * sol.jerk - prev_c
    row2 = sol.slope - ds * sol.curv - 0.5 * ds ** 2 * sol.jerk - prev_s
    row3 = sol.l - ds * sol.slope - 0.5 * ds ** 2 * sol.curv - ds ** 3 / 6.0 * sol.jerk - prev_l
    pl, ps, pc = propagate_kinematics(init, sol.jerk, ds)
    kin = max(float(np.abs(row1).max()), float(np.abs(row2).max()),
              float(np.abs(row3).max()), float(np.abs(sol.l - pl).max()),
              float(np.abs(sol.slope - ps).max()), float(np.abs(sol.curv - pc).max()))

    road = max(float((sol.l - corr.road_l_ub).max()),
               float((corr.road_l_lb - sol.l).max()))

    bounds = max(
        float((sol.slope - config.slope_max).max()),
        float((config.slope_min - sol.slope).max()),
        float((sol.curv - config.curv_max).max()),
        float((config.curv_min - sol.curv).max()),
        float((sol.jerk - config.jerk_max).max()),
        float((config.jerk_min - sol.jerk).max()),
    )
    return {"containment": cont, "kinematic": kin, "road": road, "bounds": bounds}


def verify_collision_free(executed, scenario: Scenario) -> list[tuple[float, str]]:
    """Exact rectangle-overlap audit of an executed run against the recorded
    tracks; boundary contact does not count as overlap."""
    hits = []
    he_l = 0.5 * scenario.ev.length
    he_w = 0.5 * scenario.ev.width
    for p in executed:
        ev_box = Obb(p.s, p.l, p.heading, he_l, he_w)
        for sv in scenario.svs:
            s, l, heading, _ = pose_at(sv, p.t, scenario.dt)
            sv_box = Obb(s, l, heading, 0.5 * sv.length, 0.5 * sv.width)
            if obb_intersect(ev_box, sv_box):
                hits.append((p.t, sv.id))
    return hits


def _merge_peaks(acc: dict, new: dict) -> None:
    for k in _RESIDUAL_KEYS:
        acc[k] = max(acc.get(k, -np.inf), new[k])


def run_scenario(scenario: Scenario, config: PlannerConfig, mode: str = "bnb",
                 predictor: str | SvPredictor = "ground_truth",
                 profile_provider=None, scenario_id: int = 0) -> ScenarioReport:
    """Simulate the full scene duration with closed-loop replanning."""
    r = round(config.dt_replan / config.dt)
    if r < 1 or abs(r * config.dt - config.dt_replan) > 1e-9:
        raise ValueError("dt_replan must be a positive multiple of dt")
    n_cycles = round(scenario.duration / config.dt_replan)
    if n_cycles < 1 or abs(n_cycles * config.dt_replan - scenario.duration) > 1e-6:
        raise ValueError("duration must be a positive multiple of dt_replan")
    if predictor is None or isinstance(predictor, str):
        predictor = SvPredictor(predictor or "ground_truth")
    provider = profile_provider if profile_provider is not None else gap_keeping_provider

    ev = scenario.ev
    executed = [ExecutedPoint(0.0, ev.s, ev.l, ev.heading, ev.v)]
    pending: list[_PlanStep] = []
    pend_i = 0
    init_curv = 0.0
    ref_hint: float | None = None
    warm = None
    cycles: list[CycleRecord] = []
    peaks: dict[str, float] = {}
    aborted = False

    for c in range(n_cycles):
        t_cycle = time.perf_counter()
        t0 = round(c * config.dt_replan, 10)
        view = Scenario(
            road=scenario.road,
            ev=ev,
            svs=predictor.predict(scenario, t0, config.n_steps, config.dt),
            dt=config.dt,
            duration=config.n_steps * config.dt,
        )
        outcome = plan_cycle(view, config, profile_provider=provider, mode=mode,
                             ref_hint=ref_hint, init_curv=init_curv, warm=warm)
        adopted = outcome.status == PlanStatus.SOLVED
        if adopted:
            warm = outcome.solution
            sol = outcome.solution
            positions = positions_from_profile(outcome.profile)
            pending = [
                _PlanStep(s=ev.s + float(positions[i]), l=float(sol.l[i]),
                          heading=float(np.arctan(sol.slope[i])),
                          v=float(outcome.profile.v[i]), curv=float(sol.curv[i]))
                for i in range(sol.steps)
            ]
            pend_i = 0
            ref_hint = outcome.ref_last
        success = adopted and outcome.corridor.k >= config.k_min_steps
        if adopted and config.check_solutions:
            _merge_peaks(peaks, solution_residuals(outcome, view, config))
        cycle_ms = (time.perf_counter() - t_cycle) * 1e3
        cycles.append(CycleRecord(
            index=c, t=t0, status=outcome.status.value,
            corridor_steps=outcome.corridor.k if outcome.corridor is not None else 0,
            success=success, adopted=adopted,
            optimize_ms=outcome.timings.get("optimize_ms", 0.0),
            cycle_ms=cycle_ms, message=outcome.message,
        ))

        for step in range(r):
            if pend_i >= len(pending):
                aborted = True
                break
            p = pending[pend_i]
            pend_i += 1
            t = round(t0 + (step + 1) * config.dt, 10)
            ev = VehicleState(s=p.s, l=p.l, v=p.v, a=(p.v - ev.v) / config.dt,
                              heading=p.heading, width=ev.width, length=ev.length)
            init_curv = p.curv
            executed.append(ExecutedPoint(t, p.s, p.l, p.heading, p.v))
        if aborted:
            break

    violations = verify_collision_free(executed, scenario)
    success = (not aborted and not violations
               and all(cr.success for cr in cycles) and len(cycles) == n_cycles)
    if not peaks:
        peaks = {k: -np.inf for k in _RESIDUAL_KEYS}
    return ScenarioReport(
        scenario_id=scenario_id, success=success, aborted=aborted,
        cycles=tuple(cycles), executed=tuple(executed),
        violations=tuple(violations), residuals=peaks,
    )


def _run_one(args) -> ScenarioSummary:
    scenario_id, scenario, config, mode, predictor_mode = args
    report = run_scenario(scenario, config, mode=mode, predictor=predictor_mode,
                          scenario_id=scenario_id)
    return report.summary()


def run_batch(scenarios, config: PlannerConfig, parallelism: int = 1,
              mode: str = "bnb", predictor: str = "ground_truth",
              scenario_ids=None) -> BatchReport:
    """Run a list of scenarios, serially or across worker processes; results
    are ordered and identical (runtimes aside) either way."""
    if scenario_ids is None:
        scenario_ids = range(len(scenarios))
    jobs = [(sid, sc, config, mode, predictor)
            for sid, sc in zip(scenario_ids, scenarios)]
    if parallelism <= 1:
        summaries = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            summaries = list(pool.map(_run_one, jobs, chunksize=1))

    peaks: dict[str, float] = {}
    for s in summaries:
        _merge_peaks(peaks, s.residuals)
    weights = [s.cycles for s in summaries]
    if summaries and sum(weights) > 0:
        runtime = {
            "cycle_mean_ms": float(np.average([s.mean_ms for s in summaries],
                                              weights=weights)),
            "optimize_mean_ms": float(np.average([s.optimize_mean_ms for s in summaries],
                                                 weights=weights)),
            "worst_p95_ms": float(max(s.p95_ms for s in summaries)),
        }
    else:
        runtime = {"cycle_mean_ms": 0.0, "optimize_mean_ms": 0.0, "worst_p95_ms": 0.0}
    return BatchReport(summaries=tuple(summaries), residuals=peaks, runtime=runtime)


def batch_fingerprint(report: BatchReport) -> dict:
    """Timing-free projection of a batch outcome; equal across worker counts."""
    return {
        "scenarios": [[s.scenario_id, int(s.success), s.cycles, s.cycle_success,
                       s.violations, int(s.aborted)] for s in report.summaries],
        "success_count": report.success_count,
        "cycle_count": report.cycle_count,
        "cycle_success_count": report.cycle_success_count,
        "violation_total": report.violation_total,
    }


def write_batch_csv(report: BatchReport, path: str) -> None:
    lines = ["scenario_id,success,cycles,cycle_success,mean_ms,median_ms,p95_ms"]
    for s in report.summaries:
        lines.append("%d,%d,%d,%d,%.6f,%.6f,%.6f"
                     % (s.scenario_id, int(s.success), s.cycles, s.cycle_success,
                        s.mean_ms, s.median_ms, s.p95_ms))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_trajectory_csv(points, path: str) -> None:
    lines = ["t,s,l,heading,v"]
    for p in points:
        lines.append("%.6f,%.6f,%.6f,%.6f,%.6f" % (p.t, p.s, p.l, p.heading, p.v))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _summary_dict(s: ScenarioSummary) -> dict:
    return {
        "scenario_id": s.scenario_id,
        "success": bool(s.success),
        "aborted": bool(s.aborted),
        "cycles": s.cycles,
        "cycle_success": s.cycle_success,
        "violations": s.violations,
        "mean_ms": s.mean_ms,
        "median_ms": s.median_ms,
        "p95_ms": s.p95_ms,
        "optimize_mean_ms": s.optimize_mean_ms,
        "residuals": {k: (None if not np.isfinite(v) else v)
                      for k, v in sorted(s.residuals.items())},
    }


def report_to_json(report: BatchReport) -> str:
    doc = {
        "fingerprint": batch_fingerprint(report),
        "success_rate": report.success_rate,
        "runtime": report.runtime,
        "residuals": {k: (None if not np.isfinite(v) else v)
                      for k, v in sorted(report.residuals.items())},
        "scenarios": [_summary_dict(s) for s in report.summaries],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))
