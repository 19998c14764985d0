"""Safety corridor search.

One lateral free-space cell per horizon step, anchored at the position the
ego body will occupy under the committed velocity profile. Cells are maximal
free intervals of the lateral scan line after subtracting margin-inflated
surrounding-vehicle extents; selection keeps step-to-step continuity by
interval overlap with the previous cell.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import PlannerConfig, Scenario, pose_at
from .geometry import exact_half_width
from .velocity import VelocityProfile

__all__ = [
    "Cell",
    "Corridor",
    "CorridorEmpty",
    "cell_length",
    "scan_free_segments",
    "filter_feasible",
    "interval_iou",
    "select_optimal",
    "build_corridor",
]

_CELL_LEN_SLACK = 0.4  # cells never shrink below body length plus this


class CorridorEmpty(RuntimeError):
    """No feasible cell at the first horizon step."""


@dataclass(frozen=True)
class Cell:
    step_index: int
    s_center: float
    cell_len: float
    l_lb: float
    l_ub: float

    def __post_init__(self):
        if self.cell_len <= 0.0:
            raise ValueError("cell_len must be positive")
        if not self.l_lb < self.l_ub:
            raise ValueError("cell lateral interval inverted")

    @property
    def width(self) -> float:
        return self.l_ub - self.l_lb

    @property
    def center(self) -> float:
        return 0.5 * (self.l_lb + self.l_ub)


@dataclass(frozen=True, eq=False)
class Corridor:
    k: int
    cells: tuple[Cell, ...]
    lb: np.ndarray
    ub: np.ndarray
    road_l_lb: float
    road_l_ub: float

    def __post_init__(self):
        if self.k != len(self.cells) or self.k < 1:
            raise ValueError("corridor must hold one cell per covered step")


def cell_length(v_i: float, config: PlannerConfig, body_length: float) -> float:
    """Speed-proportional cell length, floored so the body always fits."""
    if v_i <= 0.0:
        raise ValueError(f"speed must be positive, got {v_i}")
    return max(config.w_cell * v_i, body_length + _CELL_LEN_SLACK)


def scan_free_segments(s_center: float, cell_len: float, t_i: float,
                       scenario: Scenario, config: PlannerConfig,
                       step_index: int = 0) -> list[Cell]:
    """Maximal free lateral intervals at one scan position.

    A surrounding vehicle blocks the scan line when its margin-inflated
    longitudinal extent overlaps the cell window; the blocked lateral interval
    is its slope-dependent half-width (heading resolved exactly) plus margin.
    """
    half_window = 0.5 * cell_len
    blocked: list[tuple[float, float]] = []
    for sv in scenario.svs:
        s, l, heading, _ = pose_at(sv, t_i, scenario.dt)
        reach = 0.5 * sv.length + config.l_mar
        if abs(s - s_center) > half_window + reach:
            continue
        lat = exact_half_width(math.tan(heading), sv.width) + config.l_mar
        blocked.append((l - lat, l + lat))

    free: list[tuple[float, float]] = [(scenario.road.l_lb, scenario.road.l_ub)]
    for lo, hi in blocked:
        nxt = []
        for a, b in free:
            if hi <= a or lo >= b:
                nxt.append((a, b))
                continue
            if lo > a:
                nxt.append((a, lo))
            if hi < b:
                nxt.append((hi, b))
        free = nxt

    return [Cell(step_index=step_index, s_center=s_center, cell_len=cell_len,
                 l_lb=a, l_ub=b) for a, b in free if b - a > 1e-12]


def filter_feasible(cells: list[Cell], config: PlannerConfig, body_width: float) -> list[Cell]:
    """Keep cells wide enough for the body plus the buffer on both sides."""
    need = body_width + 2.0 * config.l_buf
    return [c for c in cells if c.width >= need]


def interval_iou(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Intersection-over-union of two proper intervals."""
    if a[0] >= a[1] or b[0] >= b[1]:
        raise ValueError("degenerate interval")
    inter = min(a[1], b[1]) - max(a[0], b[0])
    if inter <= 0.0:
        return 0.0
    union = (a[1] - a[0]) + (b[1] - b[0]) - inter
    return inter / union


def select_optimal(feasible: list[Cell], prev: Cell | None, ev_l: float) -> Cell:
    """Continuity-preserving pick among feasible cells.

    With a previous cell: maximize interval IoU, ties broken by nearest center,
    then lowest index. First step: the cell containing the ego offset, else the
    nearest center.
    """
    if not feasible:
        raise ValueError("no feasible cells to select from")
    if len(feasible) == 1:
        return feasible[0]
    if prev is None:
        for c in feasible:
            if c.l_lb <= ev_l <= c.l_ub:
                return c
        return min(feasible, key=lambda c: (abs(c.center - ev_l), c.l_lb))
    ious = [interval_iou((c.l_lb, c.l_ub), (prev.l_lb, prev.l_ub)) for c in feasible]
    best = max(ious)
    tied = [c for c, s in zip(feasible, ious) if s == best]
    return min(tied, key=lambda c: (abs(c.center - prev.center), c.l_lb))


def build_corridor(scenario: Scenario, positions: np.ndarray,
                   profile: VelocityProfile, config: PlannerConfig) -> Corridor:
    """Chain cell selection over the horizon, truncating at the first blocked step.

    positions are per-step advances relative to the ego (strictly increasing);
    scan times are step times relative to the scenario's own clock.
    """
    positions = np.asarray(positions, dtype=float)
    n = min(config.n_steps, positions.size, profile.n_steps)
    if n < 1:
        raise ValueError("empty horizon")
    if np.any(np.diff(np.concatenate([[0.0], positions[:n]])) <= 0.0):
        raise ValueError("positions must be strictly increasing")

    cells: list[Cell] = []
    prev: Cell | None = None
    for i in range(1, n + 1):
        s_abs = scenario.ev.s + positions[i - 1]
        clen = cell_length(profile.v[i - 1], config, scenario.ev.length)
        candidates = scan_free_segments(s_abs, clen, i * config.dt, scenario, config,
                                        step_index=i)
        feasible = filter_feasible(candidates, config, scenario.ev.width)
        if not feasible:
            break
        prev = select_optimal(feasible, prev, scenario.ev.l)
        cells.append(prev)

    if not cells:
        raise CorridorEmpty(
            f"no feasible cell at the first step (s={scenario.ev.s + positions[0]:.2f})")
    return Corridor(k=len(cells), cells=tuple(cells),
                    lb=np.array([c.l_lb for c in cells]),
                    ub=np.array([c.l_ub for c in cells]),
                    road_l_lb=scenario.road.l_lb, road_l_ub=scenario.road.l_ub)
