"""Shared scenario builders for the test suite."""
from __future__ import annotations

import numpy as np
import pytest

from highway_planner.core import PlannerConfig, RoadModel, Scenario, SvTrack, VehicleState
from highway_planner.corridor import Cell, Corridor
from highway_planner.geometry import GeometryModel
from highway_planner.planner import InitialLateralState


def time_grid(duration: float, dt: float = 0.1) -> np.ndarray:
    return np.round(np.arange(round(duration / dt) + 1) * dt, 10)


def straight_road() -> RoadModel:
    return RoadModel(
        reference_line=np.array([[0.0, 0.0], [1500.0, 0.0]]),
        l_lb=-5.625, l_ub=5.625,
        lane_centers=(-3.75, 0.0, 3.75), lane_width=3.75,
    )


def cruise_sv(sv_id: str, s0: float, v: float, l: float, grid: np.ndarray,
              width: float = 1.8, length: float = 4.8) -> SvTrack:
    poses = np.column_stack([s0 + v * grid, np.full_like(grid, l),
                             np.zeros_like(grid), np.full_like(grid, v)])
    return SvTrack(id=sv_id, width=width, length=length, poses=poses)


@pytest.fixture
def open_road():
    """Scenario factory with no surrounding traffic."""
    def make(ev_v=30.0, duration=6.0, ev_l=0.0, heading=0.0):
        ev = VehicleState(s=80.0, l=ev_l, v=ev_v, a=0.0, heading=heading,
                          width=1.8, length=4.8)
        return Scenario(road=straight_road(), ev=ev, svs=(), dt=0.1, duration=duration)
    return make


@pytest.fixture
def wall_road():
    """Factory: a lateral wall of traffic `ahead` meters in front of the ego.
    By default it moves at the ego's speed so the gap never changes; wall_v=0
    parks it so the horizon runs into it."""
    def make(ahead=45.0, ev_v=30.0, duration=6.0, wall_v=None):
        grid = time_grid(duration)
        ev = VehicleState(s=80.0, l=0.0, v=ev_v, a=0.0, heading=0.0,
                          width=1.8, length=4.8)
        centers = np.arange(-4.4, 4.5, 2.2)
        v = ev_v if wall_v is None else wall_v
        svs = tuple(cruise_sv(f"wall{i}", ev.s + ahead, v, float(c), grid)
                    for i, c in enumerate(centers))
        return Scenario(road=straight_road(), ev=ev, svs=svs, dt=0.1, duration=duration)
    return make


def synthetic_corridor(rng: np.random.Generator, k: int, v: float = 15.0):
    """Random corridor instance for direct solver tests.

    Cells track a shallow random-walk center line so most draws admit a
    smooth path; occasional infeasible draws are legal and callers compare
    verdicts rather than assume solvability.
    """
    road = straight_road()
    config = PlannerConfig()
    geometry = GeometryModel.from_dims(1.8, 4.8, lam=config.lam,
                                       phi_max=config.heading_max)
    ds = v * config.dt
    cell_len = config.w_cell * v
    centers = np.empty(k)
    centers[0] = rng.uniform(-1.5, 1.5)
    for i in range(1, k):
        centers[i] = np.clip(centers[i - 1] + rng.uniform(-0.25, 0.25), -2.5, 2.5)
    widths = rng.uniform(4.6, 6.5, size=k)
    lo = np.maximum(centers - 0.5 * widths, road.l_lb)
    hi = np.minimum(centers + 0.5 * widths, road.l_ub)
    positions = ds * np.arange(1, k + 1)
    cells = tuple(Cell(step_index=i + 1, s_center=float(positions[i]),
                       cell_len=cell_len, l_lb=float(lo[i]), l_ub=float(hi[i]))
                  for i in range(k))
    corridor = Corridor(k=k, cells=cells, lb=lo.copy(), ub=hi.copy(),
                        road_l_lb=road.l_lb, road_l_ub=road.l_ub)
    init = InitialLateralState(l=float(centers[0] + rng.uniform(-0.2, 0.2)),
                               slope=float(rng.uniform(-0.15, 0.15)),
                               curv=float(rng.uniform(-0.3, 0.3)))
    l_ref = rng.uniform(-2.0, 2.0, size=k)
    return corridor, positions, init, l_ref, config, geometry
