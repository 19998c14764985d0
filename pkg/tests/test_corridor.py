import math

import numpy as np
import pytest

from highway_planner.core import PlannerConfig, Scenario, VehicleState, generate_scenario
from highway_planner.corridor import (
    Cell,
    CorridorEmpty,
    build_corridor,
    cell_length,
    filter_feasible,
    interval_iou,
    scan_free_segments,
    select_optimal,
)
from highway_planner.velocity import constant_profile, positions_from_profile

from conftest import cruise_sv, straight_road, time_grid


def _cell(lb, ub, idx=0):
    return Cell(step_index=idx, s_center=100.0, cell_len=15.0, l_lb=lb, l_ub=ub)


def _scene(svs, ev_v=30.0, duration=6.0):
    ev = VehicleState(s=80.0, l=0.0, v=ev_v, a=0.0, heading=0.0, width=1.8, length=4.8)
    return Scenario(road=straight_road(), ev=ev, svs=tuple(svs), dt=0.1, duration=duration)


def test_cell_length_speed_proportional_with_floor():
    cfg = PlannerConfig()
    assert cell_length(30.0, cfg, 4.8) == pytest.approx(15.0)  # w_cell * v
    assert cell_length(1.0, cfg, 4.8) == pytest.approx(5.2)    # body + slack floor
    assert cell_length(10.4, cfg, 4.8) == pytest.approx(5.2)
    with pytest.raises(ValueError):
        cell_length(0.0, cfg, 4.8)


def test_cell_validation_and_props():
    c = _cell(-1.0, 3.0)
    assert c.width == 4.0 and c.center == 1.0
    with pytest.raises(ValueError):
        _cell(2.0, 2.0)
    with pytest.raises(ValueError):
        Cell(step_index=0, s_center=0.0, cell_len=0.0, l_lb=0.0, l_ub=1.0)


def test_interval_iou():
    assert interval_iou((0, 1), (2, 3)) == 0.0
    assert interval_iou((0, 2), (1, 3)) == pytest.approx(1.0 / 3.0)
    assert interval_iou((0, 4), (1, 2)) == pytest.approx(0.25)
    assert interval_iou((0, 1), (0, 1)) == 1.0
    assert interval_iou((0, 1), (1, 2)) == 0.0  # touching
    with pytest.raises(ValueError):
        interval_iou((1, 1), (0, 2))


def test_scan_empty_road_is_one_full_cell():
    sc = _scene([])
    cfg = PlannerConfig()
    cells = scan_free_segments(100.0, 15.0, 0.5, sc, cfg, step_index=3)
    assert len(cells) == 1
    c = cells[0]
    assert (c.l_lb, c.l_ub) == (-5.625, 5.625)
    assert c.step_index == 3 and c.s_center == 100.0 and c.cell_len == 15.0


def test_scan_blocks_margin_inflated_vehicle():
    grid = time_grid(6.0)
    sc = _scene([cruise_sv("a", s0=100.0, v=30.0, l=0.0, grid=grid)])
    cfg = PlannerConfig()
    cells = scan_free_segments(100.0, 15.0, 0.0, sc, cfg)
    # zero heading: blocked interval is +-(width/2 + l_mar) = +-1.2 around l=0
    assert len(cells) == 2
    assert cells[0].l_lb == -5.625 and cells[0].l_ub == pytest.approx(-1.2)
    assert cells[1].l_lb == pytest.approx(1.2) and cells[1].l_ub == 5.625


def test_scan_ignores_vehicles_outside_window():
    grid = time_grid(6.0)
    # reach = half body length + margin = 2.7; half window 7.5 -> cut at 10.2
    near = _scene([cruise_sv("a", s0=110.0, v=30.0, l=0.0, grid=grid)])
    far = _scene([cruise_sv("a", s0=110.4, v=30.0, l=0.0, grid=grid)])
    cfg = PlannerConfig()
    assert len(scan_free_segments(100.0, 15.0, 0.0, near, cfg)) == 2
    assert len(scan_free_segments(100.0, 15.0, 0.0, far, cfg)) == 1


def test_scan_heading_widens_block():
    grid = time_grid(6.0)
    poses = np.column_stack([np.full_like(grid, 100.0), np.zeros_like(grid),
                             np.full_like(grid, math.pi / 4.0), np.full_like(grid, 30.0)])
    from highway_planner.core import SvTrack
    sc = _scene([SvTrack(id="a", width=1.8, length=4.8, poses=poses)])
    cells = scan_free_segments(100.0, 15.0, 0.0, sc, PlannerConfig())
    # tan(45deg) = 1 -> half width 0.9*sqrt(2), plus margin
    want = 0.9 * math.sqrt(2.0) + 0.3
    assert cells[0].l_ub == pytest.approx(-want)
    assert cells[1].l_lb == pytest.approx(want)


def test_scan_full_blockage():
    grid = time_grid(6.0)
    svs = [cruise_sv(f"w{i}", s0=100.0, v=30.0, l=float(c), grid=grid)
           for i, c in enumerate(np.arange(-4.4, 4.5, 2.2))]
    cells = scan_free_segments(100.0, 15.0, 0.0, _scene(svs), PlannerConfig())
    # slivers thinner than any feasible width may survive the scan, none wide
    assert all(c.width < 0.1 for c in cells)


def test_filter_feasible_needs_body_plus_buffers():
    cfg = PlannerConfig()  # need = 1.8 + 2*0.5 = 2.8
    wide = _cell(0.0, 2.81)
    tight = _cell(0.0, 2.79)
    assert filter_feasible([wide, tight], cfg, 1.8) == [wide]


def test_select_optimal_first_step():
    a, b = _cell(-5.0, -1.0), _cell(1.0, 5.0)
    # containing cell wins
    assert select_optimal([a, b], None, ev_l=-2.0) is a
    # otherwise nearest center
    assert select_optimal([a, b], None, ev_l=0.4) is b
    assert select_optimal([a], None, ev_l=4.0) is a
    with pytest.raises(ValueError):
        select_optimal([], None, 0.0)


def test_select_optimal_tracks_previous_cell():
    prev = _cell(-1.0, 3.0)
    high_iou = _cell(-0.5, 3.0)
    low_iou = _cell(2.5, 5.5)
    assert select_optimal([low_iou, high_iou], prev, ev_l=99.0) is high_iou
    # IoU tie (both disjoint from prev): nearest center to prev center wins
    left, right = _cell(-5.5, -4.0), _cell(4.2, 5.6)
    assert select_optimal([left, right], _cell(3.0, 3.5), 0.0) is right


def test_build_corridor_nominal():
    sc = generate_scenario("cut_in_slow_front", seed=0)
    cfg = PlannerConfig()
    profile = constant_profile(sc.ev.v, cfg.n_steps, cfg.dt)
    positions = positions_from_profile(profile)
    cor = build_corridor(sc, positions, profile, cfg)
    assert cor.k == cfg.n_steps
    assert len(cor.cells) == cor.k
    np.testing.assert_array_equal(cor.lb, [c.l_lb for c in cor.cells])
    np.testing.assert_array_equal(cor.ub, [c.l_ub for c in cor.cells])
    assert np.all(cor.lb >= sc.road.l_lb - 1e-12)
    assert np.all(cor.ub <= sc.road.l_ub + 1e-12)
    assert np.all(cor.ub - cor.lb >= 2.8 - 1e-12)
    assert (cor.road_l_lb, cor.road_l_ub) == (sc.road.l_lb, sc.road.l_ub)
    assert [c.step_index for c in cor.cells] == list(range(1, cor.k + 1))


def test_build_corridor_truncates_at_blocked_step(wall_road):
    sc = wall_road(ahead=45.0, wall_v=0.0)
    cfg = PlannerConfig()
    profile = constant_profile(sc.ev.v, cfg.n_steps, cfg.dt)
    positions = positions_from_profile(profile)
    cor = build_corridor(sc, positions, profile, cfg)
    # parked wall 45m out: scan windows reach it once 3*i > 45 - 10.2
    assert 1 <= cor.k < cfg.n_steps
    assert cor.k == 11


def test_build_corridor_empty(wall_road):
    sc = wall_road(ahead=8.0)
    cfg = PlannerConfig()
    profile = constant_profile(sc.ev.v, cfg.n_steps, cfg.dt)
    with pytest.raises(CorridorEmpty, match="first step"):
        build_corridor(sc, positions_from_profile(profile), profile, cfg)


def test_build_corridor_input_validation():
    sc = generate_scenario("cut_in_slow_front", seed=0)
    cfg = PlannerConfig()
    profile = constant_profile(sc.ev.v, cfg.n_steps, cfg.dt)
    with pytest.raises(ValueError, match="strictly increasing"):
        build_corridor(sc, np.array([3.0, 2.0, 6.0]), profile, cfg)
    with pytest.raises(ValueError, match="empty horizon"):
        build_corridor(sc, np.array([]), profile, cfg)


def test_build_corridor_truncated_by_profile_length():
    sc = generate_scenario("cut_in_slow_front", seed=0)
    cfg = PlannerConfig()
    short = constant_profile(sc.ev.v, 7, cfg.dt)
    cor = build_corridor(sc, positions_from_profile(short), short, cfg)
    assert cor.k == 7
