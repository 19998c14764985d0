import numpy as np
import pytest

from highway_planner.core import RoadModel, Scenario, SvTrack, VehicleState

from velocity_predictor import EncoderConfig


def straight_road():
    return RoadModel(
        reference_line=np.array([[0.0, 0.0], [1500.0, 0.0]]),
        l_lb=-5.625, l_ub=5.625,
        lane_centers=(-3.75, 0.0, 3.75), lane_width=3.75,
    )


def make_scene(v_target, cfg, extras=(), lane=0.0, s0=50.0) -> Scenario:
    """Scenario whose "ev" track follows the given speed samples.

    extras: (id, lane, s0, v) constant-speed companion tracks on the same grid.
    """
    v = np.asarray(v_target, dtype=float)
    samples = v.size
    duration = round((samples - 1) * cfg.dt, 10)
    grid = np.arange(samples) * cfg.dt
    s = s0 + np.concatenate([[0.0], np.cumsum(v[1:] * cfg.dt)])
    poses = np.column_stack([s, np.full(samples, lane), np.zeros(samples), v])
    svs = [SvTrack(id="ev", width=1.8, length=4.8, poses=poses)]
    for sid, sl, ss, sv in extras:
        p = np.column_stack([ss + sv * grid, np.full(samples, sl),
                             np.zeros(samples), np.full(samples, sv)])
        svs.append(SvTrack(id=sid, width=1.8, length=4.8, poses=p))
    ev = VehicleState(s=float(s[0]), l=lane, v=float(v[0]), a=0.0, heading=0.0,
                      width=1.8, length=4.8)
    return Scenario(road=straight_road(), ev=ev, svs=tuple(svs), dt=cfg.dt,
                    duration=duration)


@pytest.fixture
def small_cfg():
    # toy dimensions keep the unit tests fast; defaults are exercised in the
    # acceptance suite
    return EncoderConfig(m_tra=5, m_map=4, d_s=5.0, dt=0.1, v_max=50.0, n_out=6)
