"""Scene vectorization: trajectories and lane lines become polyline vector sets.

Every vector is a (start, end) pair of 6-dim kinematic states plus a 3-way
object tag; all positions are translated so the predicted agent's latest
observed pose sits at the origin.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from highway_planner.core import Scenario, SvTrack

TARGET_ID = "ev"  # the track whose future velocity is being predicted

OBJ_EV = 1
OBJ_SV = 2
OBJ_LANE = 3

FEATURE_DIM = 15  # 6 start + 6 end + one-hot object tag


@dataclass(frozen=True)
class EncoderConfig:
    m_tra: int = 20      # observed trajectory samples
    m_map: int = 10      # samples per lane line
    d_s: float = 5.0     # lane sampling interval, m
    dt: float = 0.1
    v_max: float = 50.0
    n_out: int = 30      # predicted velocity steps

    def __post_init__(self):
        if self.m_tra < 2:
            raise ValueError("m_tra: need at least two observation samples")
        if self.m_map < 2:
            raise ValueError("m_map: need at least two lane samples")
        if self.d_s <= 0.0 or self.dt <= 0.0:
            raise ValueError("d_s/dt: must be positive")
        if self.v_max <= 0.0:
            raise ValueError("v_max: must be positive")
        if self.n_out < 1:
            raise ValueError("n_out: must be >= 1")

    @property
    def forward_view(self) -> float:
        return self.m_map * self.d_s


@dataclass(frozen=True)
class VectorFeature:
    d_start: tuple  # (s, l, vel_s, vel_l, acc_s, acc_l)
    d_end: tuple
    id_time: int    # end-sample index; 0 for static map vectors
    id_object: int  # OBJ_EV / OBJ_SV / OBJ_LANE
    id_local: int   # polyline index within the scene
    id_global: int  # observation-timestamp index; 0 for map vectors


@dataclass(frozen=True)
class SceneGraph:
    polylines: tuple
    target_index: int

    def matrices(self) -> list[np.ndarray]:
        return [feature_matrix(p) for p in self.polylines]


def _track_states(track: SvTrack, m_tra: int, dt: float, ref: np.ndarray) -> np.ndarray:
    """(m_tra, 6) kinematic states, positions relative to ref."""
    rows = track.poses[:m_tra]
    vel_s = rows[:, 3] * np.cos(rows[:, 2])
    vel_l = rows[:, 3] * np.sin(rows[:, 2])
    acc_s = np.concatenate([[0.0], np.diff(vel_s) / dt])
    acc_l = np.concatenate([[0.0], np.diff(vel_l) / dt])
    return np.column_stack([rows[:, 0] - ref[0], rows[:, 1] - ref[1],
                            vel_s, vel_l, acc_s, acc_l])


def vectorize(scenario: Scenario, cfg: EncoderConfig) -> SceneGraph:
    """Break the scene into per-polyline vector lists.

    Each observed trajectory yields m_tra - 1 vectors; each lane line yields
    m_map - 1 vectors with zeroed dynamics.
    """
    target = next((sv for sv in scenario.svs if sv.id == TARGET_ID), None)
    if target is None:
        raise ValueError(f"scene has no track with id {TARGET_ID!r}")
    for sv in scenario.svs:
        if sv.poses.shape[0] < cfg.m_tra:
            raise ValueError(f"track {sv.id!r}: history has {sv.poses.shape[0]} "
                             f"samples, need {cfg.m_tra}")
    ref = target.poses[cfg.m_tra - 1, :2]

    polylines = []
    target_index = -1
    for sv in scenario.svs:
        if sv.id == TARGET_ID:
            target_index = len(polylines)
        obj = OBJ_EV if sv.id == TARGET_ID else OBJ_SV
        states = _track_states(sv, cfg.m_tra, cfg.dt, ref)
        local = len(polylines)
        polylines.append(tuple(
            VectorFeature(d_start=tuple(states[i - 1]), d_end=tuple(states[i]),
                          id_time=i, id_object=obj, id_local=local, id_global=i)
            for i in range(1, cfg.m_tra)))

    for c in scenario.road.lane_centers:
        local = len(polylines)
        xs = np.arange(cfg.m_map) * cfg.d_s          # ahead of the target's pose
        polylines.append(tuple(
            VectorFeature(d_start=(xs[j - 1], c - ref[1], 0.0, 0.0, 0.0, 0.0),
                          d_end=(xs[j], c - ref[1], 0.0, 0.0, 0.0, 0.0),
                          id_time=0, id_object=OBJ_LANE, id_local=local, id_global=0)
            for j in range(1, cfg.m_map)))

    return SceneGraph(polylines=tuple(polylines), target_index=target_index)


def feature_matrix(polyline) -> np.ndarray:
    """(n, 15) float matrix: start state, end state, object one-hot."""
    out = np.zeros((len(polyline), FEATURE_DIM))
    for r, v in enumerate(polyline):
        out[r, :6] = v.d_start
        out[r, 6:12] = v.d_end
        out[r, 11 + v.id_object] = 1.0
    return out
