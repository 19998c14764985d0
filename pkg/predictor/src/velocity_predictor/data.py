"""Synthetic episodes, dataset loading, and the profile exchange writer.

Episodes are ordinary scenario documents; the agent whose future is predicted
is stored as the track with id "ev" so its full sampled trajectory (history
plus label window) travels in one file.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from highway_planner.core import (
    RoadModel,
    Scenario,
    SvTrack,
    VehicleState,
    dump_scenario,
    load_scenario,
)
from highway_planner.velocity import gap_keeping_profile

from .encoding import TARGET_ID, EncoderConfig, vectorize

_ROAD = RoadModel(
    reference_line=np.array([[0.0, 0.0], [1500.0, 0.0]]),
    l_lb=-5.625, l_ub=5.625,
    lane_centers=(-3.75, 0.0, 3.75), lane_width=3.75,
)

KINDS = ("car_following", "constant")


@dataclass(frozen=True)
class Example:
    matrices: list
    target_index: int
    labels: np.ndarray   # (n_out,) future velocity samples


def _episode(rng: np.random.Generator, cfg: EncoderConfig, kind: str) -> Scenario:
    samples = cfg.m_tra + cfg.n_out
    duration = round((samples - 1) * cfg.dt, 10)
    grid = np.arange(samples) * cfg.dt
    lane = float(rng.choice(_ROAD.lane_centers))
    s0 = float(rng.uniform(40.0, 120.0))
    v0 = float(rng.uniform(15.0, 35.0))

    svs = []
    if kind == "car_following":
        lead_v = float(rng.uniform(10.0, 30.0))
        lead_s = s0 + float(rng.uniform(20.0, 80.0))
        lead_poses = np.column_stack([lead_s + lead_v * grid, np.full(samples, lane),
                                      np.zeros(samples), np.full(samples, lead_v)])
        lead = SvTrack(id="lead", width=1.8, length=4.8, poses=lead_poses)
        svs.append(lead)
        state = VehicleState(s=s0, l=lane, v=v0, a=0.0, heading=0.0,
                             width=1.8, length=4.8)
        profile = gap_keeping_profile(state, lead, samples - 1, cfg.dt, cfg.v_max)
        v = np.concatenate([[v0], profile.v])
        v = np.clip(v + rng.normal(0.0, 0.05, size=samples), 0.5, cfg.v_max)
    else:
        v0 = float(rng.uniform(5.0, 45.0))
        v = np.full(samples, v0)

    s = s0 + np.concatenate([[0.0], np.cumsum(v[1:] * cfg.dt)])
    poses = np.column_stack([s, np.full(samples, lane), np.zeros(samples), v])
    svs.insert(0, SvTrack(id=TARGET_ID, width=1.8, length=4.8, poses=poses))

    ev = VehicleState(s=s0, l=lane, v=float(v[0]), a=0.0, heading=0.0,
                      width=1.8, length=4.8)
    return Scenario(road=_ROAD, ev=ev, svs=tuple(svs), dt=cfg.dt, duration=duration)


def synthesize_episodes(out_dir: str, n_episodes: int, seed: int,
                        cfg: EncoderConfig, kind: str = "car_following") -> list[str]:
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(n_episodes):
        path = os.path.join(out_dir, f"ep_{i:04d}.json")
        with open(path, "w") as fh:
            fh.write(dump_scenario(_episode(rng, cfg, kind)))
        paths.append(path)
    return paths


def load_example(path: str, cfg: EncoderConfig) -> Example:
    with open(path) as fh:
        scenario = load_scenario(fh.read())
    target = next((sv for sv in scenario.svs if sv.id == TARGET_ID), None)
    if target is None:
        raise ValueError(f"{path}: no track with id {TARGET_ID!r}")
    need = cfg.m_tra + cfg.n_out
    if target.poses.shape[0] < need:
        raise ValueError(f"{path}: target track has {target.poses.shape[0]} samples, "
                         f"training needs {need}")
    graph = vectorize(scenario, cfg)
    labels = target.poses[cfg.m_tra:cfg.m_tra + cfg.n_out, 3].astype(float)
    return Example(matrices=graph.matrices(), target_index=graph.target_index,
                   labels=labels)


def load_dataset(data_dir: str, cfg: EncoderConfig) -> list[Example]:
    names = sorted(n for n in os.listdir(data_dir) if n.endswith(".json"))
    if not names:
        raise ValueError(f"no scenario documents in {data_dir}")
    return [load_example(os.path.join(data_dir, n), cfg) for n in names]


def split_dataset(examples, seed: int = 0):
    """Deterministic 7:2:1 train/validation/test split."""
    n = len(examples)
    if n < 3:
        raise ValueError("dataset too small to split")
    order = np.random.default_rng(seed).permutation(n)
    n_test = max(1, n // 10)
    n_val = max(1, n // 5)
    test = [examples[i] for i in order[:n_test]]
    val = [examples[i] for i in order[n_test:n_test + n_val]]
    train = [examples[i] for i in order[n_test + n_val:]]
    return train, val, test


def export_profile(velocities, path: str) -> None:
    """Write the velocity-profile exchange format: one speed per line."""
    v = np.asarray(velocities, dtype=float)
    lines = ["# velocity profile (m/s), one step per line"]
    lines += ["%.6f" % x for x in v]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
