"""Longitudinal velocity profiles over the planning horizon.

The lateral planner consumes speeds only through per-step advance distances,
so profiles are a pluggable layer: constant hold, a simple headway-keeping
rule, or an external file in the profile exchange format (one speed per line).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import SvTrack, VehicleState, pose_at

__all__ = [
    "VelocityProfile",
    "constant_profile",
    "gap_keeping_profile",
    "positions_from_profile",
    "load_profile",
]

_V_FLOOR = 0.5  # profiles stay strictly positive; stopping is out of scope

_HEADWAY_LIMIT = 2.0   # seconds; closer than this we match the lead's speed
_ACCEL_LIMIT = 3.0     # m/s^2 cap on profile speed changes


@dataclass(frozen=True, eq=False)
class VelocityProfile:
    v: np.ndarray  # (n_steps,) speeds, strictly positive
    dt: float

    def __post_init__(self):
        arr = np.asarray(self.v, dtype=float)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("profile needs at least one speed entry")
        if np.any(arr <= 0.0):
            raise ValueError("profile speeds must be strictly positive")
        if self.dt <= 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "v", arr)

    @property
    def n_steps(self) -> int:
        return int(self.v.size)


def constant_profile(v: float, n_steps: int, dt: float) -> VelocityProfile:
    if v <= 0.0:
        raise ValueError(f"speed must be positive, got {v}")
    return VelocityProfile(v=np.full(n_steps, float(v)), dt=dt)


def gap_keeping_profile(ev: VehicleState, lead: SvTrack | None, n_steps: int,
                        dt: float, v_max: float) -> VelocityProfile:
    """Hold the current speed, decelerating toward the lead when time headway < 2 s.

    Speed changes are capped at +-3 m/s^2 and entries clipped into (0, v_max].
    The lead track is sampled on the same dt grid as the profile.
    """
    v_cur = min(max(ev.v, _V_FLOOR), v_max)
    s_cur = ev.s
    out = np.empty(n_steps)
    for i in range(n_steps):
        if lead is not None:
            lead_s, _, _, lead_v = pose_at(lead, (i + 1) * dt, dt)
            gap = lead_s - s_cur
            if gap > 0.0 and gap / max(v_cur, 0.1) < _HEADWAY_LIMIT and v_cur > lead_v:
                v_cur = max(v_cur - _ACCEL_LIMIT * dt, lead_v)
        v_cur = min(max(v_cur, _V_FLOOR), v_max)
        out[i] = v_cur
        s_cur += v_cur * dt
    return VelocityProfile(v=out, dt=dt)


def positions_from_profile(profile: VelocityProfile) -> np.ndarray:
    """Per-step advance along the lane: s_i is the cumulative sum of v_j*dt, j = 1..i."""
    return np.cumsum(profile.v) * profile.dt


def load_profile(text: str, n_steps: int, dt: float, v_max: float) -> VelocityProfile:
    """Parse the profile exchange format: one decimal speed per line, '#' comments."""
    values = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        payload = raw.split("#", 1)[0].strip()
        if not payload:
            continue
        try:
            v = float(payload)
        except ValueError:
            raise ValueError(f"profile line {lineno}: malformed number {payload!r}") from None
        if v <= 0.0:
            raise ValueError(f"profile line {lineno}: speed must be positive, got {v}")
        if v > v_max:
            warnings.warn(f"profile line {lineno}: {v} exceeds v_max={v_max}, clamping",
                          stacklevel=2)
            v = v_max
        values.append(v)
    if len(values) != n_steps:
        raise ValueError(f"profile has {len(values)} entries, expected {n_steps}")
    return VelocityProfile(v=np.asarray(values), dt=dt)
