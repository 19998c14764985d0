"""Domain types and scenario documents.

Everything downstream works in a lane-aligned frame: s runs along the road
reference line, l is the signed lateral offset (positive left). Scenario
documents are JSON with implicit pose timestamps (index i maps to t = i*dt).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from functools import cached_property

import numpy as np

__all__ = [
    "ScenarioError",
    "TrajectoryPoint",
    "VehicleState",
    "SvTrack",
    "RoadModel",
    "Scenario",
    "PlannerConfig",
    "ARCHETYPES",
    "frenet_to_cartesian",
    "pose_at",
    "load_scenario",
    "dump_scenario",
    "load_config",
    "generate_scenario",
]


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario/config document."""


@dataclass(frozen=True)
class TrajectoryPoint:
    s: float
    l: float
    t: float


@dataclass(frozen=True)
class VehicleState:
    s: float
    l: float
    v: float
    a: float
    heading: float
    width: float
    length: float

    def __post_init__(self):
        if self.v < 0.0:
            raise ScenarioError(f"ev.v: speed must be non-negative, got {self.v}")
        if self.width <= 0.0 or self.length <= 0.0:
            raise ScenarioError("ev.width/length: must be positive")


@dataclass(frozen=True, eq=False)
class SvTrack:
    """One surrounding vehicle: constant dims, pose rows [s, l, heading, v] per step."""

    id: str
    width: float
    length: float
    poses: np.ndarray  # (steps, 4)

    def __post_init__(self):
        if self.width <= 0.0 or self.length <= 0.0:
            raise ScenarioError(f"svs[{self.id}].width/length: must be positive")
        p = np.asarray(self.poses, dtype=float)
        if p.ndim != 2 or p.shape[1] != 4 or p.shape[0] < 1:
            raise ScenarioError(f"svs[{self.id}].poses: expected non-empty rows of [s, l, heading, v]")
        if np.any(p[:, 3] < 0.0):
            raise ScenarioError(f"svs[{self.id}].poses: negative speed")
        object.__setattr__(self, "poses", p)


@dataclass(frozen=True, eq=False)
class RoadModel:
    reference_line: np.ndarray  # (points, 2) cartesian polyline
    l_lb: float
    l_ub: float
    lane_centers: tuple[float, ...]
    lane_width: float

    def __post_init__(self):
        rl = np.asarray(self.reference_line, dtype=float)
        if rl.ndim != 2 or rl.shape[1] != 2 or rl.shape[0] < 2:
            raise ScenarioError("road.reference_line: need at least two [x, y] points")
        if np.any(np.hypot(*np.diff(rl, axis=0).T) <= 0.0):
            raise ScenarioError("road.reference_line: degenerate (zero-length) segment")
        if not self.l_lb < self.l_ub:
            raise ScenarioError("road.l_lb/l_ub: road bounds inverted")
        if self.lane_width <= 0.0:
            raise ScenarioError("road.lane_width: must be positive")
        for c in self.lane_centers:
            if not self.l_lb < c < self.l_ub:
                raise ScenarioError(f"road.lane_centers: center {c} outside road bounds")
        object.__setattr__(self, "reference_line", rl)
        object.__setattr__(self, "lane_centers", tuple(float(c) for c in self.lane_centers))

    @cached_property
    def _arclen(self):
        d = np.diff(self.reference_line, axis=0)
        seg_len = np.hypot(d[:, 0], d[:, 1])
        cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        dirs = d / seg_len[:, None]
        return cum, dirs

    @property
    def length(self) -> float:
        return float(self._arclen[0][-1])


@dataclass(frozen=True, eq=False)
class Scenario:
    road: RoadModel
    ev: VehicleState
    svs: tuple[SvTrack, ...]
    dt: float
    duration: float

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ScenarioError(f"dt: must be positive, got {self.dt}")
        if self.duration <= 0.0:
            raise ScenarioError(f"duration: must be positive, got {self.duration}")
        steps = round(self.duration / self.dt) + 1
        for sv in self.svs:
            if sv.poses.shape[0] != steps:
                raise ScenarioError(
                    f"svs[{sv.id}].poses: pose spacing mismatch "
                    f"(got {sv.poses.shape[0]} rows, expected {steps} for duration/dt)")
            l0 = sv.poses[0, 1]
            if not self.road.l_lb <= l0 <= self.road.l_ub:
                raise ScenarioError(f"svs[{sv.id}].poses: initial pose outside road bounds")
        object.__setattr__(self, "svs", tuple(self.svs))


def frenet_to_cartesian(road: RoadModel, p: TrajectoryPoint) -> tuple[float, float]:
    """Map (s, l) to cartesian; l extends along the left normal of the segment containing s."""
    cum, dirs = road._arclen
    if not 0.0 <= p.s <= cum[-1] + 1e-9:
        raise ValueError(f"s={p.s} outside reference line [0, {cum[-1]}]")
    i = min(int(np.searchsorted(cum, p.s, side="right")) - 1, dirs.shape[0] - 1)
    i = max(i, 0)
    base = road.reference_line[i] + dirs[i] * (p.s - cum[i])
    normal = np.array([-dirs[i, 1], dirs[i, 0]])
    x, y = base + p.l * normal
    return float(x), float(y)


def pose_at(track: SvTrack, t: float, dt: float) -> np.ndarray:
    """Pose [s, l, heading, v] at time t: linear interpolation on the grid, held at the ends."""
    n = track.poses.shape[0]
    u = t / dt
    if u <= 0.0:
        return track.poses[0].copy()
    if u >= n - 1:
        return track.poses[-1].copy()
    i = int(u)
    frac = u - i
    return (1.0 - frac) * track.poses[i] + frac * track.poses[i + 1]


# --- document parsing -------------------------------------------------------

def _num(d: dict, key: str, ctx: str) -> float:
    if key not in d:
        raise ScenarioError(f"{ctx}.{key}: missing")
    v = d[key]
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise ScenarioError(f"{ctx}.{key}: expected a number, got {type(v).__name__}")
    return float(v)


def load_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"scenario document is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a JSON object")
    for key in ("road", "ev", "svs", "dt", "duration"):
        if key not in doc:
            raise ScenarioError(f"{key}: missing")

    r = doc["road"]
    if not isinstance(r, dict):
        raise ScenarioError("road: expected an object")
    if "reference_line" not in r or not isinstance(r["reference_line"], list):
        raise ScenarioError("road.reference_line: missing or not a list")
    if "lane_centers" not in r or not isinstance(r["lane_centers"], list):
        raise ScenarioError("road.lane_centers: missing or not a list")
    road = RoadModel(
        reference_line=np.asarray(r["reference_line"], dtype=float),
        l_lb=_num(r, "l_lb", "road"),
        l_ub=_num(r, "l_ub", "road"),
        lane_centers=tuple(float(c) for c in r["lane_centers"]),
        lane_width=_num(r, "lane_width", "road"),
    )

    e = doc["ev"]
    if not isinstance(e, dict):
        raise ScenarioError("ev: expected an object")
    ev = VehicleState(
        s=_num(e, "s", "ev"), l=_num(e, "l", "ev"), v=_num(e, "v", "ev"),
        a=_num(e, "a", "ev"), heading=_num(e, "heading", "ev"),
        width=_num(e, "width", "ev"), length=_num(e, "length", "ev"),
    )

    if not isinstance(doc["svs"], list):
        raise ScenarioError("svs: expected a list")
    svs = []
    for k, sv in enumerate(doc["svs"]):
        ctx = f"svs[{k}]"
        if not isinstance(sv, dict):
            raise ScenarioError(f"{ctx}: expected an object")
        if "id" not in sv or not isinstance(sv["id"], str):
            raise ScenarioError(f"{ctx}.id: missing or not a string")
        if "poses" not in sv or not isinstance(sv["poses"], list):
            raise ScenarioError(f"{ctx}.poses: missing or not a list")
        svs.append(SvTrack(
            id=sv["id"],
            width=_num(sv, "width", ctx),
            length=_num(sv, "length", ctx),
            poses=np.asarray(sv["poses"], dtype=float),
        ))

    return Scenario(road=road, ev=ev, svs=tuple(svs),
                    dt=_num(doc, "dt", "$"), duration=_num(doc, "duration", "$"))


def dump_scenario(scenario: Scenario) -> str:
    """Canonical serialization; stable byte-for-byte for identical scenarios."""
    doc = {
        "road": {
            "reference_line": [[float(x), float(y)] for x, y in scenario.road.reference_line],
            "l_lb": scenario.road.l_lb,
            "l_ub": scenario.road.l_ub,
            "lane_centers": list(scenario.road.lane_centers),
            "lane_width": scenario.road.lane_width,
        },
        "ev": {
            "s": scenario.ev.s, "l": scenario.ev.l, "v": scenario.ev.v,
            "a": scenario.ev.a, "heading": scenario.ev.heading,
            "width": scenario.ev.width, "length": scenario.ev.length,
        },
        "svs": [
            {"id": sv.id, "width": sv.width, "length": sv.length,
             "poses": [[float(v) for v in row] for row in sv.poses]}
            for sv in scenario.svs
        ],
        "dt": scenario.dt,
        "duration": scenario.duration,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


# --- planner configuration --------------------------------------------------

_TAN60 = math.tan(math.pi / 3.0)


@dataclass(frozen=True)
class PlannerConfig:
    """Tuning knobs for discretization, margins, weights, and kinematic limits."""

    n_steps: int = 30
    dt: float = 0.1
    dt_replan: float = 0.1
    lam: int = 6                 # segments per corridor cell
    l_mar: float = 0.3           # hard lateral margin around bodies
    l_buf: float = 0.5           # extra corridor width demanded per side
    w_cell: float = 0.5          # cell length per unit speed (seconds)
    w_ref: float = 1.0           # pull toward the reference lane offset
    w_slope: float = 500.0       # penalize l'
    w_curv: float = 500.0        # penalize l''
    w_jerk: float = 500.0        # penalize l'''
    w_jump_l: float = 500.0      # penalize step-to-step l changes
    w_jump_slope: float = 500.0  # penalize step-to-step l' changes
    heading_max: float = math.pi / 3.0
    slope_min: float = -_TAN60
    slope_max: float = _TAN60
    curv_min: float = -3.0
    curv_max: float = 3.0
    jerk_min: float = -3.0
    jerk_max: float = 3.0
    v_max: float = 50.0
    k_min_steps: int = 10        # corridor depth needed for a usable cycle
    check_solutions: bool = True

    def __post_init__(self):
        if self.n_steps < 1:
            raise ScenarioError("n_steps: must be >= 1")
        if self.dt <= 0.0 or self.dt_replan <= 0.0:
            raise ScenarioError("dt/dt_replan: must be positive")
        if self.lam < 1:
            raise ScenarioError("lam: must be >= 1")
        if min(self.l_mar, self.l_buf) < 0.0:
            raise ScenarioError("l_mar/l_buf: must be non-negative")
        if self.w_cell <= 0.0:
            raise ScenarioError("w_cell: must be positive")
        for name in ("w_ref", "w_slope", "w_curv", "w_jerk", "w_jump_l", "w_jump_slope"):
            if getattr(self, name) < 0.0:
                raise ScenarioError(f"{name}: must be non-negative")
        if not 0.0 < self.heading_max < math.pi / 2.0:
            raise ScenarioError("heading_max: must lie in (0, pi/2)")
        for lo, hi in (("slope_min", "slope_max"), ("curv_min", "curv_max"), ("jerk_min", "jerk_max")):
            if not getattr(self, lo) < getattr(self, hi):
                raise ScenarioError(f"{lo}/{hi}: bounds inverted")
        if self.slope_min >= 0.0 or self.slope_max <= 0.0:
            raise ScenarioError("slope bounds must straddle zero")
        if self.v_max <= 0.0:
            raise ScenarioError("v_max: must be positive")
        if self.k_min_steps < 1:
            raise ScenarioError("k_min_steps: must be >= 1")


def load_config(text: str, base: PlannerConfig | None = None) -> PlannerConfig:
    """Parse a config document (JSON object of field overrides onto defaults)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"config document is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ScenarioError("config document must be a JSON object")
    known = {f.name for f in fields(PlannerConfig)}
    unknown = set(doc) - known
    if unknown:
        raise ScenarioError(f"config: unknown keys {sorted(unknown)}")
    for k, v in doc.items():
        if k in ("n_steps", "lam", "k_min_steps"):
            if not isinstance(v, int) or isinstance(v, bool):
                raise ScenarioError(f"config.{k}: expected an integer")
        elif k == "check_solutions":
            if not isinstance(v, bool):
                raise ScenarioError(f"config.{k}: expected a boolean")
        elif not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ScenarioError(f"config.{k}: expected a number")
    return replace(base or PlannerConfig(), **doc)


# --- archetype generators ---------------------------------------------------

ARCHETYPES = ("cut_in_slow_front", "cut_in_close_decel", "cut_in_fast_rear")

_LANE_W = 3.75
_ROAD_LEN = 1500.0


def _canonical_archetype(name: str) -> str:
    flat = "".join(ch for ch in name.lower() if ch.isalnum())
    for a in ARCHETYPES:
        if flat == a.replace("_", ""):
            return a
    raise ScenarioError(f"archetype: unknown '{name}' (expected one of {ARCHETYPES})")


def _smoothstep(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _smoothstep_rate(u: np.ndarray) -> np.ndarray:
    u = np.clip(u, 0.0, 1.0)
    return 6.0 * u * (1.0 - u)


def _lane_change_track(track_id: str, s0: float, v0: float, decel: float, v_floor: float,
                       l_from: float, l_to: float, t_start: float, t_span: float,
                       grid: np.ndarray) -> SvTrack:
    """Constant-heading cruise with one smoothstep lane change; optional capped deceleration."""
    if decel > 0.0:
        t_sat = max((v0 - v_floor) / decel, 0.0)
        tt = np.minimum(grid, t_sat)
        s = s0 + v0 * tt - 0.5 * decel * tt * tt + v_floor * np.maximum(grid - t_sat, 0.0)
        v_lon = np.maximum(v0 - decel * grid, v_floor)
    else:
        s = s0 + v0 * grid
        v_lon = np.full_like(grid, v0)
    u = (grid - t_start) / t_span
    l = l_from + (l_to - l_from) * _smoothstep(u)
    dl_dt = (l_to - l_from) * _smoothstep_rate(u) / t_span
    heading = np.arctan2(dl_dt, v_lon)
    v = np.hypot(v_lon, dl_dt)
    return SvTrack(id=track_id, width=1.8, length=4.8,
                   poses=np.column_stack([s, l, heading, v]))


def _cruise_track(track_id: str, s0: float, v: float, lane_l: float, grid: np.ndarray) -> SvTrack:
    return SvTrack(id=track_id, width=1.8, length=4.8,
                   poses=np.column_stack([s0 + v * grid, np.full_like(grid, lane_l),
                                          np.zeros_like(grid), np.full_like(grid, v)]))


_ARCHETYPE_DEFAULTS = {
    "cut_in_slow_front": dict(ev_v=32.0, cutter_v=25.0, gap=35.0, cut_start=1.0,
                              lc_duration=2.5, decel=0.0, v_floor=0.0, duration=6.0),
    "cut_in_close_decel": dict(ev_v=32.0, cutter_v=29.0, gap=10.0, cut_start=0.8,
                               lc_duration=3.2, decel=1.2, v_floor=22.0, duration=6.0),
    "cut_in_fast_rear": dict(ev_v=28.0, cutter_v=33.0, gap=12.0, cut_start=1.0,
                             lc_duration=2.5, decel=0.0, v_floor=0.0, duration=6.0),
}


def generate_scenario(archetype: str, seed: int, overrides: dict | None = None) -> Scenario:
    """Deterministic seeded scenario for one cut-in archetype.

    Speeds are archetype constants; seeds jitter gaps, cut timing, lane-change
    duration, and background traffic placement. Overrides replace any default
    before jitter-independent validation.
    """
    arch = _canonical_archetype(archetype)
    params = dict(_ARCHETYPE_DEFAULTS[arch])
    if overrides:
        unknown = set(overrides) - set(params)
        if unknown:
            raise ScenarioError(f"overrides: unknown keys {sorted(unknown)}")
        params.update({k: float(v) for k, v in overrides.items()})
    if params["ev_v"] <= 0.0 or params["cutter_v"] <= 0.0:
        raise ScenarioError("overrides: speeds must be positive")
    if params["ev_v"] > 60.0 or params["cutter_v"] > 60.0:
        raise ScenarioError("overrides: speeds beyond physical range (60 m/s)")
    if params["gap"] <= 0.0:
        raise ScenarioError("overrides: gap must be positive")
    if params["lc_duration"] <= 0.0 or params["duration"] <= 0.0:
        raise ScenarioError("overrides: durations must be positive")
    if params["cut_start"] < 0.0:
        raise ScenarioError("overrides: cut_start must be non-negative")

    rng = np.random.default_rng(seed)
    dt = 0.1
    duration = params["duration"]
    grid = np.round(np.arange(round(duration / dt) + 1) * dt, 10)

    road = RoadModel(
        reference_line=np.array([[0.0, 0.0], [_ROAD_LEN, 0.0]]),
        l_lb=-1.5 * _LANE_W, l_ub=1.5 * _LANE_W,
        lane_centers=(-_LANE_W, 0.0, _LANE_W), lane_width=_LANE_W,
    )
    ev = VehicleState(s=80.0, l=0.0, v=params["ev_v"], a=0.0, heading=0.0,
                      width=1.8, length=4.8)

    # draw jitters in a fixed order so seeds reproduce byte-identically
    gap = params["gap"] * (1.0 + rng.uniform(-0.2, 0.2))
    cut_start = params["cut_start"] + rng.uniform(0.0, 0.8)
    lc_duration = params["lc_duration"] + rng.uniform(-0.3, 0.5)
    bg_gap = rng.uniform(90.0, 140.0)

    if arch == "cut_in_fast_rear":
        cutter = _lane_change_track("cutter", ev.s - gap, params["cutter_v"], 0.0, 0.0,
                                    -_LANE_W, 0.0, cut_start, lc_duration, grid)
        bg = _cruise_track("bg", ev.s + bg_gap, params["cutter_v"], -_LANE_W, grid)
    else:
        cutter = _lane_change_track("cutter", ev.s + gap, params["cutter_v"],
                                    params["decel"], params["v_floor"],
                                    _LANE_W, 0.0, cut_start, lc_duration, grid)
        bg = _cruise_track("bg", ev.s + bg_gap, params["cutter_v"], _LANE_W, grid)

    return Scenario(road=road, ev=ev, svs=(cutter, bg), dt=dt, duration=duration)
