"""Lateral path optimization inside a safety corridor.

Decision variables per covered step: lateral offset and its first three
arc-length derivatives, chained by a third-order Taylor recurrence in which
each row uses the already-updated higher derivatives of the same step. Body
containment couples offset and slope through a linear half-width model whose
slope term needs the sign of the slope; the sign pattern is either resolved
exactly by branch and bound or replaced by the equivalent both-piece convex
form that upper-bounds the absolute value with two inequalities.
"""
from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import PlannerConfig, Scenario, TrajectoryPoint
from .corridor import Corridor, CorridorEmpty, build_corridor
from .geometry import GeometryModel, segment_offsets
from .qp import QpProblem, QpStatus, solve_qp
from .velocity import VelocityProfile, constant_profile, positions_from_profile

__all__ = [
    "InfeasibleProblem",
    "SolverFailure",
    "InitialLateralState",
    "PathSolution",
    "PlanStatus",
    "PlanOutcome",
    "assemble_problem",
    "propagate_kinematics",
    "objective_value",
    "solve_branch_and_bound",
    "solve_convex_equivalent",
    "extract_trajectory",
    "reference_offsets",
    "plan_cycle",
]

_DS_FLOOR = 0.1       # m; smaller advance steps mean the ego is basically stopped
_INTEGRAL_TOL = 1e-9  # sign-consistency acceptance for relaxed node solutions
_PLAN_TOL = 1e-8      # replan audits integrate row errors over the horizon, so
                      # per-row slack needs two orders of headroom under 1e-6


class InfeasibleProblem(RuntimeError):
    """The corridor admits no path under the kinematic and containment rows."""


class SolverFailure(RuntimeError):
    """The QP engine gave up (iteration limit / numerical failure)."""


@dataclass(frozen=True)
class InitialLateralState:
    l: float
    slope: float
    curv: float


@dataclass(frozen=True, eq=False)
class PathSolution:
    l: np.ndarray
    slope: np.ndarray
    curv: np.ndarray
    jerk: np.ndarray
    k: np.ndarray            # resolved slope signs, entries in {-1, +1}
    objective: float
    qp_iterations: int
    qp_residual: float
    # root-relaxation point and duals, kept to warm-start the next cycle
    root_x: np.ndarray | None = None
    root_duals: np.ndarray | None = None

    @property
    def steps(self) -> int:
        return int(self.l.size)


class PlanStatus(str, Enum):
    SOLVED = "Solved"
    CORRIDOR_EMPTY = "CorridorEmpty"
    INFEASIBLE = "Infeasible"
    SOLVER_FAILURE = "SolverFailure"


@dataclass(frozen=True, eq=False)
class PlanOutcome:
    status: PlanStatus
    solution: PathSolution | None
    trajectory: list[TrajectoryPoint] | None
    corridor: Corridor | None
    profile: VelocityProfile | None
    ref_last: float | None
    timings: dict[str, float] = field(default_factory=dict)
    message: str = ""
    init: InitialLateralState | None = None


def _advance_steps(positions: np.ndarray, k: int) -> np.ndarray:
    ds = np.diff(np.concatenate([[0.0], positions[:k]]))
    if np.any(ds < _DS_FLOOR - 1e-12):
        raise ValueError(f"advance step below {_DS_FLOOR} m floor (degenerate stop)")
    return ds


def propagate_kinematics(init: InitialLateralState, jerk: np.ndarray,
                         ds: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Forward-roll the Taylor chain from the initial state; reference oracle
    for the equality rows assembled below."""
    jerk = np.asarray(jerk, dtype=float)
    ds = np.asarray(ds, dtype=float)
    if jerk.shape != ds.shape:
        raise ValueError("jerk and ds must have matching length")
    k = jerk.size
    l = np.empty(k)
    slope = np.empty(k)
    curv = np.empty(k)
    l_p, s_p, c_p = init.l, init.slope, init.curv
    for i in range(k):
        h = ds[i]
        c_i = c_p + jerk[i] * h
        s_i = s_p + c_i * h + 0.5 * jerk[i] * h * h
        l_i = l_p + s_i * h + 0.5 * c_i * h * h + jerk[i] * h ** 3 / 6.0
        curv[i], slope[i], l[i] = c_i, s_i, l_i
        l_p, s_p, c_p = l_i, s_i, c_i
    return l, slope, curv


def objective_value(l, slope, curv, jerk, l_ref, config: PlannerConfig) -> float:
    """Weighted quadratic cost: reference tracking, derivative magnitudes, and
    step-to-step jumps (jumps couple consecutive steps only, not the initial state)."""
    l = np.asarray(l, float)
    slope = np.asarray(slope, float)
    return float(
        config.w_ref * np.sum((l - np.asarray(l_ref, float)) ** 2)
        + config.w_slope * np.sum(slope ** 2)
        + config.w_curv * np.sum(np.asarray(curv, float) ** 2)
        + config.w_jerk * np.sum(np.asarray(jerk, float) ** 2)
        + config.w_jump_l * np.sum(np.diff(l) ** 2)
        + config.w_jump_slope * np.sum(np.diff(slope) ** 2)
    )


def _validate_pattern(sign_pattern, k: int) -> np.ndarray | None:
    if sign_pattern is None:
        return None
    pat = np.asarray(sign_pattern, dtype=int)
    if pat.shape != (k,):
        raise ValueError(f"sign pattern length {pat.shape} does not match {k} steps")
    if not np.all(np.isin(pat, (-1, 0, 1))):
        raise ValueError("sign pattern entries must be -1, 0 (unfixed), or +1")
    return pat


def assemble_problem(corridor: Corridor, positions: np.ndarray, init: InitialLateralState,
                     l_ref: np.ndarray, config: PlannerConfig, geometry: GeometryModel,
                     sign_pattern=None) -> QpProblem:
    """Build the QP for the corridor's covered steps.

    sign_pattern None emits both slope-sign variants of every containment row
    (exact convex form). A pattern fixes signs per step: fixed steps get the
    one-sided rows plus the sign-consistency inequality; entries of 0 are
    unfixed and get the zero-slope half-width envelope, a relaxation of every
    descendant fixed problem.
    """
    return _build_problem(corridor, positions, init, l_ref, config, geometry,
                          sign_pattern, reduced=False)


def _build_problem(corridor: Corridor, positions: np.ndarray, init: InitialLateralState,
                   l_ref: np.ndarray, config: PlannerConfig, geometry: GeometryModel,
                   sign_pattern, reduced: bool) -> QpProblem:
    # reduced keeps only the extreme segment offsets per step: interior rows
    # share the rhs and interpolate the extreme coefficients, so they can
    # never bind without an extreme binding first (identical feasible set,
    # a third of the rows)
    k = corridor.k
    positions = np.asarray(positions, dtype=float)
    l_ref = np.asarray(l_ref, dtype=float)
    if l_ref.shape != (k,):
        raise ValueError(f"l_ref length {l_ref.shape} does not match {k} steps")
    if init.slope > config.slope_max + 1e-9 or init.slope < config.slope_min - 1e-9:
        raise ValueError("initial slope outside configured bounds")
    if not config.curv_min - 1e-9 <= init.curv <= config.curv_max + 1e-9:
        raise ValueError("initial curvature term outside configured bounds")
    pat = _validate_pattern(sign_pattern, k)
    ds = _advance_steps(positions, k)
    lam = config.lam
    offs = segment_offsets(lam)
    a, b = geometry.a, geometry.b
    nv = 4 * k

    # cost
    H = np.zeros((nv, nv))
    c = np.zeros(nv)
    li = 4 * np.arange(k)
    si = li + 1
    ci = li + 2
    ji = li + 3
    H[li, li] += 2.0 * config.w_ref
    c[li] -= 2.0 * config.w_ref * l_ref
    H[si, si] += 2.0 * config.w_slope
    H[ci, ci] += 2.0 * config.w_curv
    H[ji, ji] += 2.0 * config.w_jerk
    for idx, w in ((li, config.w_jump_l), (si, config.w_jump_slope)):
        for i in range(1, k):
            H[idx[i], idx[i]] += 2.0 * w
            H[idx[i - 1], idx[i - 1]] += 2.0 * w
            H[idx[i], idx[i - 1]] -= 2.0 * w
            H[idx[i - 1], idx[i]] -= 2.0 * w

    # Taylor-chain equalities; each step's rows use its own updated derivatives
    E = np.zeros((3 * k, nv))
    f = np.zeros(3 * k)
    for i in range(k):
        h = ds[i]
        r = 3 * i
        E[r, ci[i]] = 1.0
        E[r, ji[i]] = -h
        E[r + 1, si[i]] = 1.0
        E[r + 1, ci[i]] = -h
        E[r + 1, ji[i]] = -0.5 * h * h
        E[r + 2, li[i]] = 1.0
        E[r + 2, si[i]] = -h
        E[r + 2, ci[i]] = -0.5 * h * h
        E[r + 2, ji[i]] = -h ** 3 / 6.0
        if i == 0:
            f[r], f[r + 1], f[r + 2] = init.curv, init.slope, init.l
        else:
            E[r, ci[i - 1]] = -1.0
            E[r + 1, si[i - 1]] = -1.0
            E[r + 2, li[i - 1]] = -1.0

    # containment rows
    rows = []
    rhs = []
    margin = b + config.l_mar
    j_emit = tuple(range(lam)) if not reduced else tuple(sorted({0, lam - 1}))
    for i in range(k):
        cell = corridor.cells[i]
        drift = offs * (cell.cell_len / lam)
        ub_rhs = cell.l_ub - margin
        lb_rhs = -cell.l_lb - margin
        kappas = (1.0, -1.0) if pat is None else (float(pat[i]),)
        for kap in kappas:
            for j in j_emit:
                row = np.zeros(nv)
                row[li[i]] = 1.0
                row[si[i]] = kap * a + drift[j]
                rows.append(row)
                rhs.append(ub_rhs)
            for j in j_emit:
                row = np.zeros(nv)
                row[li[i]] = -1.0
                row[si[i]] = kap * a - drift[j]
                rows.append(row)
                rhs.append(lb_rhs)
    if pat is not None:
        for i in range(k):
            if pat[i] != 0:
                row = np.zeros(nv)
                row[si[i]] = -float(pat[i])
                rows.append(row)
                rhs.append(0.0)

    lb = np.empty(nv)
    ub = np.empty(nv)
    lb[li] = corridor.road_l_lb
    ub[li] = corridor.road_l_ub
    lb[si], ub[si] = config.slope_min, config.slope_max
    lb[ci], ub[ci] = config.curv_min, config.curv_max
    lb[ji], ub[ji] = config.jerk_min, config.jerk_max

    return QpProblem(H=H, c=c, A=np.array(rows), b=np.array(rhs), E=E, f=f, lb=lb, ub=ub)


def _unpack(x: np.ndarray, k: int):
    v = x.reshape(k, 4)
    return v[:, 0].copy(), v[:, 1].copy(), v[:, 2].copy(), v[:, 3].copy()


def _sign_violations(l, slope, corridor: Corridor, config: PlannerConfig,
                     geometry: GeometryModel, steps) -> np.ndarray:
    """Per-step worst violation of the one-sided rows with signs taken from the
    solution's own slopes."""
    offs = segment_offsets(config.lam)
    margin = geometry.b + config.l_mar
    out = np.zeros(len(steps))
    for n, i in enumerate(steps):
        cell = corridor.cells[i]
        drift = offs * (cell.cell_len / config.lam)
        half = geometry.a * abs(slope[i])
        ub_v = (l[i] + half + drift * slope[i]) - (cell.l_ub - margin)
        lb_v = (-l[i] + half - drift * slope[i]) - (-cell.l_lb - margin)
        out[n] = max(ub_v.max(), lb_v.max())
    return out


def _solution_from(x, result, k, l_ref, config, pattern=None, total_iters=None,
                   root=None) -> PathSolution:
    l, slope, curv, jerk = _unpack(x, k)
    signs = np.where(slope >= 0.0, 1, -1) if pattern is None else np.asarray(pattern, int)
    return PathSolution(
        l=l, slope=slope, curv=curv, jerk=jerk, k=signs,
        objective=objective_value(l, slope, curv, jerk, l_ref, config),
        qp_iterations=result.iterations if total_iters is None else total_iters,
        qp_residual=max(result.primal_residual, result.dual_residual),
        root_x=result.x if root is None else root.x,
        root_duals=result.duals if root is None else root.duals,
    )


def solve_convex_equivalent(corridor: Corridor, positions, init: InitialLateralState,
                            l_ref, config: PlannerConfig, geometry: GeometryModel,
                            tol: float = 1e-6, x0=None, y0=None) -> PathSolution:
    """Single QP with both sign variants of every containment row; defines the
    same feasible set as the exact sign-resolved problem."""
    problem = _build_problem(corridor, positions, init, l_ref, config, geometry,
                             None, reduced=True)
    res = solve_qp(problem, tol=tol, x0=x0, y0=y0)
    if res.status == QpStatus.INFEASIBLE:
        raise InfeasibleProblem("corridor admits no path (convex form)")
    if res.status != QpStatus.OPTIMAL:
        raise SolverFailure(f"QP engine returned {res.status.value}")
    return _solution_from(res.x, res, corridor.k, np.asarray(l_ref, float), config)


def _expand_duals(y_parent, k: int, lam: int, parent_fixed, child_fixed) -> np.ndarray:
    """Map a node's stacked duals onto a child with more fixed steps.

    Containment rows, equalities, and box rows line up positionally; the
    child's extra sign rows (kept sorted by step) start at zero."""
    cont = 2 * (1 if lam == 1 else 2) * k
    y_sign = dict(zip(parent_fixed, y_parent[cont:cont + len(parent_fixed)]))
    sign_block = np.array([y_sign.get(i, 0.0) for i in child_fixed])
    tail = y_parent[cont + len(parent_fixed):]
    return np.concatenate([y_parent[:cont], sign_block, tail])


def solve_branch_and_bound(corridor: Corridor, positions, init: InitialLateralState,
                           l_ref, config: PlannerConfig, geometry: GeometryModel,
                           tol: float = 1e-6, x0=None, y0=None) -> PathSolution:
    """Best-first search over slope-sign patterns.

    The root relaxes all sign coupling (envelope containment only — a pure QP
    whose value lower-bounds every fixed pattern). A sign-consistent relaxed
    solution is returned as-is; otherwise the sign pattern the root suggests is
    solved outright for an incumbent, and best-first branching — fixing the
    sign of the largest-slope violating step, children warm-started from the
    parent — prunes against it. Returned objective is within 1e-9 of the best
    over all sign patterns.
    """
    k = corridor.k
    lam = config.lam
    l_ref = np.asarray(l_ref, dtype=float)
    iters_total = 0

    def _node_solve(pattern, x0=None, y0=None):
        nonlocal iters_total
        problem = _build_problem(corridor, positions, init, l_ref, config, geometry,
                                 pattern, reduced=True)
        res = solve_qp(problem, tol=tol, x0=x0, y0=y0)
        iters_total += res.iterations
        if res.status == QpStatus.INFEASIBLE:
            return None
        if res.status != QpStatus.OPTIMAL:
            raise SolverFailure(f"QP engine returned {res.status.value} on a sign node")
        return res

    def _accept(pat, res):
        """res solves pat's relaxation and is sign-consistent: fill the free
        signs from its own slopes."""
        l, slope, _, _ = _unpack(res.x, k)
        filled = pat.copy()
        free = filled == 0
        filled[free] = np.where(slope[free] >= 0.0, 1, -1)
        return _solution_from(res.x, res, k, l_ref, config, pattern=filled,
                              total_iters=iters_total, root=root)

    root_pat = np.zeros(k, dtype=int)
    root = _node_solve(root_pat, x0=x0, y0=y0)
    if root is None:
        raise InfeasibleProblem("corridor admits no path (root relaxation)")

    incumbent = None  # (objective, pattern, result)

    def _note_leaf(pat, res):
        nonlocal incumbent
        if res is not None and (incumbent is None or res.objective < incumbent[0]):
            incumbent = (res.objective, pat, res)

    counter = 0
    dived: set[bytes] = set()
    heap = [(root.objective, counter, root_pat, root)]
    max_nodes = 2 ** (k + 1) + 16
    popped = 0
    while heap:
        popped += 1
        if popped > max_nodes:
            raise SolverFailure("sign search exceeded its node budget")
        bound, _, pat, res = heapq.heappop(heap)
        if incumbent is not None and bound >= incumbent[0] - 1e-9:
            return _accept(incumbent[1], incumbent[2])
        l, slope, curv, jerk = _unpack(res.x, k)
        unfixed = np.flatnonzero(pat == 0)
        if unfixed.size == 0:
            return _accept(pat, res)
        viol = _sign_violations(l, slope, corridor, config, geometry, unfixed)
        bad = unfixed[viol > _INTEGRAL_TOL]
        if bad.size == 0:
            return _accept(pat, res)

        fixed = np.flatnonzero(pat != 0)
        # dive: solve the full pattern this relaxation suggests outright; a
        # feasible leaf bounds the tree from above and prunes siblings early
        dive_pat = np.where(slope >= 0.0, 1, -1).astype(int)
        dive_pat[fixed] = pat[fixed]
        dive_key = dive_pat.tobytes()
        if dive_key not in dived:
            dived.add(dive_key)
            dive_y = _expand_duals(res.duals, k, lam, fixed, np.arange(k))
            _note_leaf(dive_pat, _node_solve(dive_pat, x0=res.x, y0=dive_y))
            # popped bound is the heap minimum, so a tight-enough dive ends it
            if incumbent is not None and bound >= incumbent[0] - 1e-9:
                return _accept(incumbent[1], incumbent[2])

        branch = bad[np.argmax(np.abs(slope[bad]))]
        lead = 1 if slope[branch] >= 0.0 else -1
        child_fixed = np.sort(np.append(fixed, branch))
        for kap in (lead, -lead):
            child_pat = pat.copy()
            child_pat[branch] = kap
            child_y = _expand_duals(res.duals, k, lam, fixed, child_fixed)
            child = _node_solve(child_pat, x0=res.x, y0=child_y)
            if child is None:
                continue
            if incumbent is not None and child.objective >= incumbent[0] - 1e-9:
                continue
            if np.all(child_pat != 0):
                _note_leaf(child_pat, child)
                continue
            counter += 1
            heapq.heappush(heap, (child.objective, counter, child_pat, child))

    if incumbent is not None:
        return _accept(incumbent[1], incumbent[2])
    raise InfeasibleProblem("every sign pattern is infeasible")


def _warm_vectors(warm: PathSolution | None, k: int, lam: int, mode: str):
    """Stretch a previous cycle's solution onto the current horizon: per-step
    variable blocks pad by repetition, root duals pad with zeros (layouts align
    only within one mode; anything else just skips the dual start)."""
    if warm is None:
        return None, None
    kw = warm.steps
    blocks = np.stack([warm.l, warm.slope, warm.curv, warm.jerk], axis=1)
    if kw >= k:
        xb = blocks[:k]
    else:
        xb = np.vstack([blocks, np.repeat(blocks[-1:], k - kw, axis=0)])
    x0 = xb.reshape(-1)

    y0 = None
    rps = (2 if mode == "bnb" else 4) * (1 if lam == 1 else 2)
    yd = warm.root_duals
    if yd is not None and yd.size == (rps + 7) * kw:
        def fit(block, width):
            if kw >= k:
                return block[:k]
            return np.vstack([block, np.zeros((k - kw, width))])
        cont = yd[:rps * kw].reshape(kw, rps)
        eq = yd[rps * kw:(rps + 3) * kw].reshape(kw, 3)
        box = yd[(rps + 3) * kw:].reshape(kw, 4)
        y0 = np.concatenate([fit(cont, rps).ravel(), fit(eq, 3).ravel(),
                             fit(box, 4).ravel()])
    return x0, y0


def extract_trajectory(solution: PathSolution, positions, ev_s: float,
                       t_start: float, dt: float) -> list[TrajectoryPoint]:
    """Map the solved offsets onto absolute arc-length positions and step times."""
    positions = np.asarray(positions, dtype=float)
    return [TrajectoryPoint(s=float(ev_s + positions[i]), l=float(solution.l[i]),
                            t=t_start + (i + 1) * dt)
            for i in range(solution.steps)]


def reference_offsets(corridor: Corridor, lane_centers, start_ref: float):
    """Per-step reference offsets: stay with the lane center nearest the running
    reference while it remains inside the cell; cells without any lane center
    fall back to their midpoint (without moving the running reference)."""
    refs = np.empty(corridor.k)
    ref = start_ref
    for i, cell in enumerate(corridor.cells):
        inside = [c for c in lane_centers if cell.l_lb <= c <= cell.l_ub]
        if inside:
            ref = min(inside, key=lambda c: (abs(c - ref), c))
            refs[i] = ref
        else:
            refs[i] = cell.center
    return refs, ref


def plan_cycle(view: Scenario, config: PlannerConfig, profile_provider=None,
               mode: str = "bnb", ref_hint: float | None = None,
               init_curv: float = 0.0, warm: PathSolution | None = None) -> PlanOutcome:
    """One full planning cycle over a horizon view of the scene.

    view.ev is the current ego state; SV tracks hold predicted poses on the
    config.dt grid from the view's own t=0. Stateless and reentrant: cross-cycle
    memory is limited to the explicit ref_hint / init_curv arguments.
    """
    if mode not in ("bnb", "convex"):
        raise ValueError(f"mode must be 'bnb' or 'convex', got {mode!r}")
    timings: dict[str, float] = {}
    t_all = time.perf_counter()

    t0 = time.perf_counter()
    if profile_provider is not None:
        profile = profile_provider(view, config)
    else:
        profile = constant_profile(max(view.ev.v, 0.5), config.n_steps, config.dt)
    positions = positions_from_profile(profile)
    timings["profile_ms"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    try:
        corridor = build_corridor(view, positions, profile, config)
    except CorridorEmpty as e:
        timings["corridor_ms"] = (time.perf_counter() - t0) * 1e3
        timings["optimize_ms"] = 0.0
        timings["total_ms"] = (time.perf_counter() - t_all) * 1e3
        return PlanOutcome(PlanStatus.CORRIDOR_EMPTY, None, None, None, profile, None,
                           timings, str(e))
    timings["corridor_ms"] = (time.perf_counter() - t0) * 1e3

    geometry = GeometryModel.from_dims(view.ev.width, view.ev.length,
                                       lam=config.lam, phi_max=config.heading_max)
    if ref_hint is None:
        ref_hint = min(view.road.lane_centers, key=lambda c: (abs(c - view.ev.l), c))
    l_ref, ref_last = reference_offsets(corridor, view.road.lane_centers, ref_hint)
    init = InitialLateralState(
        l=view.ev.l,
        slope=float(np.clip(np.tan(view.ev.heading), config.slope_min, config.slope_max)),
        curv=float(np.clip(init_curv, config.curv_min, config.curv_max)),
    )

    x0, y0 = _warm_vectors(warm, corridor.k, config.lam, mode)
    t0 = time.perf_counter()
    try:
        if mode == "bnb":
            solution = solve_branch_and_bound(corridor, positions, init, l_ref, config,
                                              geometry, tol=_PLAN_TOL, x0=x0, y0=y0)
        else:
            solution = solve_convex_equivalent(corridor, positions, init, l_ref, config,
                                               geometry, tol=_PLAN_TOL, x0=x0, y0=y0)
    except InfeasibleProblem as e:
        timings["optimize_ms"] = (time.perf_counter() - t0) * 1e3
        timings["total_ms"] = (time.perf_counter() - t_all) * 1e3
        return PlanOutcome(PlanStatus.INFEASIBLE, None, None, corridor, profile, ref_last,
                           timings, str(e), init)
    except (SolverFailure, ValueError) as e:
        timings["optimize_ms"] = (time.perf_counter() - t0) * 1e3
        timings["total_ms"] = (time.perf_counter() - t_all) * 1e3
        return PlanOutcome(PlanStatus.SOLVER_FAILURE, None, None, corridor, profile,
                           ref_last, timings, str(e), init)
    timings["optimize_ms"] = (time.perf_counter() - t0) * 1e3

    trajectory = extract_trajectory(solution, positions, view.ev.s, 0.0, config.dt)
    timings["total_ms"] = (time.perf_counter() - t_all) * 1e3
    return PlanOutcome(PlanStatus.SOLVED, solution, trajectory, corridor, profile,
                       ref_last, timings, init=init)
