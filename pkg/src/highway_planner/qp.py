"""Dense convex QP engine.

minimize 0.5 x'Hx + c'x  subject to  A x <= b,  E x = f,  lb <= x <= ub

All constraints are stacked into l <= M x <= u and solved by operator-splitting
iterations (diagonal equilibration, cached normal-equation factorization,
adaptive step size), with primal-infeasibility detected from the divergence
pattern of the dual displacement. Converged iterates are polished by solving
the KKT system of the detected active set, which lands well below the
requested tolerance whenever the active set is identified correctly.

Feasible sets here are bounded (the caller supplies box bounds), so dual
infeasibility / unboundedness is out of scope.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg

__all__ = ["QpProblem", "QpResult", "QpStatus", "KktReport", "solve_qp", "check_kkt"]


class QpStatus(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    ITERATION_LIMIT = "IterationLimit"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True, eq=False)
class QpProblem:
    H: np.ndarray
    c: np.ndarray
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    E: np.ndarray | None = None
    f: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        c = np.asarray(self.c, dtype=float)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValueError(f"H must be square, got {H.shape}")
        n = H.shape[0]
        if c.shape != (n,):
            raise ValueError(f"c shape {c.shape} does not match n={n}")
        scale = max(1.0, float(np.abs(H).max()) if H.size else 1.0)
        if float(np.abs(H - H.T).max()) > 1e-10 * scale:
            raise ValueError("H must be symmetric (within 1e-10)")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "c", c)
        for mat, vec, mname, vname in ((self.A, self.b, "A", "b"), (self.E, self.f, "E", "f")):
            if (mat is None) != (vec is None):
                raise ValueError(f"{mname} and {vname} must be given together")
            if mat is not None:
                m = np.asarray(mat, dtype=float)
                v = np.asarray(vec, dtype=float)
                if m.ndim != 2 or m.shape[1] != n:
                    raise ValueError(f"{mname} must have {n} columns, got {m.shape}")
                if v.shape != (m.shape[0],):
                    raise ValueError(f"{vname} shape {v.shape} does not match {mname} rows")
                object.__setattr__(self, mname, m)
                object.__setattr__(self, vname, v)
        for bname, default in (("lb", -np.inf), ("ub", np.inf)):
            bv = getattr(self, bname)
            arr = np.full(n, default) if bv is None else np.asarray(bv, dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{bname} shape {arr.shape} does not match n={n}")
            object.__setattr__(self, bname, arr)
        if np.any(self.lb > self.ub):
            raise ValueError("lb exceeds ub")

    @property
    def n(self) -> int:
        return self.H.shape[0]


@dataclass(frozen=True, eq=False)
class QpResult:
    status: QpStatus
    x: np.ndarray | None
    objective: float | None
    iterations: int
    primal_residual: float
    dual_residual: float
    duals: np.ndarray | None = None       # stacked rows: [A; E; box]
    infeasibility: float | None = None    # certificate strength when Infeasible


@dataclass(frozen=True)
class KktReport:
    stationarity: float
    primal: float
    complementarity: float

    @property
    def max_residual(self) -> float:
        return max(self.stationarity, self.primal, self.complementarity)


def _stack(p: QpProblem) -> tuple[np.ndarray, np.ndarray, np.ndarray, int, int]:
    """Rows of l <= Mx <= u in the order [A; E; box]; returns (M, l, u, mA, mE)."""
    n = p.n
    blocks, lows, ups = [], [], []
    mA = mE = 0
    if p.A is not None:
        mA = p.A.shape[0]
        blocks.append(p.A)
        lows.append(np.full(mA, -np.inf))
        ups.append(p.b)
    if p.E is not None:
        mE = p.E.shape[0]
        blocks.append(p.E)
        lows.append(p.f)
        ups.append(p.f)
    blocks.append(np.eye(n))
    lows.append(p.lb)
    ups.append(p.ub)
    return np.vstack(blocks), np.concatenate(lows), np.concatenate(ups), mA, mE


def _kkt_core(l, u, mx, stat_vec, y):
    """(stationarity, primal, complementarity) norms from precomputed products."""
    stat = float(np.abs(stat_vec).max())
    over = np.where(np.isfinite(u), mx - u, -np.inf)
    under = np.where(np.isfinite(l), l - mx, -np.inf)
    prim = float(max(over.max(initial=0.0), under.max(initial=0.0), 0.0))
    eq = np.isfinite(l) & np.isfinite(u) & (u - l < 1e-14)
    yp = np.maximum(y, 0.0)
    ym = np.maximum(-y, 0.0)
    slack_u = np.where(np.isfinite(u), np.maximum(u - mx, 0.0), np.inf)
    slack_l = np.where(np.isfinite(l), np.maximum(mx - l, 0.0), np.inf)
    # a dual pushing on an infinite bound is itself the violation
    comp_u = np.where(np.isfinite(u), yp * np.where(np.isfinite(u), slack_u, 0.0), yp)
    comp_l = np.where(np.isfinite(l), ym * np.where(np.isfinite(l), slack_l, 0.0), ym)
    comp_u[eq] = 0.0
    comp_l[eq] = 0.0
    comp = float(max(comp_u.max(initial=0.0), comp_l.max(initial=0.0)))
    return stat, prim, comp


def _kkt_terms(H, c, M, l, u, x, y):
    """(stationarity, primal, complementarity) residual norms at (x, y)."""
    stat_vec = H @ x + c + (M.T @ y if M.size else 0.0)
    mx = M @ x if M.size else np.empty(0)
    return _kkt_core(l, u, mx, stat_vec, y)


def check_kkt(p: QpProblem, x: np.ndarray, duals: np.ndarray) -> KktReport:
    """Evaluate first-order optimality residuals directly from the problem data.

    duals follow the stacked row order [A; E; box] with the usual sign
    convention: >= 0 pushing on upper bounds, <= 0 on lower bounds, free on
    equalities.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (p.n,):
        raise ValueError(f"x shape {x.shape} does not match n={p.n}")
    M, l, u, _, _ = _stack(p)
    y = np.asarray(duals, dtype=float)
    if y.shape != (M.shape[0],):
        raise ValueError(f"duals shape {y.shape} does not match {M.shape[0]} stacked rows")
    stat, prim, comp = _kkt_terms(p.H, p.c, M, l, u, x, y)
    return KktReport(stationarity=stat, primal=prim, complementarity=comp)


def _ruiz_scale(H, c, M, l, u, iters: int = 10):
    """Diagonal equilibration of the stacked data plus a cost normalization."""
    n = H.shape[0]
    m = M.shape[0]
    d = np.ones(n)
    e = np.ones(m)
    gamma = 1.0
    Hs, cs, Ms = H.copy(), c.copy(), M.copy()
    ls, us = l.copy(), u.copy()
    for _ in range(iters):
        col = np.maximum(np.abs(Hs).max(axis=0, initial=0.0),
                         np.abs(Ms).max(axis=0, initial=0.0))
        col[col == 0.0] = 1.0
        dd = 1.0 / np.sqrt(col)
        row = np.abs(Ms).max(axis=1, initial=0.0) if m else np.empty(0)
        row[row == 0.0] = 1.0
        de = 1.0 / np.sqrt(row)
        Hs *= dd[:, None] * dd[None, :]
        cs *= dd
        Ms *= de[:, None] * dd[None, :]
        ls *= de
        us *= de
        d *= dd
        e *= de
        cost = max(np.abs(Hs).max(axis=0, initial=0.0).mean(), np.abs(cs).max(initial=0.0))
        if cost > 0.0:
            g = 1.0 / cost
            Hs *= g
            cs *= g
            gamma *= g
    return Hs, cs, Ms, ls, us, d, e, gamma


_SIGMA = 1e-6
_ALPHA = 1.6
_RHO_MIN, _RHO_MAX = 1e-6, 1e6
_RHO_EQ_SCALE = 1e3
_CHECK_EVERY = 25
_LOOSE_TOL = 1e-3    # once past this, polish may already verify at the strict tol
_INF_WINDOW = 500    # iterations before a divergence certificate is trusted
_INF_TOL = 1e-4


def _active_mask(l0, u0, mx, y):
    """Rows treated as equalities by polish: true equalities plus bounds that
    are touched or carry a nonzero multiplier."""
    eq = np.isfinite(l0) & np.isfinite(u0) & (u0 - l0 < 1e-14)
    tol_act = 1e-7
    low = ~eq & np.isfinite(l0) & ((y < -tol_act) | (mx - l0 < tol_act * (1.0 + np.abs(l0))))
    up = ~eq & np.isfinite(u0) & ((y > tol_act) | (u0 - mx < tol_act * (1.0 + np.abs(u0))))
    return eq | low | up, eq, up


def _factor(Hs, Ms, rho, sigma):
    G = Hs + sigma * np.eye(Hs.shape[0])
    if Ms.shape[0]:
        G = G + (Ms.T * rho) @ Ms
    return scipy.linalg.cho_factor(G, lower=True, check_finite=False)


def _explicit_inverse(ch):
    # for long solves one dgemv per iteration beats two triangular solves;
    # the splitting iterates tolerate the extra rounding
    return scipy.linalg.cho_solve(ch, np.eye(ch[0].shape[0]), check_finite=False)


def solve_qp(p: QpProblem, tol: float = 1e-6, max_iter: int = 20000,
             x0: np.ndarray | None = None, y0: np.ndarray | None = None) -> QpResult:
    """Solve the QP to the requested KKT tolerance.

    Optional x0/y0 warm starts (y0 in stacked row order) shorten the splitting
    phase; results are unaffected. Raises ValueError on malformed input or an
    indefinite H.
    """
    if tol <= 0.0:
        raise ValueError(f"tol must be positive, got {tol}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter}")
    n = p.n
    try:
        np.linalg.cholesky(p.H + 1e-8 * np.eye(n))
    except np.linalg.LinAlgError:
        raise ValueError("H is not positive semidefinite (eigenvalue below -1e-8)") from None

    M0, l0, u0, _, _ = _stack(p)
    m = M0.shape[0]

    Hs, cs, Ms, ls, us, d_scale, e_scale, gamma = _ruiz_scale(p.H, p.c, M0, l0, u0)
    eq_rows = np.isfinite(ls) & np.isfinite(us) & (us - ls < 1e-14)

    rho_base = 0.1
    rho = np.full(m, rho_base)
    rho[eq_rows] *= _RHO_EQ_SCALE
    factor = _factor(Hs, Ms, rho, _SIGMA)

    if x0 is not None:
        x = np.asarray(x0, dtype=float)
        if x.shape != (n,):
            raise ValueError(f"x0 shape does not match n={n}")
        x = x / d_scale
    else:
        x = np.zeros(n)
    z = Ms @ x
    np.clip(z, ls, us, out=z)
    if y0 is not None:
        y = np.asarray(y0, dtype=float)
        if y.shape != (m,):
            raise ValueError(f"y0 shape does not match {m} stacked rows")
        y = gamma * (y / e_scale)
    else:
        y = np.zeros(m)

    MsT = np.ascontiguousarray(Ms.T)
    best = None
    failed_sig = None
    inv = None
    iters_done = 0
    y_prev = y.copy()

    for it in range(1, max_iter + 1):
        rhs = _SIGMA * x - cs + MsT @ (rho * z - y)
        if inv is None:
            if it > 100:
                inv = _explicit_inverse(factor)
                x_t = inv @ rhs
            else:
                x_t = scipy.linalg.cho_solve(factor, rhs, check_finite=False)
        else:
            x_t = inv @ rhs
        z_t = Ms @ x_t
        x = _ALPHA * x_t + (1.0 - _ALPHA) * x
        z_mid = _ALPHA * z_t + (1.0 - _ALPHA) * z
        z_new = np.clip(z_mid + y / rho, ls, us)
        y_prev, y = y, y + rho * (z_mid - z_new)
        z = z_new
        iters_done = it

        if not (it % _CHECK_EVERY == 0 or it == max_iter):
            continue
        if not np.all(np.isfinite(x)):
            return QpResult(status=QpStatus.NUMERICAL_FAILURE, x=None, objective=None,
                            iterations=it, primal_residual=np.inf, dual_residual=np.inf)

        # residuals in the original data scale
        xu = d_scale * x
        zu = z / e_scale
        yu = (e_scale * y) / gamma
        mx = M0 @ xu
        r_prim = float(np.abs(mx - zu).max(initial=0.0))
        hx = p.H @ xu
        aty = M0.T @ yu
        stat_vec = hx + p.c + aty
        r_dual = float(np.abs(stat_vec).max())
        if best is None or r_prim + r_dual < best[0]:
            best = (r_prim + r_dual, xu.copy(), yu.copy(), r_prim, r_dual)

        # acceptance is absolute: the returned point must carry a verified KKT
        # error <= tol. Polish usually gets there long before the splitting
        # iterates do, so try it once the iterates are merely ballpark-close.
        err_raw = max(_kkt_core(l0, u0, mx, stat_vec, yu))
        loose_p = _LOOSE_TOL * (1.0 + max(np.abs(mx).max(initial=0.0),
                                          np.abs(zu).max(initial=0.0)))
        loose_d = _LOOSE_TOL * (1.0 + max(np.abs(hx).max(initial=0.0),
                                          np.abs(p.c).max(initial=0.0),
                                          np.abs(aty).max(initial=0.0)))
        if err_raw <= tol or (r_prim <= loose_p and r_dual <= loose_d):
            # retry polish only once the guessed active set changes; repeating
            # it on the same rows would just refactor the same failed system
            sig = _active_mask(l0, u0, mx, yu)[0].tobytes()
            if err_raw <= tol or sig != failed_sig:
                err_pol = np.inf
                px, py = _polish(p, M0, l0, u0, xu, yu)
                if px is not None:
                    err_pol = max(_kkt_terms(p.H, p.c, M0, l0, u0, px, py))
                if min(err_raw, err_pol) <= tol:
                    if err_pol < err_raw:
                        xu, yu, err = px, py, err_pol
                    else:
                        err = err_raw
                    return QpResult(status=QpStatus.OPTIMAL, x=xu,
                                    objective=float(0.5 * xu @ p.H @ xu + p.c @ xu),
                                    iterations=it, primal_residual=err,
                                    dual_residual=err, duals=yu)
                failed_sig = sig

        if it >= _INF_WINDOW:
            dy = (e_scale * (y - y_prev)) / gamma
            dy_norm = float(np.abs(dy).max(initial=0.0))
            if dy_norm > 1e-12:
                support = 0.0
                certificate = float(np.abs(M0.T @ dy).max()) <= _INF_TOL * dy_norm
                for i in range(m):
                    if dy[i] > 0.0:
                        if np.isinf(u0[i]):
                            if dy[i] > _INF_TOL * dy_norm:
                                certificate = False
                                break
                        else:
                            support += u0[i] * dy[i]
                    elif dy[i] < 0.0:
                        if np.isinf(l0[i]):
                            if -dy[i] > _INF_TOL * dy_norm:
                                certificate = False
                                break
                        else:
                            support += l0[i] * dy[i]
                if certificate and support < -_INF_TOL * dy_norm:
                    return QpResult(status=QpStatus.INFEASIBLE, x=None, objective=None,
                                    iterations=it, primal_residual=r_prim,
                                    dual_residual=r_dual, infeasibility=float(-support / dy_norm))

        if it % (2 * _CHECK_EVERY) == 0:
            # rebalance the step size toward equal normalized residuals
            sp = r_prim / max(np.abs(mx).max(initial=0.0),
                              np.abs(zu).max(initial=0.0), 1e-30)
            sd = r_dual / max(np.abs(hx).max(initial=0.0), np.abs(p.c).max(initial=0.0),
                              np.abs(aty).max(initial=0.0), 1e-30)
            ratio = np.sqrt(sp / max(sd, 1e-30))
            if ratio > 5.0 or ratio < 0.2:
                rho_base = float(np.clip(rho_base * ratio, _RHO_MIN, _RHO_MAX))
                rho = np.full(m, rho_base)
                rho[eq_rows] *= _RHO_EQ_SCALE
                factor = _factor(Hs, Ms, rho, _SIGMA)
                inv = _explicit_inverse(factor) if inv is not None else None

    _, xb, yb, rp, rd = best
    return QpResult(status=QpStatus.ITERATION_LIMIT, x=xb,
                    objective=float(0.5 * xb @ p.H @ xb + p.c @ xb),
                    iterations=iters_done, primal_residual=rp, dual_residual=rd, duals=yb)


def _polish(p, M0, l0, u0, x, y):
    """Equality-solve on the detected active set with regularization + refinement."""
    m = M0.shape[0]
    if m == 0:
        return None, None
    mx = M0 @ x
    active, eq, up = _active_mask(l0, u0, mx, y)
    ka = int(active.sum())
    if ka == 0:
        return None, None
    Ma = M0[active]
    ba = np.where(eq | up, u0, l0)[active]

    n = p.n
    delta = 1e-9
    K = np.zeros((n + ka, n + ka))
    K[:n, :n] = p.H + delta * np.eye(n)
    K[:n, n:] = Ma.T
    K[n:, :n] = Ma
    K[n:, n:] = -delta * np.eye(ka)
    rhs = np.concatenate([-p.c, ba])
    try:
        lu = scipy.linalg.lu_factor(K, check_finite=False)
        sol = scipy.linalg.lu_solve(lu, rhs, check_finite=False)
        # refine against the unregularized system; a rank-deficient active set
        # can make refinement diverge, so keep only improving steps
        K0 = K.copy()
        K0[:n, :n] = p.H
        K0[n:, n:] = 0.0
        res = float(np.abs(rhs - K0 @ sol).max())
        for _ in range(3):
            cand = sol + scipy.linalg.lu_solve(lu, rhs - K0 @ sol, check_finite=False)
            cand_res = float(np.abs(rhs - K0 @ cand).max())
            if not np.isfinite(cand_res) or cand_res >= res:
                break
            sol, res = cand, cand_res
    except (scipy.linalg.LinAlgError, ValueError):
        return None, None
    if not np.all(np.isfinite(sol)):
        return None, None
    px = sol[:n]
    py = np.zeros(m)
    py[active] = sol[n:]
    return px, py
