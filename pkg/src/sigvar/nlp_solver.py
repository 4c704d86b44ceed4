"""Bound-constrained augmented Lagrangian solver for the SAA problems.

The outer loop carries multiplier estimates for the equality rows
(c = 0) and inequality rows (c >= 0) and minimizes the augmented
Lagrangian

    L(v) = f(v) - lam_eq.c_eq + (rho/2)|c_eq|^2
         + (1/(2 rho)) sum_i (max(0, lam_i - rho c_i)^2 - lam_i^2)

over the box with a limited-memory quasi-Newton inner loop (projected
line search).  Multipliers update when the violation measure beats the
current target, otherwise the penalty grows; the schedule follows the
classic bound-constrained Lagrangian recipe.

Everything runs in a scaled space: the objective is divided by
max(1, |grad f(v0)|_inf) and each constraint row by max(1, its gradient
row inf-norm at v0), which tames the steep sigmoid rows whose slope
grows like tau.  KKT residuals are reported in this scaled space.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from .problem_model import EvaluationError, SmoothNLP

__all__ = [
    "KKTResiduals",
    "Scaling",
    "SolveReport",
    "SolveStatus",
    "SolverOptions",
    "check_kkt",
    "finite_diff_check",
    "solve",
]

ARMIJO = 1e-4
MEMORY = 10
MAX_BACKTRACKS = 30
PAIR_SKIP = 1e-10
PENALTY_CAP = 1e10


class SolveStatus(Enum):
    OPTIMAL = "Optimal"
    ITER_LIMIT = "IterLimit"
    INFEASIBLE = "Infeasible"
    NUMERICAL_FAILURE = "NumericalFailure"


_STATUS_RANK = {
    SolveStatus.OPTIMAL: 0,
    SolveStatus.ITER_LIMIT: 1,
    SolveStatus.INFEASIBLE: 2,
    SolveStatus.NUMERICAL_FAILURE: 3,
}


@dataclass(frozen=True)
class SolverOptions:
    kkt_tol: float = 1e-6
    max_outer: int = 50
    max_inner: int = 500
    initial_penalty: float = 10.0
    penalty_growth: float = 10.0
    multiplier_bounds: float = 1e12
    multistart_count: int = 1
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.kkt_tol < 1.0):
            raise ValueError("kkt_tol must lie in (0, 1)")
        for name in ("max_outer", "max_inner", "multistart_count"):
            if getattr(self, name) < 1:
                raise ValueError("%s must be a positive integer" % name)
        for name in ("initial_penalty", "penalty_growth", "multiplier_bounds"):
            if getattr(self, name) <= 0.0:
                raise ValueError("%s must be positive" % name)
        if self.penalty_growth <= 1.0:
            raise ValueError("penalty_growth must exceed 1")


@dataclass(frozen=True)
class KKTResiduals:
    stationarity: float
    feasibility: float
    complementarity: float

    def max(self) -> float:
        return max(self.stationarity, self.feasibility, self.complementarity)

    def within(self, tol: float) -> bool:
        return self.max() <= tol


@dataclass(frozen=True)
class Scaling:
    """Objective and constraint-row scale factors (all multiplicative)."""

    f: float
    eq: np.ndarray
    ineq: np.ndarray


@dataclass
class SolveReport:
    status: SolveStatus
    v: np.ndarray
    objective: float
    kkt: KKTResiduals
    outer_iters: int
    inner_iters: int
    wall_time: float
    multipliers_eq: np.ndarray
    multipliers_ineq: np.ndarray
    scaling: Scaling
    log: List[Tuple[int, int, int, float, float, float]] = field(default_factory=list)
    message: str = ""
    start_index: int = 0

    LOG_HEADER = ("iter", "outer", "inner", "obj", "stat_res", "feas_res")

    def multipliers_unscaled(self):
        """Multipliers of the original (unscaled) problem."""
        sc = self.scaling
        return (self.multipliers_eq * sc.eq / sc.f,
                self.multipliers_ineq * sc.ineq / sc.f)


def _maxabs(a) -> float:
    return float(np.max(np.abs(a))) if np.size(a) else 0.0


def _row_inf_norms(J) -> np.ndarray:
    if J.shape[0] == 0:
        return np.zeros(0)
    A = J.copy()
    A.data = np.abs(A.data)
    return np.asarray(A.max(axis=1).todense()).ravel()


def make_scaling(nlp: SmoothNLP, v0: np.ndarray) -> Scaling:
    """Scale factors from gradient magnitudes at the start point."""
    ev = nlp.eval(v0)
    f = 1.0 / max(1.0, _maxabs(ev.grad))
    eq = 1.0 / np.maximum(1.0, _row_inf_norms(ev.jac_eq))
    ineq = 1.0 / np.maximum(1.0, _row_inf_norms(ev.jac_ineq))
    return Scaling(f=f, eq=eq, ineq=ineq)


def _al_value(ev, lam_eq, lam_in, rho, sc):
    """Augmented Lagrangian value and the scaled pieces it used."""
    ce = sc.eq * ev.c_eq
    ci = sc.ineq * ev.c_ineq
    w = np.maximum(0.0, lam_in - rho * ci)
    val = sc.f * ev.obj
    if ce.size:
        val += -lam_eq @ ce + 0.5 * rho * (ce @ ce)
    if ci.size:
        val += (w @ w - lam_in @ lam_in) / (2.0 * rho)
    return float(val), ce, ci, w


def _al_grad(ev, lam_eq, ce, w, rho, sc):
    g = sc.f * ev.grad
    if ce.size:
        g = g - ev.jac_eq.T @ ((lam_eq - rho * ce) * sc.eq)
    if w.size:
        g = g - ev.jac_ineq.T @ (w * sc.ineq)
    return np.asarray(g).ravel()


def _lagrangian_grad(ev, lam_eq, lam_in, sc):
    g = sc.f * ev.grad
    if lam_eq.size:
        g = g - ev.jac_eq.T @ (lam_eq * sc.eq)
    if lam_in.size:
        g = g - ev.jac_ineq.T @ (lam_in * sc.ineq)
    return np.asarray(g).ravel()


def _two_loop(mem, g, dinv):
    """L-BFGS two-loop recursion with a diagonal H0 = theta * dinv,
    theta fitted to the newest pair."""
    q = g.copy()
    alphas = []
    for s, y, inv_sy in reversed(mem):
        a = inv_sy * (s @ q)
        alphas.append(a)
        q -= a * y
    s, y, inv_sy = mem[-1]
    theta = (s @ y) / max(y @ (dinv * y), 1e-300)
    q *= min(max(theta, 1e-12), 1e12) * dinv
    for (s, y, inv_sy), a in zip(mem, reversed(alphas)):
        b = inv_sy * (y @ q)
        q += (a - b) * s
    return q


def _al_diag(nlp, v, ev, lam_eq, ce, w, rho, sc):
    """Diagonal model of the augmented Lagrangian Hessian: identity plus
    the Gauss-Newton term rho * sum over (active) scaled rows of the
    squared Jacobian entries, plus any closed-form row curvature the
    assembly exposes (steep kernel rows need it; their second
    derivatives grow with the square of the sharpness parameter, which
    first-order information cannot see).  Used as a preconditioner;
    fixes the curvature gap between first-stage variables (touched by
    every scenario row) and per-scenario variables."""
    diag = np.ones(ev.grad.size)
    if ev.c_eq.size:
        A = ev.jac_eq.copy()
        A.data = A.data ** 2
        diag += rho * np.asarray(A.T @ (sc.eq ** 2)).ravel()
    if ev.c_ineq.size:
        A = ev.jac_ineq.copy()
        A.data = A.data ** 2
        diag += rho * np.asarray(A.T @ ((w > 0.0) * sc.ineq ** 2)).ravel()
    curv = getattr(nlp, "hess_diag_rows", None)
    if curv is not None:
        weights_eq = (lam_eq - rho * ce) * sc.eq if ce.size else ce
        diag += np.maximum(0.0, curv(v, weights_eq, w * sc.ineq))
    return diag


@dataclass
class _InnerResult:
    v: np.ndarray
    ev: object
    val: float
    ce: np.ndarray
    ci: np.ndarray
    grad: np.ndarray
    pg_norm: float
    iters: int
    flag: str  # converged | maxiter | stall | nonfinite
    mem: object = None


def _inner_minimize(nlp, v, lam_eq, lam_in, rho, omega, sc, lb, ub, max_inner,
                    mem=None):
    """Minimize the augmented Lagrangian over the box from v.

    mem carries quasi-Newton pairs from an interrupted run of the same
    subproblem; resuming with them keeps the curvature picture (the
    minimizer sits in a narrow valley coupling the first-stage variables
    to every scenario, and relearning that from scratch is what makes
    restarts expensive)."""
    try:
        ev = nlp.eval(v)
    except (EvaluationError, FloatingPointError):
        return _InnerResult(v, None, np.inf, None, None, None, np.inf, 0, "nonfinite")
    val, ce, ci, w = _al_value(ev, lam_eq, lam_in, rho, sc)
    if not np.isfinite(val):
        return _InnerResult(v, ev, val, ce, ci, None, np.inf, 0, "nonfinite")
    g = _al_grad(ev, lam_eq, ce, w, rho, sc)
    dinv = 1.0 / _al_diag(nlp, v, ev, lam_eq, ce, w, rho, sc)
    if mem is None:
        mem = deque(maxlen=MEMORY)
    iters = 0
    flag = "maxiter"
    while iters < max_inner:
        pg_norm = _maxabs(v - np.clip(v - g, lb, ub))
        if pg_norm <= omega:
            flag = "converged"
            break
        iters += 1

        # outward-pointing components at active bounds are frozen
        act = ((v <= lb) & (g > 0.0)) | ((v >= ub) & (g < 0.0))
        ge = np.where(act, 0.0, g)
        tried_steepest = not mem
        if mem:
            d = -_two_loop(mem, ge, dinv)
            d[act] = 0.0
            step0 = 1.0
        else:
            d = -ge * dinv
            step0 = 1.0

        accepted = False
        for attempt in range(2):
            a = step0
            for _ in range(MAX_BACKTRACKS):
                vt = np.clip(v + a * d, lb, ub)
                stepvec = vt - v
                if not np.any(stepvec):
                    break
                dec = float(g @ stepvec)
                if dec < 0.0:
                    try:
                        evt = nlp.eval(vt)
                        valt, cet, cit, wt = _al_value(evt, lam_eq, lam_in, rho, sc)
                    except (EvaluationError, FloatingPointError):
                        valt = np.nan
                    # sufficient decrease, with an allowance for roundoff
                    # noise in the merit value near convergence
                    noise = 10.0 * np.finfo(float).eps * (1.0 + abs(val))
                    if np.isfinite(valt) and valt <= val + ARMIJO * dec + noise:
                        # monotone merit decrease within the inner loop
                        assert valt <= val + 1e-8 * (1.0 + abs(val))
                        gt = _al_grad(evt, lam_eq, cet, wt, rho, sc)
                        s = stepvec
                        y = gt - g
                        sy = float(s @ y)
                        if sy > PAIR_SKIP * np.linalg.norm(s) * np.linalg.norm(y):
                            mem.append((s, y, 1.0 / sy))
                        v, ev, val, ce, ci, g = vt, evt, valt, cet, cit, gt
                        dinv = 1.0 / _al_diag(nlp, v, evt, lam_eq, cet, wt, rho, sc)
                        accepted = True
                        break
                a *= 0.5
            if accepted or tried_steepest:
                break
            # quasi-Newton direction failed its line search; retry with
            # preconditioned steepest descent (memory kept: one bad
            # direction does not invalidate the curvature pairs)
            d = -ge * dinv
            step0 = 1.0
            tried_steepest = True
        if not accepted:
            flag = "stall"
            break
    pg_norm = _maxabs(v - np.clip(v - g, lb, ub))
    return _InnerResult(v, ev, val, ce, ci, g, pg_norm, iters, flag, mem)


def _solve_single(nlp, v0, opts, start_index, lam0=None):
    lb, ub = nlp.lb, nlp.ub
    v = np.clip(np.asarray(v0, dtype=float), lb, ub)
    t0 = time.perf_counter()

    def fail(msg, ev=None, lam_eq=None, lam_in=None, sc=None, log=None,
             outer=0, inner_total=0):
        obj = float(ev.obj) if ev is not None else np.nan
        ne = nlp.n_eq if lam_eq is None else lam_eq.size
        ni = nlp.n_ineq if lam_in is None else lam_in.size
        return SolveReport(
            status=SolveStatus.NUMERICAL_FAILURE, v=v, objective=obj,
            kkt=KKTResiduals(np.inf, np.inf, np.inf), outer_iters=outer,
            inner_iters=inner_total, wall_time=time.perf_counter() - t0,
            multipliers_eq=np.zeros(ne) if lam_eq is None else lam_eq,
            multipliers_ineq=np.zeros(ni) if lam_in is None else lam_in,
            scaling=sc if sc is not None else Scaling(1.0, np.ones(nlp.n_eq), np.ones(nlp.n_ineq)),
            log=log or [], message=msg, start_index=start_index)

    try:
        sc = make_scaling(nlp, v)
    except (EvaluationError, FloatingPointError) as exc:
        return fail("evaluation failed at the start point: %s" % exc)

    if lam0 is None:
        lam_eq = np.zeros(nlp.n_eq)
        lam_in = np.zeros(nlp.n_ineq)
    else:
        # warm multipliers arrive in physical units; move them into the
        # scaled space this solve works in
        lam_eq = np.asarray(lam0[0], dtype=float) * (sc.f / sc.eq)
        lam_in = np.maximum(0.0, np.asarray(lam0[1], dtype=float)) * (sc.f / sc.ineq)
        cap = opts.multiplier_bounds
        lam_eq = np.clip(lam_eq, -cap, cap)
        lam_in = np.minimum(lam_in, cap)
    rho = opts.initial_penalty
    omega = max(1.0 / rho, 0.5 * opts.kkt_tol)
    eta = max(rho ** -0.1, 0.5 * opts.kkt_tol)

    log = []
    inner_total = 0
    stall_count = 0
    last_increase_V = np.inf
    status = SolveStatus.ITER_LIMIT
    message = "outer iteration limit reached"
    kkt = KKTResiduals(np.inf, np.inf, np.inf)
    outer_done = 0

    mem = None
    for outer in range(1, opts.max_outer + 1):
        res = _inner_minimize(nlp, v, lam_eq, lam_in, rho, omega, sc,
                              lb, ub, opts.max_inner, mem=mem)
        inner_total += res.iters
        outer_done = outer
        mem = None
        if res.flag == "nonfinite":
            return fail("non-finite evaluation the solver could not step around",
                        ev=res.ev, lam_eq=lam_eq, lam_in=lam_in, sc=sc,
                        log=log, outer=outer, inner_total=inner_total)
        v, ev, ce, ci = res.v, res.ev, res.ce, res.ci

        feas = max(_maxabs(ce), _maxabs(np.minimum(ci, 0.0)))
        if ci.size:
            V = max(_maxabs(ce), _maxabs(np.minimum(ci, lam_in / rho)))
        else:
            V = _maxabs(ce)
        log.append((len(log) + 1, outer, res.iters, float(ev.obj),
                    res.pg_norm, feas))

        if res.flag == "maxiter":
            # The subproblem was not solved to its tolerance.  Updating
            # multipliers from a non-stationary point corrupts the
            # estimates, and raising the penalty makes the subproblem
            # harder still; carry the same subproblem (and the curvature
            # pairs already learned) into the next round instead.
            mem = res.mem
            continue

        if V <= eta:
            lam_eq = lam_eq - rho * ce
            lam_in = np.maximum(0.0, lam_in - rho * ci)
            bound = max(_maxabs(lam_eq), _maxabs(lam_in))
            if bound > opts.multiplier_bounds:
                return fail("multiplier estimate exceeded its bound (%.1e)" % bound,
                            ev=ev, lam_eq=lam_eq, lam_in=lam_in, sc=sc,
                            log=log, outer=outer, inner_total=inner_total)
            gL = _lagrangian_grad(ev, lam_eq, lam_in, sc)
            stat = _maxabs(v - np.clip(v - gL, lb, ub))
            comp = _maxabs(lam_in * ci) if ci.size else 0.0
            kkt = KKTResiduals(stat, feas, comp)
            if kkt.within(opts.kkt_tol):
                status = SolveStatus.OPTIMAL
                message = "first-order conditions met"
                break
            omega = max(omega / rho, 0.5 * opts.kkt_tol)
            eta = max(eta / rho ** 0.9, 0.5 * opts.kkt_tol)
        else:
            if rho >= PENALTY_CAP:
                stall_count += 1
                if stall_count >= 2 and feas > opts.kkt_tol and \
                        V > 0.1 * last_increase_V:
                    status = SolveStatus.INFEASIBLE
                    message = ("feasibility stalled at %.3e with penalty %.1e"
                               % (feas, rho))
                    gL = _lagrangian_grad(ev, lam_eq, lam_in, sc)
                    stat = _maxabs(v - np.clip(v - gL, lb, ub))
                    comp = _maxabs(lam_in * ci) if ci.size else 0.0
                    kkt = KKTResiduals(stat, feas, comp)
                    break
            last_increase_V = V
            rho *= opts.penalty_growth
            omega = max(1.0 / rho, 0.5 * opts.kkt_tol)
            eta = max(rho ** -0.1, 0.5 * opts.kkt_tol)
    else:
        gL = _lagrangian_grad(ev, lam_eq, lam_in, sc)
        stat = _maxabs(v - np.clip(v - gL, lb, ub))
        feas = max(_maxabs(ce), _maxabs(np.minimum(ci, 0.0)))
        comp = _maxabs(lam_in * ci) if ci.size else 0.0
        kkt = KKTResiduals(stat, feas, comp)

    return SolveReport(
        status=status, v=v, objective=float(ev.obj), kkt=kkt,
        outer_iters=outer_done, inner_iters=inner_total,
        wall_time=time.perf_counter() - t0, multipliers_eq=lam_eq,
        multipliers_ineq=lam_in, scaling=sc, log=log, message=message,
        start_index=start_index)


def solve(nlp: SmoothNLP, v0: Optional[np.ndarray] = None,
          opts: Optional[SolverOptions] = None, lam0=None) -> SolveReport:
    """Solve the assembled NLP; multistart returns the best report.

    The first start is v0 (default: the builder's start point); start k
    draws a fresh point from nlp.random_start(seed + k).  Reports are
    ranked by (status, objective, start index), so an Optimal report with
    the lowest objective wins.

    lam0, when given, is a pair (multipliers_eq, multipliers_ineq) in
    physical units used to warm-start the first start's multiplier
    estimates (warm continuation runs pass the previous level's values).
    Random starts always begin from zero multipliers.
    """
    opts = opts or SolverOptions()
    if v0 is None:
        if nlp.v0 is None:
            raise ValueError("nlp has no start point; pass v0")
        v0 = nlp.v0
    reports = [_solve_single(nlp, v0, opts, 0, lam0=lam0)]
    for k in range(1, opts.multistart_count):
        vk = nlp.random_start(opts.seed + k)
        reports.append(_solve_single(nlp, vk, opts, k))

    def rank(r):
        obj = r.objective if np.isfinite(r.objective) else np.inf
        return (_STATUS_RANK[r.status], obj, r.start_index)

    return min(reports, key=rank)


def check_kkt(nlp: SmoothNLP, v: np.ndarray, lam_eq, lam_in,
              scaling: Optional[Scaling] = None) -> KKTResiduals:
    """First-order residuals at (v, multipliers); pure.

    Without a Scaling this works in the unscaled space; pass
    report.scaling to reproduce a solve's reported residuals.
    """
    lam_eq = np.asarray(lam_eq, dtype=float).ravel()
    lam_in = np.asarray(lam_in, dtype=float).ravel()
    if lam_eq.size != nlp.n_eq or lam_in.size != nlp.n_ineq:
        raise ValueError("multiplier dimensions (%d, %d) do not match the "
                         "problem (%d, %d)"
                         % (lam_eq.size, lam_in.size, nlp.n_eq, nlp.n_ineq))
    sc = scaling or Scaling(1.0, np.ones(nlp.n_eq), np.ones(nlp.n_ineq))
    ev = nlp.eval(np.asarray(v, dtype=float))
    ce = sc.eq * ev.c_eq
    ci = sc.ineq * ev.c_ineq
    gL = _lagrangian_grad(ev, lam_eq, lam_in, sc)
    stat = _maxabs(v - np.clip(v - gL, nlp.lb, nlp.ub))
    feas = max(_maxabs(ce), _maxabs(np.minimum(ci, 0.0)))
    comp = _maxabs(lam_in * ci) if ci.size else 0.0
    return KKTResiduals(stat, feas, comp)


@dataclass(frozen=True)
class FDReport:
    max_rel_error: float
    worst_component: int
    worst_block: str  # "objective" | "eq" | "ineq"


def finite_diff_check(nlp: SmoothNLP, v: np.ndarray,
                      components=None) -> FDReport:
    """Central-difference check of the gradient and both Jacobians.

    Step h_i = cbrt(machine eps) * max(1, |v_i|) per component; the
    relative error of a derivative pair (fd, an) is
    |fd - an| / max(1, |an|, |fd|).  Returns the worst component over
    the objective gradient and every constraint row.  The point should
    be interior (each component is nudged off any bound by 2 h_i first).
    """
    v = np.asarray(v, dtype=float).copy()
    h0 = float(np.cbrt(np.finfo(float).eps))
    hs = h0 * np.maximum(1.0, np.abs(v))
    v = np.clip(v, nlp.lb + 2 * hs, nlp.ub - 2 * hs)
    ev = nlp.eval(v)
    Jeq = ev.jac_eq.toarray() if nlp.n_eq else None
    Jin = ev.jac_ineq.toarray() if nlp.n_ineq else None
    idx = range(nlp.layout.n) if components is None else components
    worst = (0.0, -1, "objective")
    for i in idx:
        h = hs[i]
        vp = v.copy(); vp[i] += h
        vm = v.copy(); vm[i] -= h
        ep = nlp.eval(vp, need_jac=False)
        em = nlp.eval(vm, need_jac=False)
        scale = 1.0 / (2.0 * h)
        fd = (ep.obj - em.obj) * scale
        an = ev.grad[i]
        err = abs(fd - an) / max(1.0, abs(an), abs(fd))
        if err > worst[0]:
            worst = (err, i, "objective")
        if nlp.n_eq:
            fdv = (ep.c_eq - em.c_eq) * scale
            anv = Jeq[:, i]
            errs = np.abs(fdv - anv) / np.maximum.reduce(
                [np.ones_like(fdv), np.abs(anv), np.abs(fdv)])
            j = int(np.argmax(errs))
            if errs[j] > worst[0]:
                worst = (float(errs[j]), i, "eq")
        if nlp.n_ineq:
            fdv = (ep.c_ineq - em.c_ineq) * scale
            anv = Jin[:, i]
            errs = np.abs(fdv - anv) / np.maximum.reduce(
                [np.ones_like(fdv), np.abs(anv), np.abs(fdv)])
            j = int(np.argmax(errs))
            if errs[j] > worst[0]:
                worst = (float(errs[j]), i, "ineq")
    return FDReport(max_rel_error=worst[0], worst_component=worst[1],
                    worst_block=worst[2])
