"""Exact chance-constrained SAA solutions on small instances.

A sample-average chance constraint with level alpha permits violating at
most k = floor(alpha * S) of the S scenarios.  Enlarging the exempt set
only enlarges the feasible region, so an optimal solution exists whose
exempt set has size exactly k; enumerating the C(S, k) subsets and
solving the scenario-robust restriction for each is therefore exact (up
to local optimality of the restricted solves, mitigated by multistart).
This is the reference the smooth approximations are judged against.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .nlp_solver import SolveStatus, SolverOptions, solve
from .problem_model import NLPEval, StochasticProgram, build_restricted

__all__ = [
    "OracleError",
    "OracleOptions",
    "OracleResult",
    "exempt_count",
    "solve_exact",
    "verify_candidate",
]


class OracleError(RuntimeError):
    """Enumeration rejected or no subset produced an optimal solve."""


@dataclass(frozen=True)
class OracleOptions:
    """Enumeration limits and the options passed to restricted solves.

    Subproblems default to multistart 5: restricted problems can be
    nonconvex, and the enumeration is only exact when each subset's
    solve finds its global optimum.
    """

    max_subsets: int = 10 ** 6
    solver: SolverOptions = field(
        default_factory=lambda: SolverOptions(multistart_count=5))

    def __post_init__(self):
        if self.max_subsets < 1:
            raise ValueError("max_subsets must be >= 1")


@dataclass(frozen=True)
class OracleResult:
    best_objective: float
    best_x: np.ndarray
    exempt: tuple
    n_subproblems: int
    log: list  # (subset, status string, objective) per subset


def exempt_count(count: int, alpha: float) -> int:
    """floor(alpha * S), guarded against float roundoff in the product."""
    return int(math.floor(alpha * count + 1e-9))


def solve_exact(prog: StochasticProgram, scen, level,
                opts: Optional[OracleOptions] = None) -> OracleResult:
    """Enumerate all size-k exempt subsets in lexicographic order and
    return the best restricted optimum.

    Ties in objective break toward the lexicographically smallest
    subset, so reruns are reproducible.
    """
    opts = opts or OracleOptions()
    alpha = float(getattr(level, "alpha", level))
    S = scen.count
    k = exempt_count(S, alpha)
    total = math.comb(S, k)
    if total > opts.max_subsets:
        raise OracleError(
            "C(%d, %d) = %d subsets exceeds max_subsets = %d"
            % (S, k, total, opts.max_subsets))

    log = []
    best = None  # (objective, subset, x)
    for subset in itertools.combinations(range(S), k):
        nlp = build_restricted(prog, scen, subset)
        rep = solve(nlp, opts=opts.solver)
        log.append((subset, rep.status.value, rep.objective))
        if rep.status is not SolveStatus.OPTIMAL:
            continue
        key = (rep.objective, subset)
        if best is None or key < (best[0], best[1]):
            best = (rep.objective, subset, rep.v[nlp.layout.x].copy())
    if best is None:
        raise OracleError(
            "no exempt subset yielded an optimal restricted solve "
            "(%d attempted)" % total)
    return OracleResult(best_objective=best[0], best_x=best[2],
                        exempt=best[1], n_subproblems=total, log=log)


class _RecourseNLP:
    """min_y f_s(x, y) subject to recourse rows and y bounds, for one
    scenario at fixed first stage.  Shaped for the solver's eval
    contract."""

    def __init__(self, prog, x, xi_row):
        self.prog = prog
        self.x = np.asarray(x, dtype=float)
        self.xi = np.asarray(xi_row, dtype=float).reshape(1, -1)
        self.n = prog.n2
        self.n_eq = 0
        q = prog.n_recourse_constraints
        self.n_ineq = q
        self.lb = prog.y_bounds[:, 0].copy()
        self.ub = prog.y_bounds[:, 1].copy()
        self.v0 = prog.default_y0(1).ravel()

    def eval(self, v, need_jac=True):
        Y = v.reshape(1, -1)
        fv, _, fgy = self.prog.cc_function(self.x, Y, self.xi)
        obj = float(fv[0])
        grad = np.asarray(fgy[0], dtype=float)
        c_eq = np.zeros(0)
        jac_eq = sp.csr_matrix((0, self.n))
        if self.n_ineq:
            hv, _, hgy = self.prog.recourse_constraints(self.x, Y, self.xi)
            c_in = np.asarray(hv[0], dtype=float)
            jac_in = sp.csr_matrix(np.asarray(hgy[0], dtype=float))
        else:
            c_in = np.zeros(0)
            jac_in = sp.csr_matrix((0, self.n))
        return NLPEval(obj, grad, c_eq, jac_eq, c_in, jac_in)

    def random_start(self, seed):
        rng = np.random.Generator(np.random.Philox(seed))
        lo = np.where(np.isfinite(self.lb), self.lb, -1.0)
        hi = np.where(np.isfinite(self.ub), self.ub, 1.0)
        return lo + rng.random(self.n) * (hi - lo)


def verify_candidate(prog: StochasticProgram, scen, level, x,
                     opts: Optional[OracleOptions] = None) -> dict:
    """Count empirical chance-constraint violations at first-stage x.

    With recourse, each scenario's f is first minimized over the
    recourse variables (a scenario counts as satisfied if any recourse
    makes f <= 0).  A violation is f above a small scale-aware threshold
    so that constraints binding at solver tolerance do not count.
    Scenarios whose recourse solve fails are counted as violated and
    listed under "failures".
    """
    opts = opts or OracleOptions()
    alpha = float(getattr(level, "alpha", level))
    x = np.asarray(x, dtype=float)
    lo, hi = prog.x_bounds[:, 0], prog.x_bounds[:, 1]
    if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
        raise ValueError("x violates its bounds")
    S = scen.count
    failures = []
    if prog.n2 == 0:
        Y = np.zeros((S, 0))
        fv, _, _ = prog.cc_function(x, Y, scen.samples)
        f = np.asarray(fv, dtype=float)
    else:
        f = np.empty(S)
        for s in range(S):
            nlp = _RecourseNLP(prog, x, scen.samples[s])
            rep = solve(nlp, opts=opts.solver)
            if rep.status is SolveStatus.OPTIMAL:
                f[s] = rep.objective
            else:
                f[s] = np.inf
                failures.append((s, rep.status.value))
    tol = 1e-6 * (1.0 + float(np.max(np.abs(f[np.isfinite(f)]), initial=0.0)))
    count = int(np.sum(f > tol))
    return {
        "feasible": count <= exempt_count(S, alpha),
        "violation_count": count,
        "empirical_prob": 1.0 - count / S,
        "failures": failures,
    }
