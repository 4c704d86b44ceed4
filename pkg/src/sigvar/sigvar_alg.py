"""Continuation scheme driving the sigmoidal approximation to sharpness.

The conservative hinge (CVaR) stage is solved once; its optimal shift
t_c calibrates gamma = -1/t_c, which fixes the slope schedule
tau = gamma * (mu + 1) / 2 for the whole run.  The sigmoid parameter mu
then grows geometrically from bar_mu toward a target, each stage solved
from the previous stage's solution.  The hinge solution is feasible for
the first sigmoidal stage by construction, and each sharper kernel
relaxes the feasible set, so a locally solvable chain yields a
non-increasing objective and an empirical violation probability that
approaches the risk level from below.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .nlp_solver import SolveStatus, SolverOptions, solve
from .problem_model import (
    StochasticProgram,
    build_cvar_saa,
    build_sigvar_saa,
    estimate_cvar_multipliers,
    estimate_sigvar_multipliers,
)
from .risk_kernels import SigVaRParams, bar_mu
from .risk_measures import RiskLevel, SampleVector, var, violation_probability

__all__ = [
    "ContinuationError",
    "ContinuationOptions",
    "ContinuationTrace",
    "IterationRecord",
    "run",
    "summarize",
]

log = logging.getLogger(__name__)


class ContinuationError(RuntimeError):
    """Fatal continuation failure (hinge stage unusable, or a stage
    failed with stop_on_failure set)."""


@dataclass(frozen=True)
class ContinuationOptions:
    """Schedule parameters and per-stage solver options.

    lam is the geometric growth factor for mu (> 1); mu_target ends the
    schedule (the stage whose mu first reaches it is still solved).
    stop_on_failure=False keeps the last successful stage when a solve
    fails mid-run; True raises instead.  hinge_start, when given, seeds
    the hinge stage: the assembly starts from that first-stage point
    (recourse policy filling the scenario block) with multipliers
    estimated from the start's vertex structure.  stage_seed, when
    given, is called as stage_seed(mu, tau) before each sigmoidal stage
    and may return a first-stage point to seed that stage the same way;
    returning None keeps the default chaining from the previous stage's
    solution.
    """

    alpha: float
    lam: float = 2.0
    mu_target: float = 320.0
    solver: SolverOptions = field(default_factory=SolverOptions)
    stop_on_failure: bool = False
    hinge_start: Optional[np.ndarray] = None
    stage_seed: Optional[object] = None

    def __post_init__(self):
        level = self.alpha if isinstance(self.alpha, RiskLevel) \
            else RiskLevel(float(self.alpha))
        object.__setattr__(self, "alpha", level)
        if not self.lam > 1.0:
            raise ValueError("lam must be > 1")
        if self.mu_target < bar_mu():
            raise ValueError("mu_target must be >= bar_mu() = %.6f" % bar_mu())


@dataclass(frozen=True)
class IterationRecord:
    """One stage of the run; mu and tau are NaN on the hinge record."""

    ell: int
    mu: float
    tau: float
    objective: float
    x: np.ndarray
    empirical_var_of_f: float
    empirical_violation_prob: float
    status: str
    wall_time: float


@dataclass(frozen=True)
class ContinuationTrace:
    records: list
    gamma: float
    lam: float
    mu_target: float
    alpha: float
    truncated: bool

    @property
    def iterations(self) -> int:
        """Number of sigmoidal stages recorded (the hinge row is ell 0)."""
        return self.records[-1].ell

    @property
    def final(self) -> IterationRecord:
        return self.records[-1]


def _assess(nlp, v, level):
    z = nlp.cc_values(v)
    sample = SampleVector(z)
    return var(sample, level), violation_probability(sample)


def run(prog: StochasticProgram, scen,
        opts: ContinuationOptions) -> ContinuationTrace:
    """Execute the continuation; the trace always starts with the hinge
    record and is returned truncated when a later stage fails."""
    level = opts.alpha
    alpha = level.alpha

    if opts.hinge_start is not None:
        x_start = np.asarray(opts.hinge_start, dtype=float)
        nlp_c = build_cvar_saa(prog, scen, level, x0=x_start)
        lam_c = estimate_cvar_multipliers(nlp_c)
        rep_c = solve(nlp_c, opts=opts.solver, lam0=lam_c)
    else:
        nlp_c = build_cvar_saa(prog, scen, level)
        rep_c = solve(nlp_c, opts=opts.solver)
    if rep_c.status is not SolveStatus.OPTIMAL:
        raise ContinuationError(
            "hinge stage did not certify: %s (%s)"
            % (rep_c.status.value, rep_c.message))
    t_c = float(rep_c.v[nlp_c.layout.t])
    if t_c >= -1e-8:
        raise ContinuationError(
            "hinge shift t_c = %.3e is not negative; the slope "
            "calibration gamma = -1/t_c is undefined or explosive "
            "(the constraint is too easy at this risk level)" % t_c)
    gamma = -1.0 / t_c

    x_prev = rep_c.v[nlp_c.layout.x].copy()
    y_prev = nlp_c.layout.y_matrix(rep_c.v).copy() if prog.n2 else None
    lam_prev = rep_c.multipliers_unscaled()
    var_c, viol_c = _assess(nlp_c, rep_c.v, level)
    records = [IterationRecord(
        ell=0, mu=math.nan, tau=math.nan, objective=rep_c.objective,
        x=x_prev.copy(), empirical_var_of_f=var_c,
        empirical_violation_prob=viol_c, status=rep_c.status.value,
        wall_time=rep_c.wall_time)]

    truncated = False
    mu = bar_mu()
    ell = 1
    while True:
        tau = gamma * (mu + 1.0) / 2.0
        seed = opts.stage_seed(mu, tau) if opts.stage_seed is not None else None
        if seed is not None:
            nlp = build_sigvar_saa(prog, scen, SigVaRParams(mu, tau), level,
                                   x0=np.asarray(seed, dtype=float))
            lam_stage = estimate_sigvar_multipliers(nlp)
        else:
            nlp = build_sigvar_saa(prog, scen, SigVaRParams(mu, tau), level,
                                   x0=x_prev, y0=y_prev)
            lam_stage = lam_prev
            if ell == 1:
                # the hinge solution must satisfy the first sigmoidal stage
                ev = nlp.eval(nlp.v0, need_jac=False)
                slack = 1e-5 * (1.0 + float(np.max(np.abs(ev.c_ineq), initial=0.0)))
                assert ev.c_ineq.size == 0 or float(ev.c_ineq.min()) >= -slack, \
                    "hinge solution infeasible at the first sigmoidal stage " \
                    "(worst row %.3e)" % float(ev.c_ineq.min())
        rep = solve(nlp, opts=opts.solver, lam0=lam_stage)
        var_f, viol = _assess(nlp, rep.v, level)
        records.append(IterationRecord(
            ell=ell, mu=mu, tau=tau, objective=rep.objective,
            x=rep.v[nlp.layout.x].copy(), empirical_var_of_f=var_f,
            empirical_violation_prob=viol, status=rep.status.value,
            wall_time=rep.wall_time))

        if rep.status is not SolveStatus.OPTIMAL:
            if opts.stop_on_failure:
                raise ContinuationError(
                    "stage %d (mu=%.3f) failed: %s (%s)"
                    % (ell, mu, rep.status.value, rep.message))
            log.warning("stage %d (mu=%.3f) failed with %s; keeping the "
                        "last successful stage", ell, mu, rep.status.value)
            truncated = True
            break

        # conservatism: a certified stage never violates more than alpha
        assert viol <= alpha + 1e-9, \
            "violation probability %.6f exceeds alpha %.6f" % (viol, alpha)
        prev_obj = records[-2].objective
        if rep.objective > prev_obj + 1e-6 * (1.0 + abs(prev_obj)):
            log.warning("objective rose at stage %d: %.8g -> %.8g (local "
                        "solves only promise monotonicity at global optima)",
                        ell, prev_obj, rep.objective)

        x_prev = rep.v[nlp.layout.x].copy()
        y_prev = nlp.layout.y_matrix(rep.v).copy() if prog.n2 else None
        lam_prev = rep.multipliers_unscaled()
        if mu >= opts.mu_target:
            break
        mu *= opts.lam
        ell += 1

    return ContinuationTrace(records=records, gamma=gamma, lam=opts.lam,
                             mu_target=opts.mu_target, alpha=alpha,
                             truncated=truncated)


def summarize(trace: ContinuationTrace) -> list:
    """Table rows (ell, mu, tau, objective, empirical VaR of f, empirical
    P(f <= 0)) for every record including the hinge row."""
    if not trace.records:
        raise ValueError("empty trace")
    rows = []
    for r in trace.records:
        rows.append({
            "ell": r.ell,
            "mu": r.mu,
            "tau": r.tau,
            "objective": r.objective,
            "var": r.empirical_var_of_f,
            "prob": 1.0 - r.empirical_violation_prob,
        })
    return rows
