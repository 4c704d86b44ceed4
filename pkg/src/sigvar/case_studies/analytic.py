"""One-dimensional study with uniform noise and known risk values.

The program is

    min  x    s.t.  P(xi - x <= 0) >= 1 - alpha,   x in [0, 1]

with xi ~ U(0, 1).  Because f = xi - x is a pure shift, every risk
functional of f at the optimum reduces to the same functional of xi,
and all four measures handled by this toolkit have closed (or cheaply
computable) forms.  That makes the study the calibration target for the
solver stack: sample-average results must land on printable constants.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from ..problem_model import StochasticProgram
from ..risk_measures import RiskLevel

__all__ = ["build_analytic", "analytic_closed_forms"]


def build_analytic() -> StochasticProgram:
    """The shift program min x s.t. P(xi - x <= 0) >= 1 - alpha."""

    def objective_det(x):
        return float(x[0]), np.ones(1)

    def cc_function(x, Y, Xi):
        vals = Xi[:, 0] - x[0]
        gx = np.full((Xi.shape[0], 1), -1.0)
        gy = np.zeros((Xi.shape[0], 0))
        return vals, gx, gy

    return StochasticProgram(
        name="analytic",
        n1=1,
        n2=0,
        x_bounds=[(0.0, 1.0)],
        y_bounds=np.zeros((0, 2)),
        cc_function=cc_function,
        objective_det=objective_det,
        x0=[0.5],
    )


def _evar_uniform(alpha: float) -> float:
    # inf over s > 0 of (1/s) log(E exp(s Z) / alpha) for Z ~ U(0,1);
    # E exp(sZ) = (e^s - 1)/s, written overflow-free via log1p.
    def g(s):
        return 1.0 + (math.log1p(-math.exp(-s)) - math.log(s)
                      - math.log(alpha)) / s

    res = minimize_scalar(g, bounds=(1e-8, 1e4), method="bounded",
                          options={"xatol": 1e-12})
    # the infimum is approached as s -> 0 when alpha = 1 (value: the mean)
    return min(float(res.fun), g(1e-8)) if alpha >= 1.0 else float(res.fun)


def _sigvar_mean_shift(t: float, mu: float, tau: float) -> float:
    # E[psi(Z - t)] for Z ~ U(0,1) using the antiderivative of the
    # smooth branch, F(u) = (2(1+mu)/mu)(u + log(mu + e^{-tau u})/tau) - u,
    # integrated over the part of [0,1] where the kernel is positive.
    delta = math.log(2.0 + mu) / tau
    lo = max(0.0, t - delta)
    if lo >= 1.0:
        return 0.0

    def F(u):
        expo = -tau * u
        if expo > 690.0:
            # e^{-tau u} dominates mu: log(mu + e^{-tau u}) ~= -tau u
            inner = expo + math.log1p(mu * math.exp(-expo))
        else:
            inner = math.log(mu + math.exp(expo))
        return (2.0 * (1.0 + mu) / mu) * (u + inner / tau) - u

    return F(1.0 - t) - F(lo - t)


def _sigvar_uniform(alpha: float, mu: float, tau: float) -> float:
    # Closed form of the shift t with E[psi(Z - t)] = alpha, valid when
    # the whole support beyond the shift lies on the smooth branch:
    #   t = (1/tau) [ log mu + log(e^tau - e^b) - log(e^b - 1) ],
    #   b = (alpha + 1) mu tau / (2 + 2 mu),
    # which holds iff alpha >= (2+2mu)/(mu tau) log((2+mu+mu e^tau)/(2+2mu)) - 1.
    log_a = np.logaddexp(math.log(2.0 + mu), math.log(mu) + tau)
    cond_rhs = (2.0 + 2.0 * mu) / (mu * tau) * (log_a - math.log(2.0 + 2.0 * mu)) - 1.0
    if alpha >= cond_rhs:
        b = (alpha + 1.0) * mu * tau / (2.0 + 2.0 * mu)
        # b < tau always since (alpha+1) mu < 2 + 2 mu for alpha <= 1
        return (math.log(mu) + tau + math.log1p(-math.exp(b - tau))
                - b - math.log1p(-math.exp(-b))) / tau
    # kernel clips to zero inside the support: solve the mean equation
    delta = math.log(2.0 + mu) / tau
    lo, hi = -delta, 1.0 + delta
    return float(brentq(lambda t: _sigvar_mean_shift(t, mu, tau) - alpha,
                        lo, hi, xtol=1e-14))


def analytic_closed_forms(level, params=None) -> dict:
    """Exact risk values of xi ~ U(0,1) at the given level.

    Returns a dict with keys var, cvar, evar and, when ``params`` (a
    SigVaRParams or anything with mu/tau attributes) is given, sigvar.
    Each equals the optimal objective of the study under the matching
    risk treatment.
    """
    alpha = float(RiskLevel(level).alpha)
    out = {
        "var": 1.0 - alpha,
        "cvar": 1.0 - alpha / 2.0,
        "evar": _evar_uniform(alpha),
    }
    if params is not None:
        out["sigvar"] = _sigvar_uniform(alpha, float(params.mu), float(params.tau))
    return out
