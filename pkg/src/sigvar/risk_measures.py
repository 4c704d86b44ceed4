"""Empirical risk measures of a scalar sample.

All measures operate on a SampleVector (finite, non-empty 1-d sample of
constraint values z, where z > 0 means violation) at a RiskLevel alpha in
(0, 1].  Conventions:

* ``var``    smallest sample value t with  #{z <= t}/S >= 1 - alpha
             (a pure order statistic, no interpolation)
* ``cvar``   inf_t { t + E[z - t]+ / alpha }, solved exactly by sorting;
             returns the value together with the minimizing t
* ``evar``   inf_{t>0} log(E[e^{t z}] / alpha) / t  via golden section
             on log t with log-sum-exp throughout
* ``sigvar`` smallest t with E[psi(z - t)] <= alpha for the hinged
             sigmoidal kernel psi

For any sample the ordering var <= cvar <= evar holds, and
sigvar >= var.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .risk_kernels import (
    SigVaRParams,
    SSParams,
    eval_bernstein_kernel,
    eval_cvar_kernel,
    eval_dc_kernel,
    eval_sigmoid,
    eval_sigvar_kernel,
    eval_ss_kernel,
)

__all__ = [
    "EvarBracketError",
    "RiskLevel",
    "SampleVector",
    "cvar",
    "evar",
    "expected_kernel",
    "sigvar",
    "var",
    "violation_probability",
]


class EvarBracketError(RuntimeError):
    """The EVaR search bracket does not contain the minimizer."""


@dataclass(frozen=True)
class RiskLevel:
    """Violation probability budget alpha in (0, 1]."""

    alpha: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and 0.0 < self.alpha <= 1.0):
            raise ValueError("alpha must lie in (0, 1], got %r" % (self.alpha,))


class SampleVector:
    """Immutable 1-d sample of finite floats.

    Parameters
    ----------
    values : array_like
        Non-empty 1-d collection of finite values.
    """

    __slots__ = ("values",)

    def __init__(self, values):
        arr = np.asarray(values, dtype=float)
        if arr.ndim != 1:
            raise ValueError("sample must be 1-d, got shape %r" % (arr.shape,))
        if arr.size == 0:
            raise ValueError("sample must be non-empty")
        if not np.all(np.isfinite(arr)):
            raise ValueError("sample must be finite")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("SampleVector is immutable")

    def __len__(self):
        return int(self.values.size)

    def __repr__(self):
        return "SampleVector(n=%d, min=%g, max=%g)" % (
            len(self), self.values.min(), self.values.max())


def _allowed_exceedances(n: int, alpha: float) -> int:
    """Number of sample points allowed above the VaR level: floor(n alpha).

    The small epsilon absorbs floating error in n * alpha when the product
    is an exact integer (e.g. 1000 * 0.05).
    """
    return int(math.floor(n * alpha + 1e-9))


def violation_probability(sample: SampleVector) -> float:
    """Fraction of strictly positive sample values."""
    return float(np.mean(sample.values > 0.0))


def var(sample: SampleVector, level: RiskLevel) -> float:
    """Empirical value-at-risk: the (S - floor(S alpha))-th order statistic.

    Equivalently the smallest sample point t with empirical CDF
    F(t) >= 1 - alpha.  At alpha = 1 this is the sample minimum.
    """
    z = np.sort(sample.values)
    n = z.size
    k = n - _allowed_exceedances(n, level.alpha)
    k = max(k, 1)
    return float(z[k - 1])


def cvar(sample: SampleVector, level: RiskLevel) -> tuple[float, float]:
    """Empirical conditional value-at-risk and its minimizing t.

    Solves inf_t { t + mean([z - t]+) / alpha } exactly: the objective is
    piecewise linear with breakpoints at the sample points and the
    empirical (1 - alpha)-quantile is always a minimizer (the minimizing
    set can be an interval; the quantile is the canonical choice).

    Returns
    -------
    (value, t_star) : tuple of float
    """
    t_star = var(sample, level)
    excess = np.maximum(sample.values - t_star, 0.0)
    value = t_star + float(np.mean(excess)) / level.alpha
    return value, t_star


def evar(sample: SampleVector, level: RiskLevel) -> float:
    """Empirical entropic value-at-risk.

    Minimizes g(t) = [logsumexp(t z) - log S - log alpha] / t over t > 0
    by golden section on log t in [-20, 20], refined to relative
    tolerance 1e-8.  log-sum-exp keeps every evaluation finite for
    arbitrarily large t z.

    At alpha = 1 the infimum is approached as t -> 0 with limit mean(z);
    by convention the returned value is the numeric infimum floored at
    the sample mean (this keeps cvar <= evar exact at alpha = 1).

    Raises
    ------
    EvarBracketError
        If the bracket endpoints still slope steeply downward outward,
        i.e. the minimizer lies outside [e^-20, e^20].
    """
    z = sample.values
    log_s = math.log(z.size)
    log_alpha = math.log(level.alpha)

    def g(u):
        t = math.exp(u)
        w = t * z
        m = w.max()
        lse = m + math.log(np.sum(np.exp(w - m)))
        val = (lse - log_s - log_alpha) / t
        if not math.isfinite(val):
            raise EvarBracketError("EVaR objective non-finite at log t = %g" % u)
        return val

    lo, hi = -20.0, 20.0
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = g(c), g(d)
    while (b - a) > 1e-8 * max(1.0, abs(a), abs(b)):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = g(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = g(d)
    u_star, val = (c, fc) if fc < fd else (d, fd)

    # a minimizer pressed against an endpoint with significant residual
    # slope means the true infimum escapes the bracket
    for edge in (lo, hi):
        if abs(u_star - edge) < 1e-4:
            probe = g(edge + 1e-3 if edge == lo else edge - 1e-3)
            drop = probe - g(edge)
            if drop > 1e-6 * (1.0 + abs(val)):
                raise EvarBracketError(
                    "EVaR minimizer escapes the bracket at log t = %g" % edge)
            val = min(val, g(edge))

    if level.alpha == 1.0:
        val = max(val, float(np.mean(z)))
    return val


def sigvar(sample: SampleVector, level: RiskLevel, params: SigVaRParams) -> float:
    """Empirical sigmoidal value-at-risk.

    Returns the smallest t with mean(psi(z - t)) <= alpha, where psi is
    the hinged sigmoidal kernel.  The map t -> mean(psi(z - t)) is
    continuous and non-increasing, so the root is found by bracket
    expansion followed by bisection to absolute tolerance
    1e-10 * max(1, |t|).

    If alpha >= 1 + 2/mu the constraint is vacuous (the kernel never
    exceeds that bound); the lower bracket end is returned with a
    RuntimeWarning.
    """
    z = sample.values
    alpha = level.alpha
    delta = params.delta
    lo = float(z.min()) - delta - 1.0

    if alpha >= 1.0 + 2.0 / params.mu:
        warnings.warn(
            "alpha = %g exceeds the kernel upper bound 1 + 2/mu = %g; the "
            "sigvar constraint is vacuous" % (alpha, 1.0 + 2.0 / params.mu),
            RuntimeWarning)
        return lo

    def mean_kernel(t):
        return float(np.mean(eval_sigvar_kernel(z - t, params)))

    hi = float(z.max()) + 1.0
    step = 1.0 + delta
    while mean_kernel(hi) > alpha:
        hi += step
        step *= 2.0
    # invariant: mean_kernel(lo) > alpha >= mean_kernel(hi)
    while (hi - lo) > 1e-10 * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        if mean_kernel(mid) <= alpha:
            hi = mid
        else:
            lo = mid
    return hi


def expected_kernel(sample: SampleVector, kernel: str, params=None) -> float:
    """Sample mean of a named kernel applied to the sample.

    Parameters
    ----------
    sample : SampleVector
    kernel : str
        One of "indicator", "cvar", "bernstein", "sigmoid", "sigvar",
        "ss", "dc".
    params : optional
        SigVaRParams for "sigmoid"/"sigvar", SSParams for "ss", a positive
        float epsilon for "dc"; ignored for the parameter-free kernels.

    Notes
    -----
    The mean uses numpy's pairwise reduction, so the summation order is
    fixed and results are reproducible across runs.
    """
    z = sample.values
    if kernel == "indicator":
        return float(np.mean(z > 0.0))
    if kernel == "cvar":
        return float(np.mean(eval_cvar_kernel(z)))
    if kernel == "bernstein":
        return float(np.mean(eval_bernstein_kernel(z)))
    if kernel == "sigmoid":
        return float(np.mean(eval_sigmoid(z, params)))
    if kernel == "sigvar":
        return float(np.mean(eval_sigvar_kernel(z, params)))
    if kernel == "ss":
        return float(np.mean(eval_ss_kernel(z, params)))
    if kernel == "dc":
        return float(np.mean(eval_dc_kernel(z, params)))
    raise ValueError("unknown kernel %r" % (kernel,))
