"""Scalar kernels that bound or smooth the step indicator 1_{[0,inf)}(z).

A chance constraint P(f(x, xi) <= 0) >= 1 - alpha can be rewritten as
E[1_{[0,inf)}(f(x, xi))] <= alpha.  Replacing the discontinuous indicator
with a majorizing kernel psi (psi(z) >= 1_{[0,inf)}(z) for all z) gives a
conservative, smooth surrogate E[psi(f)] <= alpha.  This module provides
the kernel family used throughout the package:

* ``eval_cvar_kernel``      hinge kernel  [1 + z]+           (CVaR)
* ``eval_bernstein_kernel`` exponential kernel  e^z          (Bernstein)
* ``eval_sigvar_kernel``    hinged, scaled sigmoid (SigVaR)
* ``eval_ss_kernel``        smooth sigmoidal kernel
* ``eval_dc_kernel``        difference-of-hinges kernel
* ``eval_sigmoid``          the plain scaled sigmoid underlying SigVaR

plus the parameter maps between the CVaR/SS kernels and the SigVaR kernel
and the analytic error bound for the SigVaR approximation.

All evaluators accept scalars or numpy arrays and are overflow-safe: the
sigmoid exponents are clamped at +-EXPONENT_LIMIT, which reproduces the
exact limiting kernel values (0 on the far left, 1 + 2/mu on the far
right) instead of overflowing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "EXPONENT_LIMIT",
    "SigVaRParams",
    "SSParams",
    "bar_mu",
    "eval_bernstein_kernel",
    "eval_cvar_kernel",
    "eval_dc_kernel",
    "eval_sigmoid",
    "eval_sigvar_kernel",
    "eval_sigvar_kernel_smooth_derivative",
    "eval_ss_kernel",
    "error_bound",
    "map_cvar_to_sigvar",
    "map_ss_to_sigvar",
]

# exp() overflows near 709.8; clamping at 700 keeps every intermediate finite
EXPONENT_LIMIT = 700.0


@dataclass(frozen=True)
class SigVaRParams:
    """Shape parameters of the sigmoidal kernel.

    Parameters
    ----------
    mu : float
        Steepness/offset parameter, must be positive.  The kernel's upper
        bound is 1 + 2/mu, so large mu flattens the overshoot.
    tau : float
        Scaling parameter, must be positive.  Large tau sharpens the kernel
        toward the step indicator.
    """

    mu: float
    tau: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.tau)):
            raise ValueError("SigVaRParams must be finite, got mu=%r tau=%r"
                             % (self.mu, self.tau))
        if self.mu <= 0 or self.tau <= 0:
            raise ValueError("SigVaRParams requires mu > 0 and tau > 0, got "
                             "mu=%r tau=%r" % (self.mu, self.tau))

    @property
    def delta(self) -> float:
        """Width of the hinge region: the kernel is exactly 0 for z <= -delta."""
        return math.log(2.0 + self.mu) / self.tau


@dataclass(frozen=True)
class SSParams:
    """Shape parameters (rho, m1, m2) of the smooth sigmoidal kernel.

    Requires rho > 0 and 0 < m2 <= m1; the kernel then majorizes the step
    indicator.
    """

    rho: float
    m1: float
    m2: float

    def __post_init__(self):
        vals = (self.rho, self.m1, self.m2)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("SSParams must be finite, got %r" % (vals,))
        if self.rho <= 0 or self.m2 <= 0 or self.m2 > self.m1:
            raise ValueError("SSParams requires rho > 0 and 0 < m2 <= m1, "
                             "got rho=%r m1=%r m2=%r" % vals)


def _as_checked_array(z):
    """Validate z is finite; return (array, was_scalar)."""
    arr = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("kernel input must be finite")
    return arr, arr.ndim == 0


def _maybe_scalar(out, scalar):
    return float(out) if scalar else out


def eval_cvar_kernel(z):
    """Hinge kernel [1 + z]+, the tightest convex majorant of the indicator."""
    arr, scalar = _as_checked_array(z)
    return _maybe_scalar(np.maximum(1.0 + arr, 0.0), scalar)


def eval_bernstein_kernel(z):
    """Exponential kernel e^z (clamped at the overflow limit)."""
    arr, scalar = _as_checked_array(z)
    return _maybe_scalar(np.exp(np.minimum(arr, EXPONENT_LIMIT)), scalar)


def eval_sigmoid(z, params: SigVaRParams):
    """Scaled sigmoid (1 + mu) / (mu + e^{-tau z}).

    Ranges over (0, (1 + mu)/mu) and equals 1 at z = 0.
    """
    arr, scalar = _as_checked_array(z)
    expo = np.clip(-params.tau * arr, -EXPONENT_LIMIT, EXPONENT_LIMIT)
    return _maybe_scalar((1.0 + params.mu) / (params.mu + np.exp(expo)), scalar)


def eval_sigvar_kernel(z, params: SigVaRParams):
    """Hinged sigmoidal kernel [2 (1 + mu) / (mu + e^{-tau z}) - 1]+.

    Properties: the kernel is 0 for z <= -delta with
    delta = log(2 + mu)/tau, equals 1 at z = 0, majorizes the step
    indicator 1_{[0,inf)}, and is bounded above by 1 + 2/mu.

    Parameters
    ----------
    z : float or array_like
        Evaluation points; must be finite.
    params : SigVaRParams
        Kernel shape (mu, tau).

    Returns
    -------
    float or ndarray
        Kernel values, same shape as ``z``.
    """
    arr, scalar = _as_checked_array(z)
    expo = np.clip(-params.tau * arr, -EXPONENT_LIMIT, EXPONENT_LIMIT)
    smooth = 2.0 * (1.0 + params.mu) / (params.mu + np.exp(expo)) - 1.0
    return _maybe_scalar(np.maximum(smooth, 0.0), scalar)


def eval_sigvar_kernel_smooth_derivative(z, params: SigVaRParams):
    """d/dz of the smooth branch 2 (1 + mu)/(mu + e^{-tau z}) - 1.

    Equals 2 (1 + mu) tau e^{-tau z} / (mu + e^{-tau z})^2, evaluated in a
    product form that cannot overflow.  Outside the clamped exponent range
    the smooth branch is flat, so the derivative is 0 there.
    """
    arr, scalar = _as_checked_array(z)
    mu, tau = params.mu, params.tau
    expo = -tau * arr
    sig = (1.0 + mu) / (mu + np.exp(np.clip(expo, -EXPONENT_LIMIT, EXPONENT_LIMIT)))
    der = 2.0 * tau * sig * (1.0 - mu * sig / (1.0 + mu))
    # flat extension beyond the clamp
    der = np.where(np.abs(expo) >= EXPONENT_LIMIT, 0.0, der)
    return _maybe_scalar(der, scalar)


def eval_ss_kernel(z, params: SSParams):
    """Smooth sigmoidal kernel (1 + rho m1) / (1 + rho m2 e^{-z/rho})."""
    arr, scalar = _as_checked_array(z)
    expo = np.clip(-arr / params.rho, -EXPONENT_LIMIT, EXPONENT_LIMIT)
    val = (1.0 + params.rho * params.m1) / (1.0 + params.rho * params.m2 * np.exp(expo))
    return _maybe_scalar(val, scalar)


def eval_dc_kernel(z, epsilon: float):
    """Difference-of-hinges kernel ([z + epsilon]+ - [z]+) / epsilon.

    Piecewise linear: 0 below -epsilon, 1 above 0, linear in between.
    """
    if not (math.isfinite(epsilon) and epsilon > 0):
        raise ValueError("epsilon must be positive and finite, got %r" % (epsilon,))
    arr, scalar = _as_checked_array(z)
    val = (np.maximum(arr + epsilon, 0.0) - np.maximum(arr, 0.0)) / epsilon
    return _maybe_scalar(val, scalar)


_BAR_MU_CACHE: float | None = None


def bar_mu() -> float:
    """Unique root > 1 of mu - log(2 + mu) = 1, approximately 2.5052.

    This is the smallest mu for which the CVaR-to-SigVaR parameter map is
    conservative.  Computed once by bisection on [1, 10] to 1e-12 and
    cached.
    """
    global _BAR_MU_CACHE
    if _BAR_MU_CACHE is None:
        lo, hi = 1.0, 10.0
        # g(mu) = mu - log(2 + mu) - 1 is increasing for mu > -1
        while hi - lo > 1e-12:
            mid = 0.5 * (lo + hi)
            if mid - math.log(2.0 + mid) - 1.0 < 0.0:
                lo = mid
            else:
                hi = mid
        _BAR_MU_CACHE = 0.5 * (lo + hi)
    return _BAR_MU_CACHE


def map_cvar_to_sigvar(gamma: float, mu: float) -> SigVaRParams:
    """Parameters (mu, tau) for which the SigVaR kernel is dominated by
    the scaled hinge [gamma z + 1]+.

    tau is set to gamma (mu + 1) / 2; the domination holds for any
    mu >= bar_mu(), which is validated here.

    Parameters
    ----------
    gamma : float
        Positive scaling of the hinge kernel (typically -1/t_c for the
        CVaR minimizer t_c < 0).
    mu : float
        Requested steepness parameter; must be >= bar_mu().
    """
    if not (math.isfinite(gamma) and gamma > 0):
        raise ValueError("gamma must be positive and finite, got %r" % (gamma,))
    if not math.isfinite(mu) or mu < bar_mu():
        raise ValueError("mu must be >= bar_mu() = %.12f, got %r" % (bar_mu(), mu))
    return SigVaRParams(mu=mu, tau=gamma * (mu + 1.0) / 2.0)


def map_ss_to_sigvar(params: SSParams) -> SigVaRParams:
    """SigVaR parameters dominated by a given smooth sigmoidal kernel.

    Maps (rho, m1, m2) to mu = (2 + rho m1) / (rho m2), tau = 1 / rho;
    with these values the SigVaR kernel lies below the SS kernel
    everywhere, so the SigVaR feasible set contains the SS one.
    """
    mu = (2.0 + params.rho * params.m1) / (params.rho * params.m2)
    return SigVaRParams(mu=mu, tau=1.0 / params.rho)


def error_bound(params: SigVaRParams, lipschitz: float) -> float:
    """Upper bound log(2 + mu) L / tau + 2 / mu on the uniform distance
    between the SigVaR risk value and the true quantile.

    ``lipschitz`` is a Lipschitz bound L on the quantile function of the
    constraint values over the relevant probability range.
    """
    if not (math.isfinite(lipschitz) and lipschitz >= 0):
        raise ValueError("lipschitz must be nonnegative and finite, got %r"
                         % (lipschitz,))
    return math.log(2.0 + params.mu) * lipschitz / params.tau + 2.0 / params.mu
