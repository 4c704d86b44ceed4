"""Crop-allocation study: land split now, buy/sell after the harvest.

First stage picks acres x = (wheat, corn, beets) under a land budget.
After the random beet yield is revealed, the recourse buys y_j and
sells w_j of each crop subject to balance rows

    yield_j(xi) * x_j + y_j - w_j >= demand_j

and the per-scenario cost is

    f = plant costs + purchase costs - sale revenue.

The objective is E[f]; the chance constraint bounds the probability of
a bad year, P(f <= cost_threshold) >= 1 - alpha.  Everything is linear,
so the SAA assemblies are convex apart from the sigmoidal kernel rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from scipy.optimize import brentq

from ..fixtures import fixture_path
from ..problem_model import StochasticProgram
from ..risk_kernels import SigVaRParams, eval_sigvar_kernel
from ..risk_measures import RiskLevel, SampleVector, cvar
from .coeffs import CoefficientError, read_coefficient_file, reject_extras, take

__all__ = ["FarmerCoefficients", "farmer_build", "farmer_stage_seeder",
           "farmer_tight_acreage", "load_farmer_coefficients"]

CROPS = ("wheat", "corn", "beets")


@dataclass(frozen=True)
class FarmerCoefficients:
    """Prices, demands, capacities and the cost threshold.

    Arrays are indexed by crop in the order wheat, corn, beets.  A
    non-finite purchase price means the crop has no purchase market and
    requires the matching purchase cap to be zero.
    """

    land_capacity: float
    plant_cost: np.ndarray
    purchase_price: np.ndarray
    sale_price: np.ndarray
    demand: np.ndarray
    fixed_yield: np.ndarray  # wheat, corn only
    purchase_cap: np.ndarray
    sale_cap: np.ndarray
    cost_threshold: float

    def __post_init__(self):
        for name in ("plant_cost", "purchase_price", "sale_price", "demand",
                     "purchase_cap", "sale_cap"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(3)
            object.__setattr__(self, name, arr)
        object.__setattr__(
            self, "fixed_yield",
            np.asarray(self.fixed_yield, dtype=float).reshape(2))
        if not np.all(self.plant_cost > 0) or not np.all(self.sale_price > 0):
            raise CoefficientError("plant costs and sale prices must be positive")
        if np.any(self.demand < 0) or not np.all(np.isfinite(self.demand)):
            raise CoefficientError("demands must be finite and nonnegative")
        if not np.all(self.fixed_yield > 0):
            raise CoefficientError("fixed yields must be positive")
        if self.land_capacity <= 0 or not np.isfinite(self.land_capacity):
            raise CoefficientError("land capacity must be positive and finite")
        if np.any(self.purchase_cap < 0) or np.any(self.sale_cap < 0):
            raise CoefficientError("capacities must be nonnegative")
        bad = ~np.isfinite(self.purchase_price) & (self.purchase_cap != 0)
        if np.any(bad):
            raise CoefficientError(
                "non-finite purchase price needs purchase cap 0 (crops: %s)"
                % ", ".join(np.asarray(CROPS)[bad]))
        if np.any(self.purchase_price <= 0):
            raise CoefficientError("purchase prices must be positive")
        if not np.isfinite(self.cost_threshold):
            raise CoefficientError("cost threshold must be finite")


def load_farmer_coefficients(path=None) -> FarmerCoefficients:
    """Read a coefficient file (the shipped defaults when path is None)."""
    if path is None:
        path = fixture_path("farmer_coefficients")
    vals = read_coefficient_file(path)

    def per_crop(prefix):
        return np.array([take(vals, "%s_%s" % (prefix, c), path) for c in CROPS])

    coeffs = FarmerCoefficients(
        land_capacity=take(vals, "land_capacity", path),
        plant_cost=per_crop("plant_cost"),
        purchase_price=per_crop("purchase_price"),
        sale_price=per_crop("sale_price"),
        demand=per_crop("demand"),
        fixed_yield=np.array([take(vals, "yield_wheat", path),
                              take(vals, "yield_corn", path)]),
        purchase_cap=per_crop("purchase_cap"),
        sale_cap=per_crop("sale_cap"),
        cost_threshold=take(vals, "cost_threshold", path),
    )
    reject_extras(vals, path)
    return coeffs


def farmer_build(coeffs: FarmerCoefficients, scen) -> StochasticProgram:
    """Assemble the StochasticProgram for a beet-yield scenario set.

    Layout: x = acres per crop; y = (buy_wheat, buy_corn, buy_beets,
    sell_wheat, sell_corn, sell_beets) per scenario.  cc_function is
    cost - cost_threshold, so feasibility means cost at or below the
    threshold.
    """
    if scen.dim != 1:
        raise ValueError("farmer scenarios are one-dimensional beet yields")
    c = coeffs
    buy_price = np.where(np.isfinite(c.purchase_price), c.purchase_price, 0.0)
    grad_y_cost = np.concatenate([buy_price, -c.sale_price])

    def objective_det(x):
        return float(c.plant_cost @ x), c.plant_cost.copy()

    def objective_scen(x, Y, Xi):
        S = Xi.shape[0]
        vals = Y @ grad_y_cost
        gx = np.zeros((S, 3))
        gy = np.broadcast_to(grad_y_cost, (S, 6)).copy()
        return vals, gx, gy

    def cc_function(x, Y, Xi):
        vals_det, gdet = objective_det(x)
        vals_s, gx, gy = objective_scen(x, Y, Xi)
        vals = vals_det + vals_s - c.cost_threshold
        return vals, gx + gdet, gy

    def det_constraints(x):
        return (np.array([c.land_capacity - x.sum()]),
                np.full((1, 3), -1.0))

    def scenario_yields(Xi):
        yields = np.empty((Xi.shape[0], 3))
        yields[:, :2] = c.fixed_yield
        yields[:, 2] = Xi[:, 0]
        return yields

    def recourse_constraints(x, Y, Xi):
        S = Xi.shape[0]
        yields = scenario_yields(Xi)
        vals = yields * x + Y[:, :3] - Y[:, 3:] - c.demand
        gx = np.zeros((S, 3, 3))
        gx[:, np.arange(3), np.arange(3)] = yields
        gy = np.zeros((S, 3, 6))
        gy[:, np.arange(3), np.arange(3)] = 1.0
        gy[:, np.arange(3), 3 + np.arange(3)] = -1.0
        return vals, gx, gy

    def recourse_policy(x, Xi):
        # buy any shortfall against demand, sell the surplus up to caps
        surplus = scenario_yields(Xi) * x - c.demand
        buy = np.minimum(np.maximum(-surplus, 0.0), c.purchase_cap)
        sell = np.minimum(np.maximum(surplus, 0.0), c.sale_cap)
        return np.concatenate([buy, sell], axis=1)

    y_bounds = np.zeros((6, 2))
    y_bounds[:3, 1] = c.purchase_cap
    y_bounds[3:, 1] = c.sale_cap

    return StochasticProgram(
        name="farmer",
        n1=3,
        n2=6,
        x_bounds=[(0.0, c.land_capacity)] * 3,
        y_bounds=y_bounds,
        cc_function=cc_function,
        objective_det=objective_det,
        objective_scen=objective_scen,
        det_constraints=det_constraints,
        n_det_constraints=1,
        recourse_constraints=recourse_constraints,
        n_recourse_constraints=3,
        x0=[120.0, 80.0, 300.0],
        recourse_policy=recourse_policy,
    )


def _binding_beet_acreage(prog, coeffs, scen, risk_gap):
    """Acres where risk_gap crosses zero on the one-dimensional face.

    The face has corn planted exactly to demand and the land budget
    used up, so beet acres parametrize it.  risk_gap maps the policy
    cost sample to "risk spent minus budget" and must increase with
    beet acres (bad years are low-yield years).  Returns None when the
    regime does not apply: corn demand exceeding the land budget, or no
    sign change over the bracket.
    """
    c = coeffs
    corn = c.demand[1] / c.fixed_yield[1]
    rest = c.land_capacity - corn
    if corn < 0.0 or rest <= 0.0:
        return None

    def gap(beets):
        x = np.array([rest - beets, corn, beets])
        Y = prog.recourse_policy(x, scen.samples)
        vals, _, _ = prog.cc_function(x, Y, scen.samples)
        return risk_gap(vals)

    if not gap(0.0) < 0.0 < gap(rest):
        return None
    beets = brentq(gap, 0.0, rest, xtol=1e-11, rtol=8.9e-16)
    return np.array([rest - beets, corn, beets])


def farmer_tight_acreage(coeffs: FarmerCoefficients, scen, level) -> np.ndarray:
    """First-stage acres where the tail-average cost meets the threshold.

    In the regime the study exercises the risk constraint binds at the
    optimum on the face _binding_beet_acreage describes, which makes
    the binding acreage the root of a one-dimensional equation and an
    exact warm start for the hinge stage.  Returns the default start
    when the regime does not apply.
    """
    level = level if isinstance(level, RiskLevel) else RiskLevel(float(level))
    prog = farmer_build(coeffs, scen)
    x = _binding_beet_acreage(
        prog, coeffs, scen,
        lambda vals: cvar(SampleVector(vals), level)[0])
    return np.asarray(prog.x0, dtype=float) if x is None else x


def farmer_stage_seeder(coeffs: FarmerCoefficients, scen, level):
    """Per-stage seed callback for the continuation run.

    Each sigmoidal stage on the farmer instance optimizes along the
    same face as the hinge stage, with the binding acreage now set by
    the mean sigmoidal kernel exhausting the risk budget.  The returned
    callable maps (mu, tau) to that acreage, or to None (falling back
    to stage chaining) when the regime does not apply.
    """
    level = level if isinstance(level, RiskLevel) else RiskLevel(float(level))
    alpha = level.alpha
    prog = farmer_build(coeffs, scen)

    def seed(mu, tau):
        params = SigVaRParams(mu, tau)
        return _binding_beet_acreage(
            prog, coeffs, scen,
            lambda vals: float(np.mean(eval_sigvar_kernel(vals, params))) - alpha)

    return seed
