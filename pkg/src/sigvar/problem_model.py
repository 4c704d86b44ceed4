"""Two-stage stochastic program contracts and smooth SAA assemblies.

A StochasticProgram describes

    min  phi0(x) + E[phi_xi(x, y(xi), xi)]
    s.t. P(f(x, y(xi), xi) <= 0) >= 1 - alpha
         g(x) >= 0,   h(x, y(xi), xi) >= 0,   bounds on x and y

through vectorized callables (every scenario evaluated at once).  The
builders turn it into a SmoothNLP over the stacked variable vector

    v = [ x | y_1 .. y_S | z_1 .. z_S | phi_1 .. phi_S | (t) ]

where the z_s are explicit copies of the constraint values (tied by
equality rows z_s = f(x, y_s, xi_s)) and the phi_s majorize a kernel of
z_s.  Available assemblies:

* ``build_sigvar_saa``      phi_s >= sigmoid smooth branch of z_s,
                            phi_s >= 0, mean(phi) <= alpha
* ``build_cvar_saa``        phi_s >= z_s - t, phi_s >= 0,
                            mean(phi) <= -t alpha  (extra scalar t)
* ``build_scenario_robust`` f(x, y_s, xi_s) <= 0 for every scenario
                            (no z/phi variables)
* ``build_restricted``      scenario-robust with an exempt subset whose
                            f <= 0 rows are dropped
* ``build_ss_saa``          mean of the smooth sigmoidal kernel of z_s
                            <= alpha (no phi variables)

Callable contracts (S scenarios, Xi is the (S, d) scenario matrix):

* ``objective_det(x) -> (float, (n1,))``
* ``objective_scen(x, Y, Xi) -> ((S,), (S, n1), (S, n2))``  [optional]
* ``cc_function(x, Y, Xi) -> ((S,), (S, n1), (S, n2))``
* ``det_constraints(x) -> ((m,), (m, n1))``  with g >= 0  [optional]
* ``recourse_constraints(x, Y, Xi) -> ((S, q), (S, q, n1), (S, q, n2))``
  with h >= 0  [optional]
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .risk_kernels import (
    EXPONENT_LIMIT,
    SigVaRParams,
    SSParams,
    eval_sigvar_kernel,
    eval_sigvar_kernel_smooth_derivative,
)
from .risk_measures import RiskLevel, SampleVector, var

__all__ = [
    "EvaluationError",
    "NLPEval",
    "SmoothNLP",
    "StochasticProgram",
    "VariableLayout",
    "build_cvar_saa",
    "build_restricted",
    "build_scenario_robust",
    "build_sigvar_saa",
    "build_ss_saa",
    "estimate_cvar_multipliers",
    "estimate_sigvar_multipliers",
    "phi_gap",
    "tighten_phi",
]


class EvaluationError(RuntimeError):
    """A model callable hit an invalid point (log of a nonpositive value,
    division by zero).  Solvers treat a trial point raising this as a
    failed step; at an accepted point it is a numerical failure."""


def _bounds_array(bounds, n, label):
    arr = np.asarray(bounds, dtype=float).reshape(n, 2) if n else np.zeros((0, 2))
    if np.any(arr[:, 0] > arr[:, 1]):
        raise ValueError("%s bounds have lo > hi" % label)
    return arr


@dataclass(frozen=True)
class StochasticProgram:
    """Problem data; see the module docstring for callable contracts."""

    name: str
    n1: int
    n2: int
    x_bounds: np.ndarray
    y_bounds: np.ndarray
    cc_function: Callable
    objective_det: Callable
    objective_scen: Optional[Callable] = None
    det_constraints: Optional[Callable] = None
    n_det_constraints: int = 0
    recourse_constraints: Optional[Callable] = None
    n_recourse_constraints: int = 0
    x0: Optional[np.ndarray] = None
    recourse_policy: Optional[Callable] = None

    def __post_init__(self):
        if self.n1 <= 0 or self.n2 < 0:
            raise ValueError("need n1 > 0 and n2 >= 0")
        object.__setattr__(self, "x_bounds",
                           _bounds_array(self.x_bounds, self.n1, "x"))
        object.__setattr__(self, "y_bounds",
                           _bounds_array(self.y_bounds, self.n2, "y"))
        if (self.det_constraints is None) != (self.n_det_constraints == 0):
            raise ValueError("det_constraints and n_det_constraints disagree")
        if (self.recourse_constraints is None) != (self.n_recourse_constraints == 0):
            raise ValueError("recourse_constraints and n_recourse_constraints disagree")
        if self.x0 is not None:
            x0 = np.asarray(self.x0, dtype=float).reshape(self.n1)
            object.__setattr__(self, "x0", x0)

    def default_x0(self) -> np.ndarray:
        """Starting first-stage point: given x0, else box midpoint."""
        if self.x0 is not None:
            return self.x0.copy()
        lo, hi = self.x_bounds[:, 0], self.x_bounds[:, 1]
        mid = np.zeros(self.n1)
        both = np.isfinite(lo) & np.isfinite(hi)
        mid[both] = 0.5 * (lo[both] + hi[both])
        only_lo = np.isfinite(lo) & ~np.isfinite(hi)
        mid[only_lo] = lo[only_lo] + 1.0
        only_hi = ~np.isfinite(lo) & np.isfinite(hi)
        mid[only_hi] = hi[only_hi] - 1.0
        return mid

    def default_y0(self, S: int) -> np.ndarray:
        """Starting recourse block: zero clipped into the y box, tiled."""
        if self.n2 == 0:
            return np.zeros((S, 0))
        y = np.clip(np.zeros(self.n2), self.y_bounds[:, 0], self.y_bounds[:, 1])
        return np.tile(y, (S, 1))

    def initial_recourse(self, x: np.ndarray, Xi) -> np.ndarray:
        """Starting recourse for each scenario at first-stage point x.

        Uses recourse_policy(x, Xi) when the model supplies one (a cheap
        map to sensible second-stage values; starting thousands of
        recourse variables at zero puts the assembled start far from
        any solution, which first-order methods pay for).  Falls back
        to default_y0.  Results are clipped into the y box.
        """
        if self.n2 == 0 or self.recourse_policy is None:
            return self.default_y0(Xi.shape[0])
        Y = np.asarray(self.recourse_policy(x, Xi), dtype=float)
        Y = Y.reshape(Xi.shape[0], self.n2)
        return np.clip(Y, self.y_bounds[:, 0], self.y_bounds[:, 1])


@dataclass(frozen=True)
class VariableLayout:
    """Slices of the stacked vector; the pieces partition [0, n) exactly."""

    n: int
    n1: int
    n2: int
    S: int
    x: slice
    y: Optional[slice] = None
    z: Optional[slice] = None
    phi: Optional[slice] = None
    t: Optional[int] = None

    def pieces(self):
        out = [("x", self.x)]
        for name in ("y", "z", "phi"):
            sl = getattr(self, name)
            if sl is not None:
                out.append((name, sl))
        if self.t is not None:
            out.append(("t", slice(self.t, self.t + 1)))
        return out

    def partition_ok(self) -> bool:
        covered = np.zeros(self.n, dtype=int)
        for _, sl in self.pieces():
            covered[sl] += 1
        return bool(np.all(covered == 1))

    def y_matrix(self, v: np.ndarray) -> np.ndarray:
        if self.y is None or self.n2 == 0:
            return np.zeros((self.S, 0))
        return v[self.y].reshape(self.S, self.n2)


@dataclass
class NLPEval:
    """One evaluation of the assembled problem at a point."""

    obj: float
    grad: np.ndarray
    c_eq: np.ndarray
    jac_eq: sp.csr_matrix
    c_ineq: np.ndarray
    jac_ineq: sp.csr_matrix


def _rep_tile(rows, ncols, col_start, row_offset=0):
    """(row, col) index arrays for a dense block of shape (rows, ncols)."""
    r = np.repeat(np.arange(rows) + row_offset, ncols)
    c = np.tile(np.arange(ncols) + col_start, rows)
    return r, c


class SmoothNLP:
    """A smooth NLP  min f(v)  s.t.  c_eq(v) = 0, c_ineq(v) >= 0, lb <= v <= ub.

    Instances are produced by the build_* functions; evaluation returns
    dense objective gradients and CSR constraint Jacobians.  ``kind`` is
    one of "sigvar", "cvar", "robust", "restricted", "ss".
    """

    def __init__(self, kind, prog, scen, level=None, params=None,
                 ss_params=None, included=None):
        self.kind = kind
        self.prog = prog
        self.scen = scen
        self.level = level
        self.params = params
        self.ss_params = ss_params
        S, n1, n2 = scen.count, prog.n1, prog.n2
        self.S = S

        has_aux = kind in ("sigvar", "cvar", "ss")
        has_phi = kind in ("sigvar", "cvar")
        pos = n1
        y_sl = slice(pos, pos + S * n2) if n2 else None
        pos += S * n2
        z_sl = phi_sl = None
        t_idx = None
        if has_aux:
            z_sl = slice(pos, pos + S)
            pos += S
        if has_phi:
            phi_sl = slice(pos, pos + S)
            pos += S
        if kind == "cvar":
            t_idx = pos
            pos += 1
        self.layout = VariableLayout(n=pos, n1=n1, n2=n2, S=S, x=slice(0, n1),
                                     y=y_sl, z=z_sl, phi=phi_sl, t=t_idx)

        lb = np.full(pos, -np.inf)
        ub = np.full(pos, np.inf)
        lb[:n1], ub[:n1] = prog.x_bounds[:, 0], prog.x_bounds[:, 1]
        if n2:
            lb[y_sl] = np.tile(prog.y_bounds[:, 0], S)
            ub[y_sl] = np.tile(prog.y_bounds[:, 1], S)
        if has_phi:
            lb[phi_sl] = 0.0
        self.lb, self.ub = lb, ub

        if kind in ("robust", "restricted"):
            mask = np.ones(S, dtype=bool)
            if kind == "restricted" and included is not None:
                mask = included
            self.cc_mask = mask
        else:
            self.cc_mask = None

        self._build_index_structure()
        self.v0 = None  # set by the builder

    # -- static sparsity patterns ------------------------------------

    def _build_index_structure(self):
        prog, S = self.prog, self.S
        n1, n2 = prog.n1, prog.n2
        lay = self.layout
        kind = self.kind

        if lay.z is not None:
            zr = np.arange(S)
            rx = _rep_tile(S, n1, 0)
            ry = (np.repeat(zr, n2), lay.y.start + np.arange(S * n2)) if n2 else None
            self._eq_idx = {
                "x": rx,
                "y": ry,
                "z": (zr, lay.z.start + zr),
            }
            self.n_eq = S
        else:
            self._eq_idx = None
            self.n_eq = 0

        # inequality blocks, in order: det | recourse | kind-specific
        m = prog.n_det_constraints
        q = prog.n_recourse_constraints
        offset = 0
        if m:
            r, c = _rep_tile(m, n1, 0)
            self._det_idx = (r, c)
            offset += m
        self._det_rows = m
        if q:
            rr = np.repeat(np.arange(S * q), n1) + offset
            cc = np.tile(np.arange(n1), S * q)
            self._rec_idx_x = (rr, cc)
            if n2:
                rr2 = np.repeat(np.arange(S * q), n2) + offset
                # row (s, i) couples to the y block of scenario s
                scen_of_row = np.repeat(np.arange(S), q)
                cc2 = (lay.y.start + np.repeat(scen_of_row * n2, n2)
                       + np.tile(np.arange(n2), S * q))
                self._rec_idx_y = (rr2, cc2)
            else:
                self._rec_idx_y = None
            offset += S * q
        self._rec_rows = S * q

        if kind in ("sigvar", "cvar"):
            r = np.arange(S) + offset
            self._kernel_idx_phi = (r, lay.phi.start + np.arange(S))
            self._kernel_idx_z = (r, lay.z.start + np.arange(S))
            offset += S
            mr = np.full(S, offset)
            self._mean_idx_phi = (mr, lay.phi.start + np.arange(S))
            if kind == "cvar":
                self._mean_idx_t = offset
            offset += 1
        elif kind == "ss":
            mr = np.full(S, offset)
            self._mean_idx_z = (mr, lay.z.start + np.arange(S))
            offset += 1
        elif kind in ("robust", "restricted"):
            keep = np.flatnonzero(self.cc_mask)
            self._cc_keep = keep
            k = keep.size
            rr = np.repeat(np.arange(k), n1) + offset
            cc = np.tile(np.arange(n1), k)
            self._cc_idx_x = (rr, cc)
            if n2:
                rr2 = np.repeat(np.arange(k), n2) + offset
                cc2 = (lay.y.start + np.repeat(keep * n2, n2)
                       + np.tile(np.arange(n2), k))
                self._cc_idx_y = (rr2, cc2)
            else:
                self._cc_idx_y = None
            offset += k
        self.n_ineq = offset

    # -- evaluation ----------------------------------------------------

    def eval(self, v: np.ndarray, need_jac: bool = True) -> NLPEval:
        """Evaluate objective, constraints, and (optionally) Jacobians."""
        prog, lay, S = self.prog, self.layout, self.S
        n1, n2 = prog.n1, prog.n2
        x = v[lay.x]
        Y = lay.y_matrix(v)
        Xi = self.scen.samples

        obj, grad_x = prog.objective_det(x)
        grad = np.zeros(lay.n)
        grad[lay.x] = grad_x
        if prog.objective_scen is not None:
            ov, ogx, ogy = prog.objective_scen(x, Y, Xi)
            obj = obj + float(np.mean(ov))
            grad[lay.x] += np.mean(ogx, axis=0)
            if n2:
                grad[lay.y] += (ogy / S).ravel()
        obj = float(obj)

        need_f = lay.z is not None or self.kind in ("robust", "restricted")
        if need_f:
            fv, fgx, fgy = prog.cc_function(x, Y, Xi)
            fv = np.asarray(fv, dtype=float).reshape(S)

        # equalities: z_s - f_s = 0
        eq_rows, eq_cols, eq_vals = [], [], []
        if lay.z is not None:
            z = v[lay.z]
            c_eq = z - fv
            if need_jac:
                idx = self._eq_idx
                eq_rows.append(idx["x"][0]); eq_cols.append(idx["x"][1])
                eq_vals.append(-np.asarray(fgx).reshape(S, n1).ravel())
                if idx["y"] is not None:
                    eq_rows.append(idx["y"][0]); eq_cols.append(idx["y"][1])
                    eq_vals.append(-np.asarray(fgy).reshape(S, n2).ravel())
                eq_rows.append(idx["z"][0]); eq_cols.append(idx["z"][1])
                eq_vals.append(np.ones(S))
        else:
            c_eq = np.zeros(0)

        # inequalities
        parts = []
        in_rows, in_cols, in_vals = [], [], []
        if prog.det_constraints is not None:
            gv, gj = prog.det_constraints(x)
            parts.append(np.asarray(gv, dtype=float).reshape(-1))
            if need_jac:
                in_rows.append(self._det_idx[0]); in_cols.append(self._det_idx[1])
                in_vals.append(np.asarray(gj).reshape(-1, n1).ravel())
        if prog.recourse_constraints is not None:
            q = prog.n_recourse_constraints
            hv, hjx, hjy = prog.recourse_constraints(x, Y, Xi)
            parts.append(np.asarray(hv, dtype=float).reshape(S * q))
            if need_jac:
                in_rows.append(self._rec_idx_x[0]); in_cols.append(self._rec_idx_x[1])
                in_vals.append(np.asarray(hjx).reshape(S * q, n1).ravel())
                if self._rec_idx_y is not None:
                    in_rows.append(self._rec_idx_y[0]); in_cols.append(self._rec_idx_y[1])
                    in_vals.append(np.asarray(hjy).reshape(S * q, n2).ravel())

        kind = self.kind
        if kind == "sigvar":
            z, phi = v[lay.z], v[lay.phi]
            smooth = self._sigvar_smooth(z)
            parts.append(phi - smooth)
            parts.append(np.array([self.level.alpha - np.mean(phi)]))
            if need_jac:
                in_rows.append(self._kernel_idx_phi[0]); in_cols.append(self._kernel_idx_phi[1])
                in_vals.append(np.ones(S))
                in_rows.append(self._kernel_idx_z[0]); in_cols.append(self._kernel_idx_z[1])
                in_vals.append(-eval_sigvar_kernel_smooth_derivative(z, self.params))
                in_rows.append(self._mean_idx_phi[0]); in_cols.append(self._mean_idx_phi[1])
                in_vals.append(np.full(S, -1.0 / S))
        elif kind == "cvar":
            z, phi, t = v[lay.z], v[lay.phi], v[lay.t]
            parts.append(phi - z + t)
            parts.append(np.array([-t * self.level.alpha - np.mean(phi)]))
            if need_jac:
                r = self._kernel_idx_phi[0]
                in_rows.append(self._kernel_idx_phi[0]); in_cols.append(self._kernel_idx_phi[1])
                in_vals.append(np.ones(S))
                in_rows.append(self._kernel_idx_z[0]); in_cols.append(self._kernel_idx_z[1])
                in_vals.append(np.full(S, -1.0))
                in_rows.append(r); in_cols.append(np.full(S, lay.t))
                in_vals.append(np.ones(S))
                in_rows.append(self._mean_idx_phi[0]); in_cols.append(self._mean_idx_phi[1])
                in_vals.append(np.full(S, -1.0 / S))
                in_rows.append(np.array([self._mean_idx_t])); in_cols.append(np.array([lay.t]))
                in_vals.append(np.array([-self.level.alpha]))
        elif kind == "ss":
            z = v[lay.z]
            val, slope = _ss_value_and_slope(z, self.ss_params)
            parts.append(np.array([self.level.alpha - np.mean(val)]))
            if need_jac:
                in_rows.append(self._mean_idx_z[0]); in_cols.append(self._mean_idx_z[1])
                in_vals.append(-slope / S)
        elif kind in ("robust", "restricted"):
            keep = self._cc_keep
            parts.append(-fv[keep])
            if need_jac:
                in_rows.append(self._cc_idx_x[0]); in_cols.append(self._cc_idx_x[1])
                in_vals.append(-np.asarray(fgx).reshape(S, n1)[keep].ravel())
                if self._cc_idx_y is not None:
                    in_rows.append(self._cc_idx_y[0]); in_cols.append(self._cc_idx_y[1])
                    in_vals.append(-np.asarray(fgy).reshape(S, n2)[keep].ravel())

        c_ineq = np.concatenate(parts) if parts else np.zeros(0)

        if need_jac:
            jac_eq = _to_csr(eq_rows, eq_cols, eq_vals, self.n_eq, lay.n)
            jac_ineq = _to_csr(in_rows, in_cols, in_vals, self.n_ineq, lay.n)
        else:
            jac_eq = jac_ineq = None
        return NLPEval(obj=obj, grad=grad, c_eq=c_eq, jac_eq=jac_eq,
                       c_ineq=c_ineq, jac_ineq=jac_ineq)

    def _sigvar_smooth(self, z):
        """Smooth branch 2(1+mu)/(mu+e^{-tau z}) - 1 with clamped exponent."""
        p = self.params
        expo = np.clip(-p.tau * z, -EXPONENT_LIMIT, EXPONENT_LIMIT)
        return 2.0 * (1.0 + p.mu) / (p.mu + np.exp(expo)) - 1.0

    def cc_values(self, v: np.ndarray) -> np.ndarray:
        """Per-scenario constraint values f(x, y_s, xi_s) at a point."""
        lay = self.layout
        fv, _, _ = self.prog.cc_function(v[lay.x], lay.y_matrix(v),
                                         self.scen.samples)
        return np.asarray(fv, dtype=float).reshape(self.S)

    def hess_diag_rows(self, v, weights_eq, weights_in) -> np.ndarray:
        """Diagonal of sum_i weight_i * (-hess c_i) over the rows whose
        curvature this assembly owns in closed form (the sigmoid kernel
        rows and the smooth-kernel mean row).  Rows whose curvature
        lives inside user callables contribute zero (Gauss-Newton
        treatment).  Used by the solver as preconditioner information;
        the sign is the augmented-Lagrangian Hessian convention, so
        callers should clamp to the positive part."""
        lay = self.layout
        out = np.zeros(lay.n)
        base = self._det_rows + self._rec_rows
        if self.kind == "sigvar":
            wk = np.asarray(weights_in)[base: base + self.S]
            p = self.params
            expo = np.clip(-p.tau * v[lay.z], -EXPONENT_LIMIT, EXPONENT_LIMIT)
            sig = (1.0 + p.mu) / (p.mu + np.exp(expo))
            d1 = 2.0 * p.tau * sig * (1.0 - p.mu * sig / (1.0 + p.mu))
            d2 = d1 * p.tau * (1.0 - 2.0 * p.mu * sig / (1.0 + p.mu))
            # kernel row c = phi - smooth(z): -c'' along z is +smooth''
            out[lay.z] += wk * d2
        elif self.kind == "ss":
            w0 = float(np.asarray(weights_in)[base])
            rho, m2 = self.ss_params.rho, self.ss_params.m2
            amp = 1.0 + self.ss_params.rho * self.ss_params.m1
            expo = np.clip(-v[lay.z] / rho, -EXPONENT_LIMIT, EXPONENT_LIMIT)
            with np.errstate(over="ignore"):
                sig = 1.0 / (1.0 + rho * m2 * np.exp(expo))
            d2 = amp * sig * (1.0 - sig) * (1.0 - 2.0 * sig) / rho ** 2
            # mean row c = alpha - mean(psi): -c'' along z_s is psi''/S
            out[lay.z] += w0 * d2 / self.S
        return out

    def random_start(self, seed: int) -> np.ndarray:
        """Deterministic random start: x and Y uniform in their boxes
        (normal around the default where a bound is infinite), auxiliary
        variables forward-evaluated the same way the builders do."""
        rng = np.random.Generator(np.random.Philox(key=int(seed)))
        prog, lay = self.prog, self.layout
        lo, hi = prog.x_bounds[:, 0], prog.x_bounds[:, 1]
        box = np.isfinite(lo) & np.isfinite(hi)
        x = prog.default_x0()
        u = rng.random(prog.n1)
        x[box] = lo[box] + u[box] * (hi[box] - lo[box])
        x[~box] = x[~box] + rng.normal(size=int(np.sum(~box)))
        x = np.clip(x, lo, hi)
        v = np.zeros(lay.n)
        v[lay.x] = x
        if prog.n2:
            ylo, yhi = prog.y_bounds[:, 0], prog.y_bounds[:, 1]
            ybox = np.isfinite(ylo) & np.isfinite(yhi)
            U = rng.random((self.S, prog.n2))
            Y = np.tile(np.clip(np.zeros(prog.n2), ylo, yhi), (self.S, 1))
            Y[:, ybox] = ylo[ybox] + U[:, ybox] * (yhi[ybox] - ylo[ybox])
            v[lay.y] = Y.ravel()
        else:
            Y = np.zeros((self.S, 0))
        if lay.z is not None:
            fv, _, _ = prog.cc_function(x, Y, self.scen.samples)
            z = np.asarray(fv, dtype=float).reshape(self.S)
            v[lay.z] = z
            if self.kind == "sigvar":
                v[lay.phi] = eval_sigvar_kernel(z, self.params)
            elif self.kind == "cvar":
                t0 = var(SampleVector(z), self.level)
                v[lay.phi] = np.maximum(z - t0, 0.0)
                v[lay.t] = t0
        return v

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "problem": self.prog.name,
            "n_variables": self.layout.n,
            "n_eq": self.n_eq,
            "n_ineq": self.n_ineq,
            "scenarios": self.S,
        }


def _to_csr(rows, cols, vals, nrows, ncols):
    if not rows:
        return sp.csr_matrix((nrows, ncols))
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    d = np.concatenate(vals)
    return sp.coo_matrix((d, (r, c)), shape=(nrows, ncols)).tocsr()


def _ss_value_and_slope(z, params: SSParams):
    """Smooth sigmoidal kernel and its derivative, overflow-safe."""
    rho, m1, m2 = params.rho, params.m1, params.m2
    amp = 1.0 + rho * m1
    expo = np.clip(-z / rho, -EXPONENT_LIMIT, EXPONENT_LIMIT)
    with np.errstate(over="ignore"):
        q = rho * m2 * np.exp(expo)
        sig = 1.0 / (1.0 + q)
    val = amp * sig
    slope = np.where(np.abs(expo) >= EXPONENT_LIMIT, 0.0,
                     amp * sig * (1.0 - sig) / rho)
    return val, slope


# -- builders ----------------------------------------------------------


def _start_points(prog, scen, x0, y0):
    x0 = prog.default_x0() if x0 is None else np.asarray(x0, dtype=float).reshape(prog.n1)
    x0 = np.clip(x0, prog.x_bounds[:, 0], prog.x_bounds[:, 1])
    if y0 is None:
        Y0 = prog.initial_recourse(x0, scen.samples)
    else:
        Y0 = np.asarray(y0, dtype=float).reshape(scen.count, prog.n2)
        if prog.n2:
            Y0 = np.clip(Y0, prog.y_bounds[:, 0], prog.y_bounds[:, 1])
    return x0, Y0


def _forward_z(prog, scen, x0, Y0):
    fv, _, _ = prog.cc_function(x0, Y0, scen.samples)
    return np.asarray(fv, dtype=float).reshape(scen.count)


def _check_contracts(prog, scen, x0, Y0):
    """Fail fast if a callable returns the wrong shapes."""
    S, n1, n2 = scen.count, prog.n1, prog.n2
    fv, gx, gy = prog.cc_function(x0, Y0, scen.samples)
    if (np.shape(fv) != (S,) or np.shape(gx) != (S, n1)
            or np.shape(gy) != (S, n2)):
        raise ValueError("cc_function returned shapes %r, %r, %r; expected "
                         "(%d,), (%d, %d), (%d, %d)"
                         % (np.shape(fv), np.shape(gx), np.shape(gy),
                            S, S, n1, S, n2))
    val, g = prog.objective_det(x0)
    if np.shape(g) != (n1,):
        raise ValueError("objective_det gradient has shape %r, expected (%d,)"
                         % (np.shape(g), n1))
    if prog.objective_scen is not None:
        ov, ogx, ogy = prog.objective_scen(x0, Y0, scen.samples)
        if (np.shape(ov) != (S,) or np.shape(ogx) != (S, n1)
                or np.shape(ogy) != (S, n2)):
            raise ValueError("objective_scen returned wrong shapes")
    if prog.det_constraints is not None:
        m = prog.n_det_constraints
        gv, gj = prog.det_constraints(x0)
        if np.shape(gv) != (m,) or np.shape(gj) != (m, n1):
            raise ValueError("det_constraints returned wrong shapes")
    if prog.recourse_constraints is not None:
        q = prog.n_recourse_constraints
        hv, hjx, hjy = prog.recourse_constraints(x0, Y0, scen.samples)
        if (np.shape(hv) != (S, q) or np.shape(hjx) != (S, q, n1)
                or np.shape(hjy) != (S, q, n2)):
            raise ValueError("recourse_constraints returned wrong shapes")


def build_sigvar_saa(prog: StochasticProgram, scen, params: SigVaRParams,
                     level: RiskLevel, x0=None, y0=None) -> SmoothNLP:
    """Assemble the sigmoidal SAA.

    The kernel inequality uses the smooth branch (the hinge is realized
    by the phi >= 0 bound), so every constraint function is smooth.  Any
    feasible point satisfies mean(psi(f)) <= alpha for the hinged kernel.
    Initial z/phi come from forward evaluation at the start point.
    """
    x0, Y0 = _start_points(prog, scen, x0, y0)
    _check_contracts(prog, scen, x0, Y0)
    nlp = SmoothNLP("sigvar", prog, scen, level=level, params=params)
    z0 = _forward_z(prog, scen, x0, Y0)
    v0 = np.zeros(nlp.layout.n)
    v0[nlp.layout.x] = x0
    if prog.n2:
        v0[nlp.layout.y] = Y0.ravel()
    v0[nlp.layout.z] = z0
    v0[nlp.layout.phi] = eval_sigvar_kernel(z0, params)
    nlp.v0 = v0
    return nlp


def build_cvar_saa(prog: StochasticProgram, scen, level: RiskLevel,
                   x0=None, y0=None) -> SmoothNLP:
    """Assemble the CVaR SAA (extra scalar t; mean(phi) <= -t alpha).

    t starts at the empirical (1 - alpha)-quantile of the initial
    constraint values, phi at the corresponding hinge values.
    """
    x0, Y0 = _start_points(prog, scen, x0, y0)
    _check_contracts(prog, scen, x0, Y0)
    nlp = SmoothNLP("cvar", prog, scen, level=level)
    z0 = _forward_z(prog, scen, x0, Y0)
    t0 = var(SampleVector(z0), level)
    v0 = np.zeros(nlp.layout.n)
    v0[nlp.layout.x] = x0
    if prog.n2:
        v0[nlp.layout.y] = Y0.ravel()
    v0[nlp.layout.z] = z0
    v0[nlp.layout.phi] = np.maximum(z0 - t0, 0.0)
    v0[nlp.layout.t] = t0
    nlp.v0 = v0
    return nlp


def _estimate_stage_multipliers(nlp: SmoothNLP, v, slope):
    """Shared multiplier estimation for the hinge and sigmoidal stages.

    slope is d(kernel)/dz per scenario at v.  With act marking the
    scenarios whose kernel row binds (phi > 0), complementarity fixes
    the pattern: the mean row's dual nu spreads as nu/S over the
    binding kernel rows and as nu*slope/S over their link rows,
    recourse-row duals follow from stationarity of the free scenario
    variables, and nu itself together with the deterministic row duals
    comes from a small least-squares fit of first-stage stationarity.
    Recourse rows whose touched scenario variables all sit at bounds
    are underdetermined per scenario; their level is taken from the
    first-stage fit and shaped afterwards by the bound columns'
    stationarity.
    """
    prog, scen, lay = nlp.prog, nlp.scen, nlp.layout
    S, n1, n2 = lay.S, lay.n1, lay.n2
    m = prog.n_det_constraints
    q = prog.n_recourse_constraints
    x = v[lay.x]
    Y = lay.y_matrix(v)
    phi = v[lay.phi]
    Xi = scen.samples
    ev = nlp.eval(v, need_jac=False)
    gobj = ev.grad

    act = (phi > 0.0).astype(float) / S   # kernel-row dual per unit of nu
    w = act * slope                       # link-row dual per unit of nu

    _, gx_f, gy_f = prog.cc_function(x, Y, Xi)
    gd = (prog.det_constraints(x)[1] if m else np.zeros((0, n1)))

    # scenario-block stationarity: rec duals are affine in nu, one
    # least-squares fit per scenario over its free variables
    a = np.zeros((S, q))
    b = np.zeros((S, q))
    unid = np.zeros((S, q), dtype=bool)
    if q:
        _, gx_r, gy_r = prog.recourse_constraints(x, Y, Xi)
        gobj_y = gobj[lay.y].reshape(S, n2)
        ylb, yub = prog.y_bounds[:, 0], prog.y_bounds[:, 1]
        free = (Y > ylb + 1e-9) & (Y < yub - 1e-9)
        for s in range(S):
            f_idx = np.flatnonzero(free[s])
            if f_idx.size:
                A = gy_r[s][:, f_idx].T
                col_ok = np.abs(A).max(axis=0) > 1e-12
                a[s], *_ = np.linalg.lstsq(A, gobj_y[s, f_idx], rcond=None)
                if w[s] > 0.0:
                    b[s], *_ = np.linalg.lstsq(A, w[s] * gy_f[s, f_idx],
                                               rcond=None)
            else:
                col_ok = np.zeros(q, dtype=bool)
            unid[s] = ~col_ok
        a[unid] = 0.0
        b[unid] = 0.0
    else:
        gx_r = np.zeros((S, 0, n1))
        gy_r = np.zeros((S, 0, n2))

    # first-stage stationarity: unknowns are nu, the det duals, and one
    # uniform level per recourse row type left unidentified above
    c_nu = (w[:, None] * gx_f).sum(axis=0) - np.einsum("sq,sqj->j", b, gx_r)
    c_a = np.einsum("sq,sqj->j", a, gx_r)
    unid_rows = np.flatnonzero(unid.any(axis=0))
    cols = [-gx_r[unid[:, qq], qq, :].sum(axis=0) for qq in unid_rows]
    extra = np.array(cols).T if cols else np.zeros((n1, 0))
    A1 = np.column_stack([c_nu, -gd.T, extra])
    rhs = -gobj[lay.x] + c_a
    sol, *_ = np.linalg.lstsq(A1, rhs, rcond=None)
    nu = max(0.0, float(sol[0]))
    nu_det = np.maximum(0.0, sol[1:1 + m])
    levels = np.maximum(0.0, sol[1 + m:])

    rec = np.maximum(0.0, a + nu * b)

    # distribute each unidentified level: shape from the stationarity of
    # the row's own bound columns, rescaled to keep the fit above exact
    for k, qq in enumerate(unid_rows):
        mask = unid[:, qq]
        shape = np.zeros(S)
        for s in np.flatnonzero(mask):
            j_idx = np.flatnonzero(np.abs(gy_r[s, qq]) > 1e-12)
            if not j_idx.size:
                continue
            col = gy_r[s, qq][j_idx]
            resid = (gobj_y[s, j_idx] + nu * w[s] * gy_f[s, j_idx]
                     - rec[s] @ gy_r[s][:, j_idx] + rec[s, qq] * col)
            shape[s] = max(0.0, (col @ resid) / (col @ col))
        mean_shape = shape[mask].mean()
        if mean_shape > 0.0:
            rec[mask, qq] = shape[mask] * (levels[k] / mean_shape)
        else:
            rec[mask, qq] = levels[k]

    lam_eq = nu * w
    lam_in = np.zeros(nlp.n_ineq)
    lam_in[:m] = nu_det
    if q:
        lam_in[m:m + S * q] = rec.ravel()
    lam_in[m + S * q:m + S * q + S] = nu * act
    lam_in[-1] = nu
    return lam_eq, lam_in


def estimate_cvar_multipliers(nlp: SmoothNLP, v=None):
    """Estimate KKT multipliers for a hinge-assembly start point.

    The start point is expected to have its scenario block filled by
    the recourse policy and t at the empirical quantile, so the hinge
    rows of the tail scenarios bind with unit kernel slope.  Returns
    (lam_eq, lam_ineq) ready to pass as solve()'s lam0.  On a linear
    instance started at its optimum this is an exact certificate;
    elsewhere it is only a warm start.
    """
    if nlp.kind != "cvar":
        raise ValueError("multiplier estimation applies to the hinge assembly")
    if v is None:
        v = nlp.v0
    return _estimate_stage_multipliers(nlp, v, np.ones(nlp.layout.S))


def estimate_sigvar_multipliers(nlp: SmoothNLP, v=None):
    """Estimate KKT multipliers for a sigmoidal-assembly start point.

    Same construction as the hinge variant with the kernel slope taken
    from the smooth sigmoid branch at the start's z block.
    """
    if nlp.kind != "sigvar":
        raise ValueError("multiplier estimation applies to the sigmoidal assembly")
    if v is None:
        v = nlp.v0
    slope = eval_sigvar_kernel_smooth_derivative(v[nlp.layout.z], nlp.params)
    return _estimate_stage_multipliers(nlp, v, np.asarray(slope, dtype=float))


def build_scenario_robust(prog: StochasticProgram, scen, x0=None, y0=None) -> SmoothNLP:
    """Assemble the scenario-robust problem: f <= 0 for every scenario."""
    x0, Y0 = _start_points(prog, scen, x0, y0)
    _check_contracts(prog, scen, x0, Y0)
    nlp = SmoothNLP("robust", prog, scen)
    v0 = np.zeros(nlp.layout.n)
    v0[nlp.layout.x] = x0
    if prog.n2:
        v0[nlp.layout.y] = Y0.ravel()
    nlp.v0 = v0
    return nlp


def build_restricted(prog: StochasticProgram, scen, exempt, x0=None, y0=None) -> SmoothNLP:
    """Scenario-robust assembly with the exempt scenarios' f <= 0 rows dropped.

    Recourse feasibility rows h >= 0 are kept for every scenario; only
    the chance-constraint rows are lifted.
    """
    S = scen.count
    exempt = np.asarray(sorted(set(int(i) for i in exempt)), dtype=int)
    if exempt.size and (exempt[0] < 0 or exempt[-1] >= S):
        raise ValueError("exempt indices out of range [0, %d)" % S)
    included = np.ones(S, dtype=bool)
    included[exempt] = False
    x0, Y0 = _start_points(prog, scen, x0, y0)
    _check_contracts(prog, scen, x0, Y0)
    nlp = SmoothNLP("restricted", prog, scen, included=included)
    v0 = np.zeros(nlp.layout.n)
    v0[nlp.layout.x] = x0
    if prog.n2:
        v0[nlp.layout.y] = Y0.ravel()
    nlp.v0 = v0
    return nlp


def build_ss_saa(prog: StochasticProgram, scen, ss_params: SSParams,
                 level: RiskLevel, x0=None, y0=None) -> SmoothNLP:
    """Assemble the smooth sigmoidal SAA: mean kernel of z <= alpha."""
    x0, Y0 = _start_points(prog, scen, x0, y0)
    _check_contracts(prog, scen, x0, Y0)
    nlp = SmoothNLP("ss", prog, scen, level=level, ss_params=ss_params)
    z0 = _forward_z(prog, scen, x0, Y0)
    v0 = np.zeros(nlp.layout.n)
    v0[nlp.layout.x] = x0
    if prog.n2:
        v0[nlp.layout.y] = Y0.ravel()
    v0[nlp.layout.z] = z0
    nlp.v0 = v0
    return nlp


def phi_gap(nlp: SmoothNLP, v: np.ndarray) -> float:
    """Largest |phi_s - forward value| at a point (0 at a clean optimum).

    The forward value is max(smooth branch(z_s), 0) for the sigmoidal
    assembly and max(z_s - t, 0) for the CVaR assembly.
    """
    lay = nlp.layout
    if nlp.kind == "sigvar":
        target = np.maximum(nlp._sigvar_smooth(v[lay.z]), 0.0)
    elif nlp.kind == "cvar":
        target = np.maximum(v[lay.z] - v[lay.t], 0.0)
    else:
        raise ValueError("phi_gap applies to sigvar/cvar assemblies only")
    return float(np.max(np.abs(v[lay.phi] - target)))


def tighten_phi(nlp: SmoothNLP, v: np.ndarray) -> np.ndarray:
    """Project phi down to its forward value (feasibility-preserving).

    phi only appears in its lower-bound rows and the mean row, so
    replacing it with the forward value keeps the point feasible and the
    objective unchanged; it removes slack the solver may legitimately
    leave when the mean row is inactive.
    """
    lay = nlp.layout
    out = v.copy()
    if nlp.kind == "sigvar":
        out[lay.phi] = np.maximum(nlp._sigvar_smooth(v[lay.z]), 0.0)
    elif nlp.kind == "cvar":
        out[lay.phi] = np.maximum(v[lay.z] - v[lay.t], 0.0)
    else:
        raise ValueError("tighten_phi applies to sigvar/cvar assemblies only")
    return out
