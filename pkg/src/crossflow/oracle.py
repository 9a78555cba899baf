"""Brute-force verification oracles.

Both oracles optimize over piecewise-constant controls with the interval
dynamics integrated exactly, so every discrete candidate corresponds to a
feasible continuous-time trajectory and the discrete optimum can never beat
the analytic one.  The control-zone oracle scans candidate terminal times on
a refining grid and solves each fixed-horizon problem as an equality-
constrained least-squares step (with a convex-programming fallback when box
or safety constraints bind); the merging-zone oracle is one exact KKT solve
over piecewise-constant jerk.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .cz_solver import CzProblem
from .errors import InfeasibleError
from .mz_solver import MzProblem


@dataclass(frozen=True)
class GridSpec:
    """Discretization of the oracle search (desk scale only)."""

    h: float = 0.05              # control interval [s]
    tm_samples: int = 41         # candidate terminal times per refinement level
    refine_levels: int = 2
    t_lower: Optional[float] = None   # horizon bound overrides
    t_upper: Optional[float] = None


# ---------------------------------------------------------------------------
# Control zone


def _kinematic_bounds(prob: CzProblem) -> Tuple[float, float]:
    """Earliest/latest MZ entry reachable inside the state/control box,
    derived directly from the saturate-then-cruise kinematics."""
    L, v0 = prob.length, prob.v0
    d_acc = (prob.v_max**2 - v0**2) / (2.0 * prob.u_max)
    if d_acc <= L:
        lo = L / prob.v_max + (prob.v_max - v0) ** 2 / (2.0 * prob.u_max * prob.v_max)
    else:
        lo = (math.sqrt(2.0 * L * prob.u_max + v0**2) - v0) / prob.u_max
    d_dec = (v0**2 - prob.v_min**2) / (2.0 * -prob.u_min)
    if d_dec <= L:
        hi = L / prob.v_min + (prob.v_min - v0) ** 2 / (2.0 * prob.u_min * prob.v_min)
    else:
        hi = (math.sqrt(2.0 * L * prob.u_min + v0**2) - v0) / prob.u_min
    return prob.t0 + lo, prob.t0 + hi


def _fixed_horizon_cost(prob: CzProblem, tm: float, h_target: float):
    """Best piecewise-constant-control cost for one terminal time, or None
    when no discrete control is feasible."""
    T = tm - prob.t0
    if T <= 0:
        return None
    n = max(2, int(round(T / h_target)))
    h = T / n
    t_knots = h * np.arange(n + 1)
    # terminal position is linear in the controls: p(T) = v0*T + w @ u
    w = h * (T - (np.arange(n) + 0.5) * h)
    r = prob.length - prob.v0 * T
    u = r * w / (w @ w)
    ok = (
        u.max() <= prob.u_max + 1e-9
        and u.min() >= prob.u_min - 1e-9
        and _states_feasible(prob, u, h, t_knots)
    )
    if ok:
        cost = prob.gamma * T + 0.5 * h * float(u @ u)
        return cost, _expand(prob, u, h, t_knots)
    return _qp_fallback(prob, T, n, h, w, r, t_knots)


def _states_feasible(prob, u, h, t_knots, tol=1e-9):
    v = prob.v0 + h * np.concatenate([[0.0], np.cumsum(u)])
    if v.max() > prob.v_max + tol or v.min() < prob.v_min - tol:
        return False
    if prob.pred is not None:
        p = _positions(prob, u, h, t_knots)
        pk, _, _ = prob.pred.sample_extended(prob.t0 + t_knots)
        if np.min(pk - p) < prob.delta - 1e-6:
            return False
    return True


def _positions(prob, u, h, t_knots):
    dv = np.concatenate([[0.0], np.cumsum(u)]) * h
    v = prob.v0 + dv
    dp = v[:-1] * h + 0.5 * u * h**2
    return np.concatenate([[0.0], np.cumsum(dp)])


def _expand(prob, u, h, t_knots):
    return {
        "t": prob.t0 + t_knots,
        "u": u,
        "v": prob.v0 + h * np.concatenate([[0.0], np.cumsum(u)]),
        "p": _positions(prob, u, h, t_knots),
    }


def _qp_fallback(prob, T, n, h, w, r, t_knots):
    import cvxpy as cp

    u = cp.Variable(n)
    v = prob.v0 + h * cp.cumsum(u)
    cons = [
        w @ u == r,
        u <= prob.u_max,
        u >= prob.u_min,
        v <= prob.v_max,
        v >= prob.v_min,
    ]
    if prob.pred is not None:
        pmat = np.zeros((n, n))
        for j in range(1, n + 1):
            i = np.arange(j)
            pmat[j - 1, : j] = h**2 * (j - i - 0.5)
        p = pmat @ u + prob.v0 * t_knots[1:]
        pk, _, _ = prob.pred.sample_extended(prob.t0 + t_knots[1:])
        cons.append(p <= pk - prob.delta)
    problem = cp.Problem(cp.Minimize(cp.sum_squares(u)), cons)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            problem.solve()
    except cp.error.SolverError:
        return None
    if problem.status not in ("optimal", "optimal_inaccurate") or u.value is None:
        return None
    uv = np.asarray(u.value, float)
    cost = prob.gamma * T + 0.5 * h * float(uv @ uv)
    return cost, _expand(prob, uv, h, t_knots)


def brute_force_cz(prob: CzProblem, grid: GridSpec = GridSpec()):
    """Search terminal times (or use the fixed one) and return
    (best cost, best terminal time, discrete trajectory)."""
    if prob.tm is not None:
        result = _fixed_horizon_cost(prob, prob.tm, grid.h)
        if result is None:
            raise InfeasibleError("no feasible discrete control at the fixed tm")
        return result[0], prob.tm, result[1]
    k_lo, k_hi = _kinematic_bounds(prob)
    lo = max(filter(None, [grid.t_lower, prob.t_lower, k_lo]))
    hi = min(filter(None, [grid.t_upper, prob.t_upper, k_hi]))
    if lo > hi:
        raise InfeasibleError("empty terminal window", t_lower=lo, t_upper=hi)
    best = None
    for _ in range(grid.refine_levels + 1):
        tms = np.linspace(lo, hi, grid.tm_samples)
        spacing = tms[1] - tms[0] if len(tms) > 1 else 0.0
        for tm in tms:
            result = _fixed_horizon_cost(prob, tm, grid.h)
            if result is None:
                continue
            if best is None or result[0] < best[0]:
                best = (result[0], tm, result[1])
        if best is None:
            raise InfeasibleError("no feasible discrete control in the window")
        lo = max(lo, best[1] - 2.0 * spacing)
        hi = min(hi, best[1] + 2.0 * spacing)
    return best


# ---------------------------------------------------------------------------
# Merging zone


def brute_force_mz(prob: MzProblem, grid: GridSpec = GridSpec()):
    """Exact KKT solve of the piecewise-constant-jerk transcription.

    Entry states are fixed by construction; the two terminal equalities
    (exit position and speed) enter through multipliers, and terminal
    acceleration is left free, matching the analytic transversality.
    """
    T = prob.tf - prob.tm
    n = max(2, int(round(T / grid.h)))
    h = T / n
    # u_j = um + h * (prefix sums of J)  ->  u = um + M @ J
    M = h * np.tril(np.ones((n, n)), k=-1)
    ones = np.ones(n)
    a0 = prob.um * ones
    # exact per-interval integrals of u^2 and J^2
    # E(J) = h|u|^2 + h^2 u.J + h^3/3 |J|^2 with u = a0 + M J
    E_hess = 2.0 * h * M.T @ M + h**2 * (M + M.T) + (2.0 * h**3 / 3.0) * np.eye(n)
    E_grad = 2.0 * h * M.T @ a0 + h**2 * a0
    H = 0.5 * (prob.rho1 * E_hess + 2.0 * prob.rho2 * h * np.eye(n))
    g = 0.5 * prob.rho1 * E_grad
    # terminal speed: v(T) = vm + h*sum(u) + h^2/2 * sum(J)
    row_v = h * ones @ M + 0.5 * h**2 * ones
    b_v = prob.v_f - prob.vm - h * float(ones @ a0)
    # terminal position by exact propagation of the affine state maps
    v_lin = np.zeros(n)
    v_const = prob.vm
    p_lin = np.zeros(n)
    p_const = 0.0
    for j in range(n):
        u_lin = M[j]
        p_lin = p_lin + h * v_lin + 0.5 * h**2 * u_lin
        p_lin[j] += h**3 / 6.0
        p_const += h * v_const + 0.5 * h**2 * a0[j]
        v_lin = v_lin + h * u_lin
        v_lin[j] += 0.5 * h**2
        v_const += h * a0[j]
    A = np.vstack([row_v, p_lin])
    b = np.array([b_v, prob.path_length - p_const])
    kkt = np.block([[H, A.T], [A, np.zeros((2, 2))]])
    sol = np.linalg.solve(kkt, np.concatenate([-g, b]))
    J = sol[:n]
    u = a0 + M @ J
    energy = h * float(u @ u) + h**2 * float(u @ J) + h**3 / 3.0 * float(J @ J)
    jerk = h * float(J @ J)
    cost = 0.5 * (prob.rho1 * energy + prob.rho2 * jerk)
    t = prob.tm + h * np.arange(n + 1)
    v = prob.vm + np.concatenate([[0.0], np.cumsum(h * u + 0.5 * h**2 * J)])
    dp = h * v[:-1] + 0.5 * h**2 * u + h**3 / 6.0 * J
    p = prob.p_entry + np.concatenate([[0.0], np.cumsum(dp)])
    traj = {"t": t, "J": J, "u": np.concatenate([u, [u[-1] + h * J[-1]]]), "v": v, "p": p}
    return cost, traj
