"""Merging-zone joint energy/jerk solver.

Minimizing (1/2) * integral of rho1*u^2 + rho2*J^2 with jerk as the control
yields u as a linear polynomial plus two exponentials with rates +-k,
k = sqrt(rho1/rho2); speed and position follow by exact integration.  The
six integration constants come from one 6x6 linear system: entry position,
speed, and acceleration; exit position and speed; and vanishing jerk at the
exit (the free-terminal-acceleration condition).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConditioningError, ConfigError
from .model import MzTrajectory

_MAX_EXPONENT = 350.0
_MAX_COND = 1e14


@dataclass(frozen=True)
class MzProblem:
    """Boundary data for one vehicle's merging-zone crossing."""

    tm: float            # MZ entry time
    tf: float            # MZ exit time
    vm: float            # entry speed
    v_f: float           # exit speed
    um: float            # entry acceleration (CZ terminal control)
    path_length: float   # MZ path length for the movement
    rho1: float          # energy weight
    rho2: float          # jerk weight
    p_entry: float       # position of the MZ entrance (CZ length)
    vehicle_id: int = 0

    def __post_init__(self):
        if self.tf <= self.tm:
            raise ConfigError("require tf > tm")
        if self.rho1 <= 0 or self.rho2 <= 0:
            raise ConfigError("require rho1, rho2 > 0 (weight strictly inside (0,1))")
        if self.path_length <= 0:
            raise ConfigError("path length must be positive")


def solve_mz(prob: MzProblem) -> MzTrajectory:
    """Solve the 6x6 boundary system and return the closed-form trajectory.

    The growing exponential's column is rescaled by exp(-k T) before the
    solve so the matrix stays well conditioned; time is likewise shifted to
    s = t - tm so no absolute-time exponentials appear.
    """
    T = prob.tf - prob.tm
    r1, r2 = prob.rho1, prob.rho2
    k = math.sqrt(r1 / r2)
    if k * T > _MAX_EXPONENT:
        raise ConditioningError(
            f"exponential rate k*T = {k * T:.1f} too large to represent"
        )
    emkT = math.exp(-k * T)
    shift = r2 / r1  # the a-column's constant speed offset, times a/rho1

    def rows(s):
        """Rows of p, v, u, J at shifted time s; the fifth unknown is
        e_tilde = e * exp(kT), whose basis function is exp(k(s-T))."""
        E = math.exp(k * (s - T))
        F = math.exp(-k * s)
        p = [
            (s**3 / 6.0 + shift * s) / r1,
            s**2 / 2.0 / r1,
            s / r1,
            1.0 / r1,
            E,
            F,
        ]
        v = [(s**2 / 2.0 + shift) / r1, s / r1, 1.0 / r1, 0.0, k * E, -k * F]
        u = [s / r1, 1.0 / r1, 0.0, 0.0, k**2 * E, k**2 * F]
        jerk = [1.0 / r1, 0.0, 0.0, 0.0, k**3 * E, -(k**3) * F]
        return {"p": p, "v": v, "u": u, "J": jerk}

    at0 = rows(0.0)
    atT = rows(T)
    mat = np.array([at0["p"], at0["v"], at0["u"], atT["p"], atT["v"], atT["J"]])
    rhs = np.array(
        [
            prob.p_entry,
            prob.vm,
            prob.um,
            prob.p_entry + prob.path_length,
            prob.v_f,
            0.0,
        ]
    )
    # row equilibration
    norms = np.max(np.abs(mat), axis=1)
    mat_s = mat / norms[:, None]
    rhs_s = rhs / norms
    cond = np.linalg.cond(mat_s)
    if not np.isfinite(cond) or cond > _MAX_COND:
        raise ConditioningError(f"boundary system condition number {cond:.2e}")
    try:
        a, b, c, d, e_tilde, f = np.linalg.solve(mat_s, rhs_s)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError("singular merging-zone boundary system") from exc
    e = e_tilde * emkT
    return MzTrajectory(
        vehicle_id=prob.vehicle_id,
        a=a,
        b=b,
        c=c,
        d=d,
        e=e,
        f=f,
        rho1=r1,
        rho2=r2,
        tm=prob.tm,
        tf=prob.tf,
        p_entry=prob.p_entry,
        path_length=prob.path_length,
    )


def mz_residuals(traj: MzTrajectory, prob: MzProblem) -> np.ndarray:
    """Normalized boundary/transversality residuals of a solved trajectory."""
    p0, v0, u0, _ = traj.eval(prob.tm)
    pT, vT, _, jT = traj.eval(prob.tf)
    ls = max(1.0, abs(prob.p_entry) + prob.path_length)
    vs = max(1.0, abs(prob.vm), abs(prob.v_f))
    return np.array(
        [
            (p0 - prob.p_entry) / ls,
            (v0 - prob.vm) / vs,
            u0 - prob.um,
            (pT - prob.p_entry - prob.path_length) / ls,
            (vT - prob.v_f) / vs,
            jT,
        ]
    )


def _squared_integral(c0, c1, alpha, beta, k, T):
    """Exact integral over [0, T] of (c0 + c1 s + alpha e^{ks} + beta e^{-ks})^2.

    Products involving the growing exponential are grouped as
    A = alpha * e^{kT} so nothing overflows when alpha is tiny.
    """
    A = alpha * math.exp(k * T)
    emkT = math.exp(-k * T)
    poly = c0**2 * T + c0 * c1 * T**2 + c1**2 * T**3 / 3.0
    # cross terms with e^{ks}:  integral e^{ks} = (e^{kT}-1)/k, etc.
    cross_up = 2.0 * (
        c0 * (A - alpha) / k + c1 * ((T / k - 1.0 / k**2) * A + alpha / k**2)
    )
    cross_dn = 2.0 * (
        c0 * beta * (1.0 - emkT) / k
        + c1 * beta * (1.0 / k**2 - (T / k + 1.0 / k**2) * emkT)
    )
    sq_up = (A**2 - alpha**2) / (2.0 * k)
    sq_dn = beta**2 * (1.0 - emkT**2) / (2.0 * k)
    mixed = 2.0 * alpha * beta * T
    return poly + cross_up + cross_dn + sq_up + sq_dn + mixed


def mz_objective(traj: MzTrajectory):
    """Closed-form (energy, jerk, weighted) objective terms:
    integral of u^2, integral of J^2, and (1/2) integral of rho1 u^2 + rho2 J^2."""
    T = traj.tf - traj.tm
    k = traj.decay_rate
    r1 = traj.rho1
    energy = _squared_integral(
        traj.b / r1, traj.a / r1, traj.e * k**2, traj.f * k**2, k, T
    )
    jerk = _squared_integral(
        traj.a / r1, 0.0, traj.e * k**3, -traj.f * k**3, k, T
    )
    weighted = 0.5 * (traj.rho1 * energy + traj.rho2 * jerk)
    return energy, jerk, weighted
