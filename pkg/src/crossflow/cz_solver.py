"""Closed-form control-zone trajectory solver.

The unconstrained optimal control is linear in time, so position is cubic;
every constrained case (speed ceiling, control ceiling, rear-end safety)
appends one saturated or follow arc with continuity of position, speed, and
control at the junction.  Each case reduces to a small square equation
system solved by damped Newton, seeded by continuation from the
unconstrained solution; violation checks are exact (roots of linear and
quadratic expressions), never grid scans.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from .errors import (
    CaseInapplicable,
    ConfigError,
    DomainError,
    InfeasibleError,
    SolverError,
    UnsupportedCaseError,
)
from .model import (
    CostWeights,
    CruiseArc,
    CubicArc,
    CzTrajectory,
    FollowArc,
    IntersectionConfig,
    SaturatedArc,
    VehicleRecord,
    control_energy,
)

RES_TOL = 1e-8
STEP_TOL = 1e-10
MAX_ITER = 100
_VIOL_TOL = 1e-7


@dataclass(frozen=True)
class CzProblem:
    """One vehicle's control-zone problem: minimize gamma*(tm - t0) plus
    half the control energy, from rest-of-queue data already folded into the
    terminal window and the predecessor reference."""

    t0: float
    v0: float
    length: float
    gamma: float
    v_min: float
    v_max: float
    u_min: float
    u_max: float
    delta: float = 10.0
    tm: Optional[float] = None               # fixed terminal time, if any
    pred: Optional[CzTrajectory] = None      # vehicle physically ahead
    t_lower: Optional[float] = None
    t_upper: Optional[float] = None
    vehicle_id: int = 0

    def __post_init__(self):
        if not (0 < self.v_min < self.v_max):
            raise ConfigError("require 0 < v_min < v_max")
        if not (self.v_min <= self.v0 <= self.v_max):
            raise ConfigError("v0 must lie in [v_min, v_max]")
        if not (self.u_min < 0 < self.u_max):
            raise ConfigError("require u_min < 0 < u_max")
        if self.length <= 0 or self.gamma < 0:
            raise ConfigError("require length > 0 and gamma >= 0")

    @classmethod
    def from_record(
        cls,
        rec: VehicleRecord,
        cfg: IntersectionConfig,
        weights: CostWeights,
        **kwargs,
    ) -> "CzProblem":
        return cls(
            t0=rec.t0,
            v0=rec.v0,
            length=cfg.cz_length,
            gamma=weights.gamma,
            v_min=cfg.v_min,
            v_max=cfg.v_max,
            u_min=cfg.u_min,
            u_max=cfg.u_max,
            delta=cfg.safe_distance,
            vehicle_id=rec.vehicle_id,
            **kwargs,
        )


@dataclass(frozen=True)
class SolveReport:
    trajectory: CzTrajectory
    case: str
    residuals: np.ndarray

    @property
    def tm(self) -> float:
        return self.trajectory.tm

    @property
    def vm(self) -> float:
        return self.trajectory.vm

    @property
    def um(self) -> float:
        return self.trajectory.um

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residuals))) if self.residuals.size else 0.0


def cz_cost(traj: CzTrajectory, gamma: float) -> float:
    """Objective gamma*(tm - t0) + (1/2) * integral of u^2."""
    return gamma * (traj.tm - traj.t0) + 0.5 * control_energy(traj)


# ---------------------------------------------------------------------------
# Newton machinery


def _jacobian(residual, x, r0, h=1e-7):
    J = np.empty((r0.size, x.size))
    for j in range(x.size):
        step = h * max(1.0, abs(x[j]))
        xp = x.copy()
        xp[j] += step
        xm = x.copy()
        xm[j] -= step
        J[:, j] = (
            np.asarray(residual(xp), float) - np.asarray(residual(xm), float)
        ) / (2.0 * step)
    return J


def newton_solve(
    residual: Callable[[np.ndarray], Sequence[float]],
    x0: Sequence[float],
    step_tol: float = STEP_TOL,
    res_tol: float = RES_TOL,
    max_iter: int = MAX_ITER,
) -> Tuple[np.ndarray, np.ndarray]:
    """Damped Newton with numeric Jacobian and halving line search."""
    x = np.asarray(x0, float)
    r = np.asarray(residual(x), float)
    for _ in range(max_iter):
        if np.max(np.abs(r)) <= 0.01 * res_tol:
            break
        J = _jacobian(residual, x, r)
        try:
            dx = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as exc:
            raise SolverError("singular Jacobian in Newton step", residuals=r) from exc
        r_norm = np.linalg.norm(r)
        step = 1.0
        accepted = None
        while step >= 1e-12:
            xn = x + step * dx
            rn = np.asarray(residual(xn), float)
            if np.linalg.norm(rn) <= (1.0 - 1e-4 * step) * r_norm:
                accepted = (xn, rn)
                break
            step *= 0.5
        if accepted is None:
            break
        x, r = accepted
        if step * np.linalg.norm(dx) < step_tol:
            break
    if np.max(np.abs(r)) > res_tol:
        raise SolverError("Newton iteration did not converge", residuals=r)
    return x, r


# ---------------------------------------------------------------------------
# Helpers


def _absolute_cubic(a, b, c, d, t0):
    """Re-express p(s) = a s^3/6 + b s^2/2 + c s + d, s = t - t0, in t."""
    return (
        a,
        b - a * t0,
        c - b * t0 + a * t0**2 / 2.0,
        d - c * t0 + b * t0**2 / 2.0 - a * t0**3 / 6.0,
    )


def _cubic_eval(coeffs, t):
    a, b, c, d = coeffs
    p = a * t**3 / 6.0 + b * t**2 / 2.0 + c * t + d
    v = a * t**2 / 2.0 + b * t + c
    u = a * t + b
    return p, v, u


def _make_traj(prob, arcs) -> CzTrajectory:
    tm = arcs[-1].t_end
    _, vm, um = arcs[-1].eval(tm)
    return CzTrajectory(prob.vehicle_id, tuple(arcs), prob.t0, tm, vm, um)


def _arc_cubic_coeffs(arc):
    """Absolute cubic-position coefficients of a non-follow arc."""
    if isinstance(arc, CubicArc):
        return (arc.a, arc.b, arc.c, arc.d)
    if isinstance(arc, CruiseArc):
        return (0.0, 0.0, arc.speed, arc.p_start - arc.speed * arc.t_start)
    if isinstance(arc, SaturatedArc):
        t0, v0, p0, u = arc.t_start, arc.v_start, arc.p_start, arc.accel
        return (0.0, u, v0 - u * t0, p0 - v0 * t0 + u * t0**2 / 2.0)
    raise TypeError(f"arc {type(arc)!r} has no single cubic form")


def piecewise_cubics(traj: CzTrajectory, lo: float, hi: float, offset: float = 0.0):
    """Flatten a trajectory (extended past tm at constant speed) into
    absolute-time cubic position pieces covering [lo, hi]."""
    pieces: List[Tuple[float, float, Tuple[float, float, float, float]]] = []
    for arc in traj.arcs:
        a_lo = max(arc.t_start, lo)
        a_hi = min(arc.t_end, hi)
        if a_hi <= a_lo:
            continue
        if isinstance(arc, FollowArc):
            pieces.extend(
                piecewise_cubics(arc.predecessor, a_lo, a_hi, offset - arc.gap)
            )
        else:
            a, b, c, d = _arc_cubic_coeffs(arc)
            pieces.append((a_lo, a_hi, (a, b, c, d + offset)))
    if hi > traj.tm:
        p_m, _, _ = traj.eval(traj.tm)
        d = p_m - traj.vm * traj.tm + offset
        pieces.append((max(lo, traj.tm), hi, (0.0, 0.0, traj.vm, d)))
    return pieces


def _cubic_min_on(coeffs, lo, hi):
    """Exact minimum of a cubic-position form on [lo, hi]."""
    a, b, c, _ = coeffs
    cands = [lo, hi]
    # stationary points: a t^2/2 + b t + c = 0
    if abs(a) > 0:
        disc = b * b - 2.0 * a * c
        if disc >= 0:
            rt = math.sqrt(disc)
            for t in ((-b + rt) / a, (-b - rt) / a):
                if lo < t < hi:
                    cands.append(t)
    elif abs(b) > 0:
        t = -c / b
        if lo < t < hi:
            cands.append(t)
    vals = [(_cubic_eval(coeffs, t)[0], t) for t in cands]
    return min(vals)


def minimum_gap(follower: CzTrajectory, leader: CzTrajectory, lo: float, hi: float):
    """Exact minimum of leader position minus follower position on [lo, hi],
    leader extended past its terminal time at constant speed."""
    best = (math.inf, lo)
    for f_lo, f_hi, fc in piecewise_cubics(follower, lo, hi):
        for l_lo, l_hi, lc in piecewise_cubics(leader, lo, hi):
            a = max(f_lo, l_lo)
            b = min(f_hi, l_hi)
            if b <= a:
                continue
            diff = tuple(x - y for x, y in zip(lc, fc))
            val = _cubic_min_on(diff, a, b)
            if val[0] < best[0]:
                best = val
    return best


def first_gap_contact(
    follower: CzTrajectory, leader: CzTrajectory, delta: float, lo: float, hi: float
) -> Optional[float]:
    """Earliest time in [lo, hi] at which the bumper gap equals delta."""
    f_pieces = piecewise_cubics(follower, lo, hi)
    l_pieces = piecewise_cubics(leader, lo, hi)
    hits = []
    for f_lo, f_hi, fc in f_pieces:
        for l_lo, l_hi, lc in l_pieces:
            a = max(f_lo, l_lo)
            b = min(f_hi, l_hi)
            if b <= a:
                continue
            da, db, dc, dd = (x - y for x, y in zip(lc, fc))
            roots = np.roots([da / 6.0, db / 2.0, dc, dd - delta])
            for r in roots:
                if abs(r.imag) < 1e-9 and a - 1e-9 <= r.real <= b + 1e-9:
                    hits.append(float(r.real))
    return min(hits) if hits else None


# ---------------------------------------------------------------------------
# Unconstrained cases


def _shifted_unconstrained(v0, L, T):
    """Shifted-frame coefficients of the unconstrained cubic with horizon T."""
    a = 3.0 * (v0 * T - L) / T**3
    return a, -a * T, v0, 0.0


def solve_unconstrained_free(prob: CzProblem) -> SolveReport:
    """Free-terminal unconstrained solve: u*(t) linear, u*(tm) = 0, and the
    terminal Hamiltonian condition gamma + a*v(tm) = 0 picks the horizon."""
    v0, L, gamma = prob.v0, prob.length, prob.gamma
    if gamma == 0.0:
        T = L / v0
    else:

        def stationarity(T):
            a = 3.0 * (v0 * T - L) / T**3
            return gamma - 0.5 * a * a * T * T + a * v0

        T_hi = L / v0  # a = 0 there, residual = gamma > 0
        T_lo = T_hi
        for _ in range(200):
            T_lo /= 1.5
            if stationarity(T_lo) < 0.0:
                break
        else:
            raise SolverError("failed to bracket the free-terminal horizon")
        T = brentq(stationarity, T_lo, T_hi, xtol=1e-12, rtol=8.9e-16)
    a, b, c, d = _shifted_unconstrained(v0, L, T)
    tm = prob.t0 + T
    arc = CubicArc(*_absolute_cubic(a, b, c, d, prob.t0), prob.t0, tm)
    traj = _make_traj(prob, [arc])
    res = _unconstrained_residuals(prob, traj, free=True)
    return SolveReport(traj, "unconstrained_free", res)


def solve_unconstrained_fixed(prob: CzProblem, tm: Optional[float] = None) -> SolveReport:
    """Fixed-terminal unconstrained solve: the 4x4 linear system in the cubic
    coefficients (boundary states plus u(tm) = 0)."""
    tm = prob.tm if tm is None else tm
    if tm is None:
        raise ConfigError("fixed-terminal solve needs a terminal time")
    T = tm - prob.t0
    if T <= 0:
        raise DomainError("terminal time must exceed the entry time")
    mat = np.array(
        [
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, 1.0, 0.0],
            [T**3 / 6.0, T**2 / 2.0, T, 1.0],
            [T, 1.0, 0.0, 0.0],
        ]
    )
    a, b, c, d = np.linalg.solve(mat, np.array([0.0, prob.v0, prob.length, 0.0]))
    arc = CubicArc(*_absolute_cubic(a, b, c, d, prob.t0), prob.t0, tm)
    traj = _make_traj(prob, [arc])
    res = _unconstrained_residuals(prob, traj, free=False)
    return SolveReport(traj, "unconstrained_fixed", res)


def _unconstrained_residuals(prob, traj, free):
    L, vs = prob.length, prob.v_max
    p0, v0, _ = traj.eval(prob.t0)
    pm, vm, um = traj.eval(traj.tm)
    res = [p0 / L, (v0 - prob.v0) / vs, (pm - L) / L, um]
    if free:
        res.append(prob.gamma + traj.arcs[0].a * vm)
    return np.array(res)


# ---------------------------------------------------------------------------
# Saturated-speed and saturated-control arcs


def solve_vmax_arc(prob: CzProblem, tm: Optional[float] = None) -> SolveReport:
    """Cubic arc reaching v_max with u = 0 at the junction, then a cruise.

    Free-terminal instances close the system with gamma + a*v_max = 0, which
    fixes the cubic's slope outright; fixed-terminal instances drop it and
    the junction comes out of the boundary conditions alone.
    """
    tm = prob.tm if tm is None else tm
    free = tm is None
    v0, vmax, L, t0 = prob.v0, prob.v_max, prob.length, prob.t0
    if vmax - v0 < 1e-12:
        if tm is not None and abs(tm - t0 - L / vmax) > 1e-9:
            raise CaseInapplicable("cruise-only trajectory cannot meet tm")
        arc = CruiseArc(vmax, 0.0, t0, t0 + L / vmax)
        return SolveReport(_make_traj(prob, [arc]), "vmax", np.zeros(1))
    if free:
        if prob.gamma <= 0:
            raise CaseInapplicable("zero time weight never saturates v_max")
        a = -prob.gamma / vmax
        tau = math.sqrt(2.0 * (vmax - v0) / -a)
        p_tau = -a * tau**3 / 3.0 + v0 * tau  # b = -a*tau folded in
        T = tau + (L - p_tau) / vmax
    else:
        T = tm - t0
        tau = 3.0 * (vmax * T - L) / (vmax - v0)
        if tau <= 0:
            raise CaseInapplicable("v_max never binds for this terminal time")
        a = -2.0 * (vmax - v0) / tau**2
        p_tau = -a * tau**3 / 3.0 + v0 * tau
    if not (0.0 < tau < T):
        raise CaseInapplicable("v_max junction outside the horizon")
    b, c, d = -a * tau, v0, 0.0
    cubic = CubicArc(*_absolute_cubic(a, b, c, d, t0), t0, t0 + tau)
    cruise = CruiseArc(vmax, p_tau, t0 + tau, t0 + T)
    traj = _make_traj(prob, [cubic, cruise])
    _, v_tau, u_tau = traj.eval(t0 + tau)
    pm, _, _ = traj.eval(traj.tm)
    res = [
        (v_tau - vmax) / vmax,
        u_tau,
        (pm - L) / L,
    ]
    if free:
        res.append(prob.gamma + a * vmax)
    return SolveReport(traj, "vmax", np.array(res))


def solve_umax_arc(prob: CzProblem, tm: Optional[float] = None) -> SolveReport:
    """Saturated u_max arc from entry, then the unconstrained cubic, with
    control continuity at the junction."""
    tm = prob.tm if tm is None else tm
    free = tm is None
    t0, v0, L, vs, umax = prob.t0, prob.v0, prob.length, prob.v_max, prob.u_max
    seed = (
        solve_unconstrained_free(prob) if free else solve_unconstrained_fixed(prob, tm)
    )
    a0, b0, c0, d0 = _shifted_from_arc(seed.trajectory.arcs[0], t0)
    if b0 <= umax + 1e-12 or a0 >= 0:
        raise CaseInapplicable("entry control does not exceed u_max")
    tau0 = (umax - b0) / a0
    T0 = seed.tm - t0

    def residual(x):
        a, b, c, d, tau = x[:5]
        T = x[5] if free else tm - t0
        p_sat = v0 * tau + 0.5 * umax * tau**2
        v_sat = v0 + umax * tau
        pc, vc, uc = _cubic_eval((a, b, c, d), tau)
        pT, vT, uT = _cubic_eval((a, b, c, d), T)
        r = [
            (pc - p_sat) / L,
            (vc - v_sat) / vs,
            uc - umax,
            (pT - L) / L,
            uT,
        ]
        if free:
            r.append(prob.gamma + a * vT)
        return r

    x0 = [a0, b0, c0, d0, tau0] + ([T0] if free else [])
    x, res = newton_solve(residual, x0)
    a, b, c, d, tau = x[:5]
    T = x[5] if free else tm - t0
    if not (0.0 < tau < T):
        raise CaseInapplicable("u_max junction outside the horizon")
    sat = SaturatedArc(umax, 0.0, v0, t0, t0 + tau)
    cubic = CubicArc(*_absolute_cubic(a, b, c, d, t0), t0 + tau, t0 + T)
    traj = _make_traj(prob, [sat, cubic])
    return SolveReport(traj, "umax", res)


def solve_composite_umax_vmax(
    prob: CzProblem, tm: Optional[float] = None
) -> SolveReport:
    """Three arcs: saturated u_max, unconstrained cubic, v_max cruise, solved
    as one stacked system with both junctions as unknowns."""
    tm = prob.tm if tm is None else tm
    free = tm is None
    t0, v0, L, vs = prob.t0, prob.v0, prob.length, prob.v_max
    umax, vmax = prob.u_max, prob.v_max

    # Continuation seed: the free composite has a = -gamma/vmax and both
    # junctions in closed form; it is a good start for fixed tm too.
    gamma_seed = prob.gamma if prob.gamma > 0 else 0.1
    a0 = -gamma_seed / vmax
    tau1_0 = (vmax - v0) / umax + umax / (2.0 * a0)
    if tau1_0 <= 0:
        raise CaseInapplicable("u_max phase vanishes; not a composite case")
    tau2_0 = tau1_0 - umax / a0
    b0 = -a0 * tau2_0
    v1 = v0 + umax * tau1_0
    c0 = v1 - (a0 * tau1_0**2 / 2.0 + b0 * tau1_0)
    p1 = v0 * tau1_0 + 0.5 * umax * tau1_0**2
    d0 = p1 - (a0 * tau1_0**3 / 6.0 + b0 * tau1_0**2 / 2.0 + c0 * tau1_0)
    p2 = _cubic_eval((a0, b0, c0, d0), tau2_0)[0]
    T0 = tau2_0 + (L - p2) / vmax if free else tm - t0

    def residual(x):
        a, b, c, d, tau1, tau2 = x[:6]
        T = x[6] if free else tm - t0
        p_sat = v0 * tau1 + 0.5 * umax * tau1**2
        v_sat = v0 + umax * tau1
        pj1, vj1, uj1 = _cubic_eval((a, b, c, d), tau1)
        pj2, vj2, uj2 = _cubic_eval((a, b, c, d), tau2)
        r = [
            (pj1 - p_sat) / L,
            (vj1 - v_sat) / vs,
            uj1 - umax,
            (vj2 - vmax) / vs,
            uj2,
            (pj2 + vmax * (T - tau2) - L) / L,
        ]
        if free:
            r.append(prob.gamma + a * vmax)
        return r

    x0 = [a0, b0, c0, d0, tau1_0, tau2_0] + ([T0] if free else [])
    x, res = newton_solve(residual, x0)
    a, b, c, d, tau1, tau2 = x[:6]
    T = x[6] if free else tm - t0
    if not (0.0 < tau1 < tau2 < T):
        raise CaseInapplicable("composite junction ordering failed")
    p2 = _cubic_eval((a, b, c, d), tau2)[0]
    arcs = [
        SaturatedArc(umax, 0.0, v0, t0, t0 + tau1),
        CubicArc(*_absolute_cubic(a, b, c, d, t0), t0 + tau1, t0 + tau2),
        CruiseArc(vmax, p2, t0 + tau2, t0 + T),
    ]
    return SolveReport(_make_traj(prob, arcs), "composite_umax_vmax", res)


def _shifted_from_arc(arc: CubicArc, t0: float):
    """Shifted-frame (s = t - t0) coefficients of an absolute cubic arc."""
    a, b, c, d = arc.a, arc.b, arc.c, arc.d
    return (
        a,
        b + a * t0,
        c + b * t0 + a * t0**2 / 2.0,
        d + c * t0 + b * t0**2 / 2.0 + a * t0**3 / 6.0,
    )


# ---------------------------------------------------------------------------
# Rear-end safety cases


def _solve_follow_junction(prob, pred, tau_hint, horizon):
    """Entry subsystem shared by both safety cases: cubic from the entry
    state meeting the predecessor's trajectory tangentially (position at gap
    delta, speed and control continuous) at an unknown junction.

    Solved in the shifted frame s = t - t0, where the entry conditions pin
    two coefficients exactly and the junction powers stay small; absolute-
    time cubics around large t are numerically hopeless."""
    L, vs, t0, v0 = prob.length, prob.v_max, prob.t0, prob.v0

    def residual(x):
        a, b, s = x
        pk, vk, uk = pred.eval_extended(t0 + s)
        return [
            a * s + b - uk,
            (a * s**3 / 6.0 + b * s**2 / 2.0 + v0 * s + prob.delta - pk) / L,
            (a * s**2 / 2.0 + b * s + v0 - vk) / vs,
        ]

    base = solve_unconstrained_fixed(prob, horizon)
    a0, b0, _, _ = _shifted_from_arc(base.trajectory.arcs[0], t0)
    x, res = newton_solve(residual, [a0, b0, tau_hint - t0])
    a, b, s = x
    return (*_absolute_cubic(a, b, v0, 0.0, t0), t0 + s), res


def solve_safety_no_exit(
    prob: CzProblem, pred: CzTrajectory, tm: Optional[float] = None
) -> SolveReport:
    """Safety-constrained case with no exit: cubic until the junction, then
    follow the predecessor at gap delta all the way to the MZ."""
    tm = prob.tm if tm is None else tm
    if tm is None:
        raise ConfigError("the no-exit safety case needs a fixed terminal time")
    pk0, _, _ = pred.eval_extended(prob.t0)
    if pk0 <= prob.delta:
        raise InfeasibleError("gap already below delta at CZ entry")
    # only applicable when the terminal time is pinned by the predecessor:
    # the follow arc must actually land at the zone end at tm
    p_end = pred.eval_extended(tm)[0] - prob.delta
    if abs(p_end - prob.length) > 1e-3 * prob.length:
        raise CaseInapplicable("follow arc does not terminate at the zone end")
    tau_hint = _contact_hint(prob, pred, tm)
    x, res = _solve_follow_junction(prob, pred, tau_hint, tm)
    a, b, c, d, tau = x
    if not (prob.t0 < tau < tm - 1e-9):
        raise CaseInapplicable("follow junction outside (t0, tm)")
    arcs = [
        CubicArc(a, b, c, d, prob.t0, tau),
        FollowArc(pred, prob.delta, tau, tm),
    ]
    return SolveReport(_make_traj(prob, arcs), "safety_no_exit", res)


def solve_safety_with_exit(
    prob: CzProblem, pred: CzTrajectory, tm: Optional[float] = None
) -> SolveReport:
    """Safety-constrained case with an exit: cubic, follow arc, cubic.  The
    entry junction system is independent of the exit one, so the two are
    solved separately and pieced together."""
    tm = prob.tm if tm is None else tm
    free = tm is None
    pk0, _, _ = pred.eval_extended(prob.t0)
    if pk0 <= prob.delta:
        raise InfeasibleError("gap already below delta at CZ entry")
    horizon = tm if tm is not None else pred.tm + prob.delta / pred.vm
    tau_hint = _contact_hint(prob, pred, horizon)
    x_in, res_in = _solve_follow_junction(prob, pred, tau_hint, horizon)
    a, b, c, d, tau1 = x_in
    if tau1 <= prob.t0:
        raise CaseInapplicable("entry junction before CZ entry")
    L, vs = prob.length, prob.v_max
    tm0 = horizon
    tau2_0 = 0.5 * (tau1 + tm0)

    # exit frame s = t - tm: the terminal conditions u(tm) = 0, p(tm) = L
    # pin the linear control coefficient and the position offset exactly,
    # leaving (e, q, s2) with small junction powers
    def residual(x):
        e, q, s2 = x[:3]
        T = x[3] if free else tm
        pk, vk, uk = pred.eval_extended(T + s2)
        out = [
            e * s2 - uk,
            (e * s2**3 / 6.0 + q * s2 + L + prob.delta - pk) / L,
            (e * s2**2 / 2.0 + q - vk) / vs,
        ]
        if free:
            out.append(prob.gamma + e * q)
        return out

    def exit_seed(tau2, T):
        s2 = tau2 - T
        pk, vk, uk = pred.eval_extended(tau2)
        e = uk / s2 if abs(s2) > 1e-9 else 0.0
        q = vk - e * s2**2 / 2.0
        return [e, q, s2]

    x0 = exit_seed(tau2_0, tm0) + ([tm0] if free else [])
    x, res_out = newton_solve(residual, x0)
    e_s, q_s, s2 = x[:3]
    tm_out = x[3] if free else tm
    tau2 = tm_out + s2
    e, r, q, m = _absolute_cubic(e_s, 0.0, q_s, L, tm_out)
    if tau2 < tau1:
        raise InfeasibleError("exit junction precedes entry junction")
    if tau2 >= tm_out - 1e-9:
        raise CaseInapplicable("no exit junction inside the horizon")
    arcs = [
        CubicArc(a, b, c, d, prob.t0, tau1),
        FollowArc(pred, prob.delta, tau1, tau2),
        CubicArc(e, r, q, m, tau2, tm_out),
    ]
    res = np.concatenate([res_in, res_out])
    return SolveReport(_make_traj(prob, arcs), "safety_with_exit", res)


def _contact_hint(prob, pred, tm):
    """Junction seed: where the unconstrained candidate first closes to the
    safe gap (midpoint fallback when tangency makes the root degenerate)."""
    cand = solve_unconstrained_fixed(prob, tm)
    hit = first_gap_contact(cand.trajectory, pred, prob.delta, prob.t0, tm)
    if hit is None:
        raise CaseInapplicable("safety constraint never activates")
    return max(hit, prob.t0 + 1e-6)


# ---------------------------------------------------------------------------
# Violation scanning (exact, no grids)


def scan_violations(traj: CzTrajectory, prob: CzProblem, tol: float = _VIOL_TOL):
    """Names of box constraints an unconstrained/partially constrained
    candidate violates, plus 'gap' when the rear-end constraint does."""
    out = set()
    for arc in traj.arcs:
        if not isinstance(arc, CubicArc):
            continue
        lo, hi = arc.t_start, arc.t_end
        u_ends = (arc.a * lo + arc.b, arc.a * hi + arc.b)
        if max(u_ends) > prob.u_max + tol:
            out.add("u_max")
        if min(u_ends) < prob.u_min - tol:
            out.add("u_min")
        cands = [lo, hi]
        if arc.a != 0 and lo < -arc.b / arc.a < hi:
            cands.append(-arc.b / arc.a)
        speeds = [arc.eval(t)[1] for t in cands]
        if max(speeds) > prob.v_max + tol:
            out.add("v_max")
        if min(speeds) < prob.v_min - tol:
            out.add("v_min")
    if prob.pred is not None:
        gap, _ = minimum_gap(traj, prob.pred, traj.t0, traj.tm)
        if gap < prob.delta - 5e-7:
            out.add("gap")
    return out


# ---------------------------------------------------------------------------
# Composition


def _minimal_crossing_time(prob: CzProblem) -> float:
    """Shortest physically achievable crossing: full throttle to the speed
    cap, then cruise."""
    t_accel = (prob.v_max - prob.v0) / prob.u_max
    d_accel = prob.v0 * t_accel + 0.5 * prob.u_max * t_accel**2
    if d_accel >= prob.length:
        disc = prob.v0**2 + 2.0 * prob.u_max * prob.length
        return (math.sqrt(disc) - prob.v0) / prob.u_max
    return t_accel + (prob.length - d_accel) / prob.v_max


def solve_cz(prob: CzProblem) -> SolveReport:
    """Full control-zone solve: unconstrained first, terminal window clamp,
    then constraint-activation cases with re-checks until clean."""
    t_lo = prob.t_lower if prob.t_lower is not None else -math.inf
    t_hi = prob.t_upper if prob.t_upper is not None else math.inf
    if t_lo > t_hi + 1e-12:
        raise InfeasibleError(
            "terminal-time window is empty", t_lower=t_lo, t_upper=t_hi
        )
    if prob.tm is not None:
        if not (t_lo - 1e-9 <= prob.tm <= t_hi + 1e-9):
            raise InfeasibleError(
                "requested terminal time outside the window", t_lo, t_hi
            )
        if prob.tm - prob.t0 < _minimal_crossing_time(prob) - 1e-9:
            raise InfeasibleError(
                "terminal time below the minimal achievable crossing time"
            )
        free, tm = False, prob.tm
        rep = solve_unconstrained_fixed(prob, tm)
        clamped = False
    else:
        # a clamp here is provisional: constrained-arc cases re-solve their
        # free variant and only pin the terminal time if it leaves the window
        rep = solve_unconstrained_free(prob)
        free, tm, clamped = True, rep.tm, False
        if rep.tm < t_lo - 1e-12:
            tm, clamped = t_lo, True
            rep = solve_unconstrained_fixed(prob, tm)
        elif rep.tm > t_hi + 1e-12:
            tm, clamped = t_hi, True
            rep = solve_unconstrained_fixed(prob, tm)

    applied = set()
    for _ in range(8):
        viol = scan_violations(rep.trajectory, prob)
        if not viol:
            return rep
        if "gap" in applied:
            raise UnsupportedCaseError(
                "combined safety and saturated-arc case unsupported"
            )
        if "v_min" in viol or "u_min" in viol:
            if free and not clamped:
                raise SolverError(
                    "free-terminal candidate activated a lower bound; "
                    "this contradicts the unconstrained structure"
                )
            raise UnsupportedCaseError(
                "fixed-terminal instance requires a v_min/u_min arc"
            )
        try:
            if "gap" in viol:
                if applied & {"u_max", "v_max"}:
                    raise UnsupportedCaseError(
                        "combined safety and saturated-arc case unsupported"
                    )
                rep, free, tm = _dispatch_safety(prob, free, tm, t_lo, t_hi)
                applied.add("gap")
            elif ("u_max" in viol and ("v_max" in viol or "v_max" in applied)) or (
                "v_max" in viol and "u_max" in applied
            ):
                try:
                    rep, free, tm = _case(
                        solve_composite_umax_vmax, prob, free, tm, t_lo, t_hi
                    )
                except CaseInapplicable:
                    # saturated phase vanishes at the boundary of the
                    # composite region; a single speed-limited arc suffices
                    rep, free, tm = _case(solve_vmax_arc, prob, free, tm, t_lo, t_hi)
                applied |= {"u_max", "v_max"}
            elif "u_max" in viol:
                rep, free, tm = _case(solve_umax_arc, prob, free, tm, t_lo, t_hi)
                applied.add("u_max")
            else:
                rep, free, tm = _case(solve_vmax_arc, prob, free, tm, t_lo, t_hi)
                applied.add("v_max")
        except CaseInapplicable as exc:
            raise SolverError(f"no applicable constrained case: {exc}") from exc
    raise SolverError("constraint composition did not converge")


def _case(fn, prob, free, tm, t_lo, t_hi):
    """Run a constrained case, clamping a free solution whose terminal time
    leaves the window back into fixed mode."""
    if free:
        rep = fn(prob, None)
        if rep.tm < t_lo - 1e-12:
            return fn(prob, t_lo), False, t_lo
        if rep.tm > t_hi + 1e-12:
            return fn(prob, t_hi), False, t_hi
        return rep, True, rep.tm
    return fn(prob, tm), False, tm


def _dispatch_safety(prob, free, tm, t_lo, t_hi):
    try:
        return _case(
            lambda p, t: solve_safety_with_exit(p, p.pred, t), prob, free, tm, t_lo, t_hi
        )
    except (CaseInapplicable, SolverError):
        tm_fixed = tm if not free else max(tm, t_lo)
        rep = solve_safety_no_exit(prob, prob.pred, tm_fixed)
        return rep, False, tm_fixed
