"""Core domain types: intersection geometry, vehicles, cost weights, and the
piecewise closed-form trajectories produced by the control-zone and
merging-zone solvers.

Trajectories carry their governing algebraic forms (cubic position
polynomials, saturated arcs, follow-the-predecessor arcs, and the
polynomial-plus-exponential merging-zone form) rather than sampled points;
sampling is an export-time concern.
"""
from __future__ import annotations

import enum
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

from .errors import ConfigError, DomainError


class Origin(enum.Enum):
    N = "N"
    E = "E"
    S = "S"
    W = "W"


class Turn(enum.IntEnum):
    LEFT = 0
    STRAIGHT = 1
    RIGHT = 2


# Unit heading of travel for a vehicle entering from each approach.
_HEADINGS = {
    Origin.N: (0, -1),
    Origin.S: (0, 1),
    Origin.E: (-1, 0),
    Origin.W: (1, 0),
}

_SIDE_BY_HEADING = {
    (0, 1): Origin.N,
    (0, -1): Origin.S,
    (1, 0): Origin.E,
    (-1, 0): Origin.W,
}


@dataclass(frozen=True)
class Movement:
    """An approach direction plus the turn taken at the intersection."""

    origin: Origin
    turn: Turn

    @property
    def heading_in(self) -> Tuple[int, int]:
        return _HEADINGS[self.origin]

    @property
    def heading_out(self) -> Tuple[int, int]:
        hx, hy = self.heading_in
        if self.turn is Turn.LEFT:
            return (-hy, hx)
        if self.turn is Turn.RIGHT:
            return (hy, -hx)
        return (hx, hy)

    @property
    def destination(self) -> Origin:
        """Side of the intersection through which the vehicle exits."""
        return _SIDE_BY_HEADING[self.heading_out]

    def __str__(self) -> str:
        return f"{self.origin.value}-{self.turn.name.lower()}"


ALL_MOVEMENTS: Tuple[Movement, ...] = tuple(
    Movement(o, t) for o in Origin for t in Turn
)


@dataclass(frozen=True)
class IntersectionConfig:
    """Geometry and admissible-range parameters of a symmetric four-way,
    single-lane-per-direction intersection."""

    cz_length: float = 400.0          # L, control-zone segment length [m]
    mz_side: float = 30.0             # S, merging-zone square side [m]
    safe_distance: float = 10.0       # delta, minimal rear-end gap [m]
    v_min: float = 5.0                # [m/s]
    v_max: float = 15.0               # [m/s]
    u_min: float = -0.5               # [m/s^2]
    u_max: float = 0.5                # [m/s^2]
    side_friction: float = 0.3        # F, dimensionless
    super_elevation: float = 0.0      # E, dimensionless (zero in urban settings)
    exit_speed: float = 10.0          # common MZ exit speed v_f [m/s]
    left_path: Optional[float] = None   # S_L; default (3/8)*pi*S
    right_path: Optional[float] = None  # S_R; default (1/8)*pi*S
    turn_radius_left: Optional[float] = None   # default 3S/4 (centerline)
    turn_radius_right: Optional[float] = None  # default S/4
    straight_transit_time: float = 3.0  # Delta^1 [s], used if no override
    # Optional fixed MZ transit times (left, straight, right) [s]; when
    # present these win over the turn-geometry formula.
    transit_time_override: Optional[Tuple[float, float, float]] = None

    def __post_init__(self):
        if not (self.cz_length > self.mz_side > 0):
            raise ConfigError("require cz_length > mz_side > 0")
        if self.safe_distance <= 0:
            raise ConfigError("safe_distance must be positive")
        if not (0 < self.v_min < self.v_max):
            raise ConfigError("require 0 < v_min < v_max")
        if not (self.u_min < 0 < self.u_max):
            raise ConfigError("require u_min < 0 < u_max")
        if not (self.v_min <= self.exit_speed <= self.v_max):
            raise ConfigError("exit_speed must lie in [v_min, v_max]")
        if not (self.path_right < self.mz_side < self.path_left):
            raise ConfigError("require S_R < S < S_L")

    @property
    def path_left(self) -> float:
        if self.left_path is not None:
            return self.left_path
        return 0.375 * math.pi * self.mz_side

    @property
    def path_right(self) -> float:
        if self.right_path is not None:
            return self.right_path
        return 0.125 * math.pi * self.mz_side

    @property
    def radius_left(self) -> float:
        if self.turn_radius_left is not None:
            return self.turn_radius_left
        return 0.75 * self.mz_side

    @property
    def radius_right(self) -> float:
        if self.turn_radius_right is not None:
            return self.turn_radius_right
        return 0.25 * self.mz_side

    def turn_radius(self, turn: Turn) -> float:
        if turn is Turn.LEFT:
            return self.radius_left
        if turn is Turn.RIGHT:
            return self.radius_right
        raise ConfigError("straight movements have no turn radius")


def path_length(movement: Movement, cfg: IntersectionConfig) -> float:
    """Length of the merging-zone path for a movement (S_L / S / S_R)."""
    if movement.turn is Turn.LEFT:
        return cfg.path_left
    if movement.turn is Turn.RIGHT:
        return cfg.path_right
    return cfg.mz_side


@dataclass(frozen=True)
class VehicleRecord:
    """A vehicle as registered with the coordinator on CZ entry."""

    vehicle_id: int          # FIFO queue index, 1-based
    movement: Movement
    t0: float                # CZ entry time [s]
    v0: float                # CZ entry speed [m/s]
    transit_time: float      # Delta_i, MZ transit time [s]


@dataclass(frozen=True)
class CostWeights:
    """Weights of the two convex-combination objectives.

    beta trades travel time against control energy in the CZ; w trades
    energy against jerk in the MZ.  u_scale is the normalizing control
    magnitude (max{u_max, |u_min|}); jerk_scale normalizes the jerk term.
    """

    beta: float = 0.5
    w: float = 0.5
    u_scale: float = 0.5
    jerk_scale: float = 10.0

    def __post_init__(self):
        if not (0 <= self.beta < 1):
            raise ConfigError("beta must lie in [0, 1)")
        if not (0 < self.w < 1):
            raise ConfigError("w must lie strictly inside (0, 1)")
        if self.u_scale <= 0 or self.jerk_scale <= 0:
            raise ConfigError("scales must be positive")

    @property
    def gamma(self) -> float:
        """gamma_1 / (2 gamma_2) with gamma_1 = beta, gamma_2 = (1-beta)/u_scale^2."""
        return self.beta * self.u_scale**2 / (2.0 * (1.0 - self.beta))

    @property
    def q1(self) -> float:
        return 1.0 / self.u_scale**2

    @property
    def q2(self) -> float:
        return 1.0 / self.jerk_scale**2

    @property
    def rho1(self) -> float:
        return self.w * self.q1

    @property
    def rho2(self) -> float:
        return (1.0 - self.w) * self.q2


# ---------------------------------------------------------------------------
# Control-zone arcs


@dataclass(frozen=True)
class CubicArc:
    """Unconstrained arc: p(t) = a t^3/6 + b t^2/2 + c t + d (absolute time)."""

    a: float
    b: float
    c: float
    d: float
    t_start: float
    t_end: float

    kind = "cubic"

    def eval(self, t):
        p = self.a * t**3 / 6.0 + self.b * t**2 / 2.0 + self.c * t + self.d
        v = self.a * t**2 / 2.0 + self.b * t + self.c
        u = self.a * t + self.b
        return p, v, u


@dataclass(frozen=True)
class CruiseArc:
    """Saturated-speed arc (v_max or v_min cruise)."""

    speed: float
    p_start: float
    t_start: float
    t_end: float

    kind = "cruise"

    def eval(self, t):
        return self.p_start + self.speed * (t - self.t_start), self.speed, 0.0


@dataclass(frozen=True)
class SaturatedArc:
    """Saturated-control arc (u_max or u_min held constant)."""

    accel: float
    p_start: float
    v_start: float
    t_start: float
    t_end: float

    kind = "saturated"

    def eval(self, t):
        dt = t - self.t_start
        p = self.p_start + self.v_start * dt + 0.5 * self.accel * dt**2
        v = self.v_start + self.accel * dt
        return p, v, self.accel


@dataclass(frozen=True)
class FollowArc:
    """Constrained arc tracking the predecessor at the minimal safe gap."""

    predecessor: "CzTrajectory"
    gap: float
    t_start: float
    t_end: float

    kind = "follow"

    def eval(self, t):
        p, v, u = self.predecessor.eval_extended(t)
        return p - self.gap, v, u


Arc = Union[CubicArc, CruiseArc, SaturatedArc, FollowArc]


@dataclass(frozen=True)
class CzTrajectory:
    """Piecewise control-zone trajectory over [t0, tm].

    Arcs tile the interval without gaps; position and speed are continuous
    across junctions by construction of the solver's equation systems.
    """

    vehicle_id: int
    arcs: Tuple[Arc, ...]
    t0: float
    tm: float
    vm: float        # speed at MZ entry
    um: float        # control at MZ entry

    def _arc_at(self, t: float) -> Arc:
        if not (self.t0 - 1e-9 <= t <= self.tm + 1e-9):
            raise DomainError(
                f"t={t} outside CZ trajectory domain [{self.t0}, {self.tm}]"
            )
        ends = [arc.t_end for arc in self.arcs]
        idx = min(bisect_right(ends, t), len(self.arcs) - 1)
        return self.arcs[idx]

    def eval(self, t: float):
        return self._arc_at(t).eval(t)

    def eval_extended(self, t: float):
        """Evaluate, extending past tm at constant speed (the constant-speed
        window each vehicle keeps for a distance delta beyond the MZ exit)."""
        if t <= self.tm:
            return self.eval(max(t, self.t0))
        p_m, _, _ = self.eval(self.tm)
        return p_m + self.vm * (t - self.tm), self.vm, 0.0

    def sample(self, ts: np.ndarray):
        """Vectorized evaluation at times inside the domain."""
        ts = np.asarray(ts, dtype=float)
        if ts.size and (ts.min() < self.t0 - 1e-9 or ts.max() > self.tm + 1e-9):
            raise DomainError("sample times outside CZ trajectory domain")
        return self._sample_noextend(ts)

    def _sample_noextend(self, ts):
        p = np.empty_like(ts)
        v = np.empty_like(ts)
        u = np.empty_like(ts)
        ends = np.array([arc.t_end for arc in self.arcs])
        idx = np.minimum(np.searchsorted(ends, ts, side="right"), len(self.arcs) - 1)
        for j, arc in enumerate(self.arcs):
            mask = idx == j
            if not mask.any():
                continue
            t = ts[mask]
            if isinstance(arc, FollowArc):
                pp, vv, uu = arc.predecessor.sample_extended(t)
                p[mask], v[mask], u[mask] = pp - arc.gap, vv, uu
            else:
                p[mask], v[mask], u[mask] = arc.eval(t)
        return p, v, u

    def sample_extended(self, ts: np.ndarray):
        """Vectorized eval with constant-speed extension beyond tm."""
        ts = np.asarray(ts, dtype=float)
        inside = np.clip(ts, self.t0, self.tm)
        p, v, u = self._sample_noextend(inside)
        beyond = ts > self.tm
        if beyond.any():
            p_m, _, _ = self.eval(self.tm)
            p[beyond] = p_m + self.vm * (ts[beyond] - self.tm)
            v[beyond] = self.vm
            u[beyond] = 0.0
        return p, v, u


def eval_cz(traj: CzTrajectory, t: float):
    """Evaluate (position, speed, control) of a CZ trajectory at time t."""
    return traj.eval(t)


def cubic_arc_from_states(
    t0: float, p0: float, v0: float, t1: float, p1: float, v1: float
) -> CubicArc:
    """Fit the cubic-position arc matching position and speed at both ends."""
    mat = np.array(
        [
            [t0**3 / 6.0, t0**2 / 2.0, t0, 1.0],
            [t0**2 / 2.0, t0, 1.0, 0.0],
            [t1**3 / 6.0, t1**2 / 2.0, t1, 1.0],
            [t1**2 / 2.0, t1, 1.0, 0.0],
        ]
    )
    a, b, c, d = np.linalg.solve(mat, np.array([p0, v0, p1, v1]))
    return CubicArc(a, b, c, d, t0, t1)


def control_energy(traj: CzTrajectory, t_a: float = None, t_b: float = None) -> float:
    """Exact integral of u^2 over [t_a, t_b] (defaults to the whole domain)."""
    t_a = traj.t0 if t_a is None else t_a
    t_b = traj.tm if t_b is None else t_b
    total = 0.0
    for arc in traj.arcs:
        lo = max(arc.t_start, t_a)
        hi = min(arc.t_end, t_b)
        if hi <= lo:
            continue
        if isinstance(arc, CubicArc):
            a, b = arc.a, arc.b
            f = lambda t: a**2 * t**3 / 3.0 + a * b * t**2 + b**2 * t
            total += f(hi) - f(lo)
        elif isinstance(arc, SaturatedArc):
            total += arc.accel**2 * (hi - lo)
        elif isinstance(arc, CruiseArc):
            pass
        elif isinstance(arc, FollowArc):
            pred = arc.predecessor
            total += control_energy(pred, lo, min(hi, pred.tm))
        else:  # pragma: no cover
            raise TypeError(f"unknown arc type {type(arc)!r}")
    return total


# ---------------------------------------------------------------------------
# Merging-zone trajectory


@dataclass(frozen=True)
class MzTrajectory:
    """Closed-form merging-zone trajectory over [tm, tf].

    Coefficients are stored in the shifted frame s = t - tm for numerical
    conditioning of the exponential terms.  With k = sqrt(rho1/rho2):

        p(s) = (a s^3/6 + b s^2/2 + (c + a rho2/rho1) s + d)/rho1
               + e exp(k s) + f exp(-k s)

    and v, u, J are its successive exact derivatives.
    """

    vehicle_id: int
    a: float
    b: float
    c: float
    d: float
    e: float
    f: float
    rho1: float
    rho2: float
    tm: float
    tf: float
    p_entry: float       # position at MZ entry (the CZ length)
    path_length: float   # MZ path length for this movement

    @property
    def decay_rate(self) -> float:
        """k = sqrt(rho1/rho2), the exponential rate (A1 = +k, A2 = -k)."""
        return math.sqrt(self.rho1 / self.rho2)

    def eval(self, t: float):
        if not (self.tm - 1e-9 <= t <= self.tf + 1e-9):
            raise DomainError(
                f"t={t} outside MZ trajectory domain [{self.tm}, {self.tf}]"
            )
        return self._forms(t - self.tm)

    def _forms(self, s):
        k = self.decay_rate
        a, b, c, d, e, f = self.a, self.b, self.c, self.d, self.e, self.f
        r1 = self.rho1
        ek = np.exp(k * s)
        emk = np.exp(-k * s)
        shift = a * self.rho2 / r1
        p = (a * s**3 / 6.0 + b * s**2 / 2.0 + (c + shift) * s + d) / r1
        p = p + e * ek + f * emk
        v = (a * s**2 / 2.0 + b * s + c + shift) / r1 + e * k * ek - f * k * emk
        u = (a * s + b) / r1 + e * k**2 * ek + f * k**2 * emk
        jerk = a / r1 + e * k**3 * ek - f * k**3 * emk
        return p, v, u, jerk

    def sample(self, ts: np.ndarray):
        ts = np.asarray(ts, dtype=float)
        if ts.size and (ts.min() < self.tm - 1e-9 or ts.max() > self.tf + 1e-9):
            raise DomainError("sample times outside MZ trajectory domain")
        return self._forms(ts - self.tm)


def eval_mz(traj: MzTrajectory, t: float):
    """Evaluate (position, speed, control, jerk) of an MZ trajectory at t."""
    return traj.eval(t)
