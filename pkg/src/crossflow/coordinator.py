"""FIFO crossing queue, movement-conflict classification, and the terminal
time bounds that decouple each vehicle's optimal control problem from the
rest of the queue.

Conflict relations are derived from the merging-zone geometry of a symmetric
four-way, single-lane-per-direction intersection (right-hand traffic, lane
centerlines offset a quarter of the zone side from the road axis).  The
resulting 12x12 table is data: callers may override it to model a different
geometry without touching the classification logic.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from shapely.geometry import LineString

from .errors import ConfigError, InfeasibleError
from .model import (
    ALL_MOVEMENTS,
    IntersectionConfig,
    Movement,
    Turn,
    VehicleRecord,
)


class ConflictRelation(enum.Enum):
    SAME_EXIT_LANE = "same_exit_lane"      # rear-end risk at the end of the MZ
    SAME_ENTRY_LANE = "same_entry_lane"    # rear-end risk at the start of the MZ
    LATERAL_CROSS = "lateral_cross"        # paths intersect inside the MZ
    NO_CONFLICT = "no_conflict"


def _rot_left(h):
    return (-h[1], h[0])


def _rot_right(h):
    return (h[1], -h[0])


def mz_path(movement: Movement, cfg: IntersectionConfig, n: int = 128) -> np.ndarray:
    """Sampled centerline of a movement's path through the merging zone.

    Coordinates are centered on the MZ square; the incoming lane runs a
    quarter side to the right of the road axis.
    """
    s = cfg.mz_side
    h = movement.heading_in
    h2 = movement.heading_out
    entry = np.array([-h[0] * s / 2, -h[1] * s / 2]) + np.array(_rot_right(h)) * s / 4
    exit_ = np.array([h2[0] * s / 2, h2[1] * s / 2]) + np.array(_rot_right(h2)) * s / 4
    if movement.turn is Turn.STRAIGHT:
        frac = np.linspace(0.0, 1.0, n)[:, None]
        return entry[None, :] * (1 - frac) + exit_[None, :] * frac
    if movement.turn is Turn.RIGHT:
        center = entry + np.array(_rot_right(h)) * (s / 4)
        sweep = -math.pi / 2
    else:
        center = entry + np.array(_rot_left(h)) * (3 * s / 4)
        sweep = math.pi / 2
    a0 = math.atan2(entry[1] - center[1], entry[0] - center[0])
    radius = np.linalg.norm(entry - center)
    angles = a0 + np.linspace(0.0, sweep, n)
    return center[None, :] + radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def conflict_relation(
    m1: Movement, m2: Movement, cfg: Optional[IntersectionConfig] = None
) -> ConflictRelation:
    """Conflict class of an ordered movement pair (symmetric in its inputs).

    Same destination lane wins over same entry lane, which wins over a
    geometric path crossing; everything else cannot collide.
    """
    cfg = cfg or IntersectionConfig()
    if m1.destination == m2.destination:
        return ConflictRelation.SAME_EXIT_LANE
    if m1.origin == m2.origin:
        return ConflictRelation.SAME_ENTRY_LANE
    a = LineString(mz_path(m1, cfg))
    b = LineString(mz_path(m2, cfg))
    if a.intersects(b):
        return ConflictRelation.LATERAL_CROSS
    return ConflictRelation.NO_CONFLICT


def build_conflict_table(
    cfg: Optional[IntersectionConfig] = None,
) -> Dict[Tuple[Movement, Movement], ConflictRelation]:
    cfg = cfg or IntersectionConfig()
    table = {}
    for m1 in ALL_MOVEMENTS:
        for m2 in ALL_MOVEMENTS:
            table[(m1, m2)] = conflict_relation(m1, m2, cfg)
    return table


# ---------------------------------------------------------------------------
# Turn timing


def turn_time(movement: Movement, cfg: IntersectionConfig) -> float:
    """MZ transit time Delta_i for a movement.

    A configured per-turn override wins; otherwise turning movements use the
    AASHTO desirable-turn-time formula R / sqrt(15 R (0.01 E + F)) and
    straight movements use the configured straight transit time.
    """
    if cfg.transit_time_override is not None:
        return float(cfg.transit_time_override[movement.turn.value])
    if movement.turn is Turn.STRAIGHT:
        return cfg.straight_transit_time
    radius = cfg.turn_radius(movement.turn)
    radicand = 15.0 * radius * (0.01 * cfg.super_elevation + cfg.side_friction)
    if radicand <= 0 or radius <= 0:
        raise ConfigError("turn-time formula needs R > 0 and 0.01*E + F > 0")
    return radius / math.sqrt(radicand)


def gap_transit_time(
    turn: Turn, v_m: float, cfg: IntersectionConfig
) -> float:
    """Time Delta_s^delta a vehicle needs to travel the safe gap just inside
    the MZ: the turn-speed formula for turning movements, distance over MZ
    entry speed for straight ones."""
    delta = cfg.safe_distance
    if turn is Turn.STRAIGHT:
        return delta / v_m
    radius = cfg.turn_radius(turn)
    radicand = 15.0 * radius * (0.01 * cfg.super_elevation + cfg.side_friction)
    if radicand <= 0:
        raise ConfigError("gap-transit formula needs 0.01*E + F > 0")
    return delta / math.sqrt(radicand)


# ---------------------------------------------------------------------------
# Relative location sets


@dataclass(frozen=True)
class RelativeSets:
    """Partition of a vehicle's predecessors by conflict type."""

    exit_set: frozenset       # rear-end risk at the MZ end (set E)
    entry_set: frozenset      # rear-end risk at the MZ start (set S)
    lateral_set: frozenset    # lateral crossing inside the MZ (set L)
    free_set: frozenset       # no possible conflict (set O)

    def _max(self, s):
        return max(s) if s else None

    @property
    def e(self):
        return self._max(self.exit_set)

    @property
    def s(self):
        return self._max(self.entry_set)

    @property
    def l(self):
        return self._max(self.lateral_set)

    @property
    def o(self):
        return self._max(self.free_set)


@dataclass(frozen=True)
class SolvedEntry:
    """Immutable snapshot of a solved vehicle's schedule."""

    tm: float           # MZ entry time
    tf: float           # MZ exit time (= tm + Delta_i)
    vm: float           # MZ entry speed
    exit_speed: float   # speed at the MZ exit
    gap_time: float     # Delta_s^delta at this vehicle's MZ entry speed


class Coordinator:
    """Maintains the FIFO queue and answers the per-vehicle scheduling
    queries (relative sets and terminal-time bounds).

    Mutation is single-writer: `register_arrival`, `set_solution` and
    `withdraw` must be serialized by the caller; solved entries are
    immutable snapshots and safe to read concurrently.
    """

    def __init__(self, cfg: IntersectionConfig, conflict_table=None):
        self.cfg = cfg
        self.table = conflict_table or build_conflict_table(cfg)
        self.records: Dict[int, VehicleRecord] = {}
        self.solved: Dict[int, SolvedEntry] = {}
        self._withdrawn = set()
        self._next_id = 1
        self._last_t0 = -math.inf

    def register_arrival(
        self,
        movement: Movement,
        t0: float,
        v0: float,
        transit_time: Optional[float] = None,
    ) -> VehicleRecord:
        """Append an arriving vehicle to the queue and return its record.

        Simultaneous arrivals keep registration order, which makes runs
        reproducible.
        """
        if t0 < self._last_t0 - 1e-12:
            raise ConfigError("arrivals must be registered in t0 order")
        if transit_time is None:
            transit_time = turn_time(movement, self.cfg)
        rec = VehicleRecord(self._next_id, movement, t0, v0, transit_time)
        self.records[rec.vehicle_id] = rec
        self._next_id += 1
        self._last_t0 = max(self._last_t0, t0)
        return rec

    def withdraw(self, vehicle_id: int) -> None:
        """Remove an infeasible vehicle from active consideration (it never
        enters the road, so later vehicles ignore it)."""
        self._withdrawn.add(vehicle_id)

    def active_predecessors(self, vehicle_id: int):
        return [
            j
            for j in range(1, vehicle_id)
            if j in self.records and j not in self._withdrawn
        ]

    def predecessor_same_lane(self, vehicle_id: int) -> Optional[int]:
        """Index of the vehicle physically ahead on the same entry lane."""
        origin = self.records[vehicle_id].movement.origin
        same = [
            j
            for j in self.active_predecessors(vehicle_id)
            if self.records[j].movement.origin == origin
        ]
        return max(same) if same else None

    def classify_relative_sets(self, vehicle_id: int) -> RelativeSets:
        mi = self.records[vehicle_id].movement
        groups = {rel: set() for rel in ConflictRelation}
        for j in self.active_predecessors(vehicle_id):
            rel = self.table[(self.records[j].movement, mi)]
            groups[rel].add(j)
        return RelativeSets(
            exit_set=frozenset(groups[ConflictRelation.SAME_EXIT_LANE]),
            entry_set=frozenset(groups[ConflictRelation.SAME_ENTRY_LANE]),
            lateral_set=frozenset(groups[ConflictRelation.LATERAL_CROSS]),
            free_set=frozenset(groups[ConflictRelation.NO_CONFLICT]),
        )

    def set_solution(self, vehicle_id: int, tm: float, vm: float,
                     exit_speed: Optional[float] = None) -> SolvedEntry:
        rec = self.records[vehicle_id]
        exit_speed = self.cfg.exit_speed if exit_speed is None else exit_speed
        # The stored gap time is the max of the turn-speed rule and the
        # constant-speed extension delta/vm, so the entry-spacing bound also
        # covers the rear-end constraint when the CZ exit is slower than the
        # nominal turn speed.
        entry = SolvedEntry(
            tm=tm,
            tf=tm + rec.transit_time,
            vm=vm,
            exit_speed=exit_speed,
            gap_time=max(
                gap_transit_time(rec.movement.turn, vm, self.cfg),
                self.cfg.safe_distance / vm,
            ),
        )
        self.solved[vehicle_id] = entry
        return entry

    # -- terminal-time bounds ------------------------------------------------

    def performance_lower_bound(self, vehicle_id: int) -> float:
        """Earliest possible MZ entry under the control/speed box alone:
        full acceleration, then (if reached early enough) a v_max cruise."""
        rec = self.records[vehicle_id]
        cfg = self.cfg
        L = cfg.cz_length
        d_acc = (cfg.v_max**2 - rec.v0**2) / (2.0 * cfg.u_max)
        if d_acc <= L:
            return rec.t0 + L / cfg.v_max + (cfg.v_max - rec.v0) ** 2 / (
                2.0 * cfg.u_max * cfg.v_max
            )
        return rec.t0 + (math.sqrt(2.0 * L * cfg.u_max + rec.v0**2) - rec.v0) / cfg.u_max

    def terminal_time_upper_bound(self, vehicle_id: int) -> float:
        """Latest possible MZ entry: full deceleration, then (if reached)
        a v_min cruise."""
        rec = self.records[vehicle_id]
        cfg = self.cfg
        L = cfg.cz_length
        d_dec = (rec.v0**2 - cfg.v_min**2) / (2.0 * -cfg.u_min)
        if d_dec <= L:
            return rec.t0 + L / cfg.v_min + (cfg.v_min - rec.v0) ** 2 / (
                2.0 * cfg.u_min * cfg.v_min
            )
        return rec.t0 + (math.sqrt(2.0 * L * cfg.u_min + rec.v0**2) - rec.v0) / cfg.u_min

    def terminal_time_lower_bound(
        self, vehicle_id: int, sets: Optional[RelativeSets] = None
    ) -> float:
        """Theorem-style lower bound on the MZ entry time: the max of the
        performance bound and the terms induced by the nearest conflicting
        predecessor of each kind."""
        rec = self.records[vehicle_id]
        sets = sets or self.classify_relative_sets(vehicle_id)
        delta = self.cfg.safe_distance
        terms = [self.performance_lower_bound(vehicle_id)]
        e = self._latest_solved(sets.exit_set)
        if e is not None:
            se = self.solved[e]
            terms.append(se.tf + delta / se.exit_speed - rec.transit_time)
        s = self._latest_solved(sets.entry_set)
        if s is not None:
            ss = self.solved[s]
            terms.append(ss.tm + ss.gap_time)
            terms.append(ss.tf - rec.transit_time)
        l = self._latest_solved(sets.lateral_set)
        if l is not None:
            terms.append(self.solved[l].tf)
        o = self._latest_solved(sets.free_set)
        if o is not None:
            terms.append(self.solved[o].tf - rec.transit_time)
        # The MZ-start spacing rule binds the physically-ahead vehicle on the
        # same entry lane even when that vehicle shares the destination and
        # is therefore classified by its exit-lane conflict.
        k = self.predecessor_same_lane(vehicle_id)
        if k is not None and k in self.solved:
            sk = self.solved[k]
            terms.append(sk.tm + sk.gap_time)
        return max(terms)

    def _latest_solved(self, index_set):
        solved = [j for j in index_set if j in self.solved]
        return max(solved) if solved else None

    def check_feasible_window(self, vehicle_id: int, sets=None):
        """Return (ok, t_lower, t_upper); ok iff the window is nonempty."""
        lo = self.terminal_time_lower_bound(vehicle_id, sets)
        hi = self.terminal_time_upper_bound(vehicle_id)
        return lo <= hi, lo, hi
