"""Event-driven intersection simulation.

Arrivals are generated from a seeded Poisson process, vehicles are solved
strictly in queue order (each solve reads only earlier vehicles), and an
independent safety monitor re-checks every scheduling obligation on the
realized trajectories using nothing but trajectory evaluation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .coordinator import Coordinator, RelativeSets, SolvedEntry
from .cz_solver import (
    CzProblem,
    SolveReport,
    control_energy,
    cz_cost,
    solve_cz,
)
from .errors import ConfigError, CrossflowError, InfeasibleError
from .model import (
    ALL_MOVEMENTS,
    CostWeights,
    IntersectionConfig,
    Movement,
    MzTrajectory,
    Origin,
    Turn,
    VehicleRecord,
    path_length,
)
from .mz_solver import MzProblem, solve_mz


@dataclass(frozen=True)
class ArrivalModel:
    """Seeded stochastic arrival stream."""

    rate: float = 1.0                 # vehicles/s for the pooled process
    speed_lo: float = 8.0             # initial-speed uniform range [m/s]
    speed_hi: float = 12.0
    seed: int = 0
    horizon: float = 60.0             # stop generating after this time [s]
    max_vehicles: Optional[int] = None
    per_approach: bool = False        # four independent streams at `rate` each
    movement_weights: Optional[Tuple[float, ...]] = None  # over ALL_MOVEMENTS

    def __post_init__(self):
        if self.rate <= 0:
            raise ConfigError("arrival rate must be positive")
        if not (0 < self.speed_lo <= self.speed_hi):
            raise ConfigError("require 0 < speed_lo <= speed_hi")


@dataclass(frozen=True)
class FuelModelCoefficients:
    """Polynomial fuel-rate metamodel; zero coefficients mean no fuel model."""

    w0: float = 0.0
    w1: float = 0.0
    w2: float = 0.0
    w3: float = 0.0
    r0: float = 0.0
    r1: float = 0.0
    r2: float = 0.0


def fuel_rate(v, u, coeffs: FuelModelCoefficients):
    """Cruise polynomial plus acceleration term; the acceleration term is
    clamped at zero while braking (no fuel is recovered)."""
    v = np.asarray(v, float)
    u = np.asarray(u, float)
    cruise = coeffs.w0 + coeffs.w1 * v + coeffs.w2 * v**2 + coeffs.w3 * v**3
    accel = np.maximum(u, 0.0) * (coeffs.r0 + coeffs.r1 * v + coeffs.r2 * v**2)
    return cruise + accel


def generate_arrivals(
    model: ArrivalModel, cfg: IntersectionConfig
) -> List[Tuple[Movement, float, float]]:
    """Reproducible arrival stream of (movement, t0, v0) tuples in t0 order."""
    if not (cfg.v_min <= model.speed_lo and model.speed_hi <= cfg.v_max):
        raise ConfigError("initial-speed range must lie inside [v_min, v_max]")
    rng = np.random.default_rng(model.seed)
    weights = model.movement_weights
    if weights is not None:
        weights = np.asarray(weights, float)
        weights = weights / weights.sum()
    out = []
    if model.per_approach:
        for origin in Origin:
            t = 0.0
            while True:
                t += rng.exponential(1.0 / model.rate)
                if t > model.horizon:
                    break
                out.append((origin, t))
        out.sort(key=lambda pair: pair[1])
        arrivals = []
        for origin, t in out:
            turn = Turn(rng.choice(3))
            v0 = rng.uniform(model.speed_lo, model.speed_hi)
            arrivals.append((Movement(origin, turn), t, v0))
    else:
        arrivals = []
        t = 0.0
        movements = list(ALL_MOVEMENTS)
        limit = model.max_vehicles if model.max_vehicles is not None else math.inf
        while t < model.horizon and len(arrivals) < limit:
            t += rng.exponential(1.0 / model.rate)
            if t > model.horizon:
                break
            mv = movements[rng.choice(len(movements), p=weights)]
            v0 = rng.uniform(model.speed_lo, model.speed_hi)
            arrivals.append((mv, t, v0))
    if model.max_vehicles is not None:
        arrivals = arrivals[: model.max_vehicles]
    return arrivals


# ---------------------------------------------------------------------------
# Logs


@dataclass
class VehicleLog:
    record: VehicleRecord
    sets: RelativeSets
    t_lower: float
    t_upper: float
    cz: Optional[SolveReport] = None
    mz: Optional[MzTrajectory] = None
    skipped: bool = False
    reason: Optional[str] = None


@dataclass(frozen=True)
class Verdict:
    """One failed safety obligation on the realized trajectories."""

    name: str
    vehicles: Tuple[int, ...]
    time: float
    margin: float

    def __str__(self):
        ids = ",".join(str(i) for i in self.vehicles)
        return f"{self.name}[{ids}] t={self.time:.3f} margin={self.margin:.3e}"


@dataclass
class SimLog:
    intersection: IntersectionConfig
    weights: CostWeights
    vehicles: List[VehicleLog] = field(default_factory=list)
    solved: Dict[int, SolvedEntry] = field(default_factory=dict)
    violations: List[Verdict] = field(default_factory=list)
    warnings: List[Verdict] = field(default_factory=list)
    metrics: Dict[str, float] = field(default_factory=dict)

    @property
    def scheduled(self) -> List[VehicleLog]:
        return [v for v in self.vehicles if not v.skipped]


# ---------------------------------------------------------------------------
# Run loop


def run(
    cfg: IntersectionConfig,
    weights: CostWeights,
    arrivals_model: ArrivalModel,
    fuel: FuelModelCoefficients = FuelModelCoefficients(),
    infeasible_policy: str = "skip",
    monitor_step: float = 0.01,
    mz_entry_speeds: Optional[Tuple[float, float, float]] = None,
    run_monitor: bool = True,
) -> SimLog:
    """Process a seeded arrival stream end to end and validate the log.

    Infeasible vehicles are handled per `infeasible_policy`: "skip" flags and
    withdraws them (later vehicles ignore them); "abort" re-raises.
    """
    if infeasible_policy not in ("skip", "abort"):
        raise ConfigError("infeasible_policy must be 'skip' or 'abort'")
    coord = Coordinator(cfg)
    log = SimLog(cfg, weights)
    for movement, t0, v0 in generate_arrivals(arrivals_model, cfg):
        rec = coord.register_arrival(movement, t0, v0)
        sets = coord.classify_relative_sets(rec.vehicle_id)
        ok, t_lo, t_hi = coord.check_feasible_window(rec.vehicle_id, sets)
        entry_log = VehicleLog(rec, sets, t_lo, t_hi)
        log.vehicles.append(entry_log)
        pred_traj = None
        pred_id = coord.predecessor_same_lane(rec.vehicle_id)
        if pred_id is not None:
            pred_traj = next(
                v.cz.trajectory for v in log.vehicles
                if v.record.vehicle_id == pred_id
            )
        try:
            if not ok:
                raise InfeasibleError(
                    "empty terminal window", t_lower=t_lo, t_upper=t_hi
                )
            prob = CzProblem.from_record(
                rec, cfg, weights, pred=pred_traj, t_lower=t_lo, t_upper=t_hi
            )
            rep = solve_cz(prob)
        except CrossflowError as exc:
            if infeasible_policy == "abort":
                raise
            coord.withdraw(rec.vehicle_id)
            entry_log.skipped = True
            entry_log.reason = f"{type(exc).__name__}: {exc}"
            continue
        entry_log.cz = rep
        solved = coord.set_solution(rec.vehicle_id, rep.tm, rep.vm)
        vm, um = rep.vm, rep.um
        if mz_entry_speeds is not None:
            vm, um = mz_entry_speeds[rec.movement.turn.value], 0.0
        mz_prob = MzProblem(
            tm=rep.tm,
            tf=solved.tf,
            vm=vm,
            v_f=cfg.exit_speed,
            um=um,
            path_length=path_length(rec.movement, cfg),
            rho1=weights.rho1,
            rho2=weights.rho2,
            p_entry=cfg.cz_length,
            vehicle_id=rec.vehicle_id,
        )
        entry_log.mz = solve_mz(mz_prob)
    log.solved = dict(coord.solved)
    _compute_metrics(log, fuel, monitor_step)
    if run_monitor:
        violations, warnings_ = monitor(log, monitor_step)
        log.violations = violations
        log.warnings = warnings_
    return log


def _compute_metrics(log: SimLog, fuel: FuelModelCoefficients, step: float):
    gamma = log.weights.gamma
    times, energies, costs, fuel_total = [], [], [], 0.0
    for v in log.scheduled:
        traj = v.cz.trajectory
        times.append(traj.tm - traj.t0)
        energies.append(control_energy(traj))
        costs.append(cz_cost(traj, gamma))
        ts = np.arange(traj.t0, traj.tm, step)
        if ts.size:
            _, vv, uu = traj.sample(ts)
            fuel_total += float(np.sum(fuel_rate(vv, uu, fuel))) * step
        if v.mz is not None:
            ts = np.arange(v.mz.tm, v.mz.tf, step)
            if ts.size:
                _, vv, uu, _ = v.mz.sample(ts)
                fuel_total += float(np.sum(fuel_rate(vv, uu, fuel))) * step
    n = len(times)
    log.metrics = {
        "vehicles": float(len(log.vehicles)),
        "scheduled": float(n),
        "skipped": float(len(log.vehicles) - n),
        "mean_travel_time": float(np.mean(times)) if n else math.nan,
        "total_energy": float(np.sum(energies)) if n else 0.0,
        "total_fuel": fuel_total,
        "oc_cost": float(np.sum(costs)) if n else 0.0,
    }


# ---------------------------------------------------------------------------
# Safety monitor


def monitor(log: SimLog, step: float = 0.01, tol: float = 1e-6):
    """Re-verify every scheduling obligation on a dense grid.

    Returns (violations, warnings).  Violations cover the control-zone
    rear-end gap, speed and control boxes, FIFO exit order, merging-zone
    start ordering and lateral exclusivity, and end-of-merging-zone spacing.
    Merging-zone box exceedances are reported as warnings: the in-zone
    problem deliberately has no state constraints.
    """
    cfg = log.intersection
    violations: List[Verdict] = []
    warnings_: List[Verdict] = []
    sched = log.scheduled
    by_id = {v.record.vehicle_id: v for v in sched}

    # speed/control boxes
    for v in sched:
        traj = v.cz.trajectory
        ts = np.arange(traj.t0, traj.tm, step)
        if not ts.size:
            continue
        _, vv, uu = traj.sample(ts)
        _box_check(violations, "cz", v.record.vehicle_id, ts, vv, uu, cfg, tol)
        if v.mz is not None:
            ts = np.arange(v.mz.tm, v.mz.tf, step)
            if ts.size:
                _, vv, uu, _ = v.mz.sample(ts)
                _box_check(
                    warnings_, "mz", v.record.vehicle_id, ts, vv, uu, cfg, tol
                )

    # control-zone rear-end gaps for all pairs sharing an entry lane
    # (same-destination pairs sit in the exit set but still share the lane)
    for v in sched:
        i = v.record.vehicle_id
        traj = v.cz.trajectory
        for j in sorted(v.sets.entry_set | v.sets.exit_set):
            lead = by_id.get(j)
            if lead is None:
                continue
            if lead.record.movement.origin != v.record.movement.origin:
                continue
            lo = max(traj.t0, lead.cz.trajectory.t0)
            hi = traj.tm
            ts = np.arange(lo, hi, step)
            if not ts.size:
                continue
            p_i, _, _ = traj.sample(ts)
            p_j, _, _ = lead.cz.trajectory.sample_extended(ts)
            gap = p_j - p_i
            worst = int(np.argmin(gap))
            if gap[worst] < cfg.safe_distance - tol:
                violations.append(
                    Verdict(
                        "rear_end_gap",
                        (j, i),
                        float(ts[worst]),
                        float(gap[worst] - cfg.safe_distance),
                    )
                )

    # ordering obligations from the solved schedule
    prev = None
    for v in sched:
        i = v.record.vehicle_id
        si = log.solved[i]
        if prev is not None and si.tf < log.solved[prev].tf - tol:
            violations.append(
                Verdict("fifo_exit_order", (prev, i), si.tf, si.tf - log.solved[prev].tf)
            )
        prev = i
        for j in sorted(v.sets.entry_set):
            sj = log.solved.get(j)
            if sj is None:
                continue
            lag = si.tm - (sj.tm + sj.gap_time)
            if lag < -tol:
                violations.append(Verdict("mz_start_order", (j, i), si.tm, lag))
        for j in sorted(v.sets.lateral_set):
            sj = log.solved.get(j)
            if sj is None:
                continue
            # FIFO makes disjointness equivalent to entering after j exits
            lag = si.tm - sj.tf
            if lag < -tol:
                violations.append(Verdict("lateral_overlap", (j, i), si.tm, lag))
        for j in sorted(v.sets.exit_set):
            sj = log.solved.get(j)
            if sj is None:
                continue
            lag = si.tf - (sj.tf + cfg.safe_distance / sj.exit_speed)
            if lag < -tol:
                violations.append(Verdict("mz_exit_spacing", (j, i), si.tf, lag))
    return violations, warnings_


def _box_check(sink, zone, vid, ts, vv, uu, cfg, tol):
    checks = [
        (f"{zone}_speed_above_max", vv - cfg.v_max, -1),
        (f"{zone}_speed_below_min", cfg.v_min - vv, -1),
        (f"{zone}_control_above_max", uu - cfg.u_max, -1),
        (f"{zone}_control_below_min", cfg.u_min - uu, -1),
    ]
    for name, excess, _ in checks:
        worst = int(np.argmax(excess))
        if excess[worst] > tol:
            sink.append(Verdict(name, (vid,), float(ts[worst]), float(excess[worst])))


# ---------------------------------------------------------------------------
# Pareto sweeps


def pareto_sweep_cz(
    cfg: IntersectionConfig,
    weights: CostWeights,
    arrivals_model: ArrivalModel,
    betas: Sequence[float],
    fuel: FuelModelCoefficients = FuelModelCoefficients(),
    **run_kwargs,
):
    """One full seeded run per beta; identical arrivals across the sweep."""
    rows = []
    for beta in betas:
        w = replace(weights, beta=beta)
        log = run(cfg, w, arrivals_model, fuel, **run_kwargs)
        rows.append(
            {
                "beta": beta,
                "mean_travel_time": log.metrics["mean_travel_time"],
                "total_energy": log.metrics["total_energy"],
                "total_fuel": log.metrics["total_fuel"],
                "oc_cost": log.metrics["oc_cost"],
                "scheduled": log.metrics["scheduled"],
                "violations": len(log.violations),
            }
        )
    return rows


def pareto_sweep_mz(prob: MzProblem, weights: CostWeights, ws: Sequence[float]):
    """Sweep the energy/jerk weight on one fixed merging-zone instance."""
    from .mz_solver import mz_objective

    rows = []
    for w in ws:
        cw = replace(weights, w=w)
        p = replace(prob, rho1=cw.rho1, rho2=cw.rho2)
        energy, jerk, weighted = mz_objective(solve_mz(p))
        rows.append({"w": w, "energy": energy, "jerk": jerk, "weighted": weighted})
    return rows
