"""Command-line surface: single-instance solves, full simulations, Pareto
sweeps, and brute-force oracle checks.

Exports are plain delimited text: one sample table with columns
``vehicle_id, t, p, v, u, jerk, zone, arc_kind`` (10 ms default) and a
separate structured-text coefficient report keyed by vehicle id and arc
index, so exact trajectories survive the export.

Exit codes: 0 success, 2 configuration/usage error, 3 solver failure,
4 monitor violation.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
from typing import Iterable, List, Optional

import numpy as np

from .config import RunConfig, load_config
from .coordinator import turn_time
from .cz_solver import CzProblem, SolveReport, solve_cz
from .errors import ConfigError, CrossflowError
from .model import (
    CostWeights,
    CruiseArc,
    CubicArc,
    CzTrajectory,
    FollowArc,
    IntersectionConfig,
    MzTrajectory,
    SaturatedArc,
    Turn,
    path_length,
    Movement,
    Origin,
)
from .mz_solver import MzProblem, mz_objective, mz_residuals, solve_mz
from .oracle import GridSpec, brute_force_cz, brute_force_mz
from .sim import (
    ArrivalModel,
    FuelModelCoefficients,
    pareto_sweep_cz,
    pareto_sweep_mz,
    run,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_MONITOR = 4

SAMPLE_COLUMNS = ["vehicle_id", "t", "p", "v", "u", "jerk", "zone", "arc_kind"]


# ---------------------------------------------------------------------------
# Export helpers


def _arc_jerk(arc, t):
    if isinstance(arc, CubicArc):
        return arc.a
    if isinstance(arc, FollowArc):
        pred = arc.predecessor
        if t > pred.tm:
            return 0.0
        return _arc_jerk(pred._arc_at(t), t)
    return 0.0


def cz_sample_rows(traj: CzTrajectory, step: float) -> List[dict]:
    rows = []
    ts = np.arange(traj.t0, traj.tm + 0.5 * step, step)
    ts[-1] = min(ts[-1], traj.tm)
    for t in ts:
        arc = traj._arc_at(t)
        p, v, u = arc.eval(t)
        rows.append(
            {
                "vehicle_id": traj.vehicle_id,
                "t": f"{t:.6f}",
                "p": f"{p:.9f}",
                "v": f"{v:.9f}",
                "u": f"{u:.9f}",
                "jerk": f"{_arc_jerk(arc, t):.9f}",
                "zone": "cz",
                "arc_kind": arc.kind,
            }
        )
    return rows


def mz_sample_rows(traj: MzTrajectory, step: float) -> List[dict]:
    rows = []
    ts = np.arange(traj.tm, traj.tf + 0.5 * step, step)
    ts[-1] = min(ts[-1], traj.tf)
    p, v, u, jerk = traj.sample(ts)
    for i, t in enumerate(ts):
        rows.append(
            {
                "vehicle_id": traj.vehicle_id,
                "t": f"{t:.6f}",
                "p": f"{p[i]:.9f}",
                "v": f"{v[i]:.9f}",
                "u": f"{u[i]:.9f}",
                "jerk": f"{jerk[i]:.9f}",
                "zone": "mz",
                "arc_kind": "exp_poly",
            }
        )
    return rows


def write_sample_table(path: str, rows: Iterable[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SAMPLE_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def _r(x) -> str:
    # shortest round-trippable decimal; plain float repr even for numpy scalars
    return repr(float(x))


def cz_coefficient_lines(traj: CzTrajectory, case: Optional[str] = None) -> List[str]:
    lines = [
        f"vehicle {traj.vehicle_id} zone=cz"
        + (f" case={case}" if case else "")
        + f" t0={_r(traj.t0)} tm={_r(traj.tm)} vm={_r(traj.vm)} um={_r(traj.um)}"
    ]
    for i, arc in enumerate(traj.arcs):
        head = (
            f"  arc {i} kind={arc.kind} t_start={_r(arc.t_start)} t_end={_r(arc.t_end)}"
        )
        if isinstance(arc, CubicArc):
            head += f" a={_r(arc.a)} b={_r(arc.b)} c={_r(arc.c)} d={_r(arc.d)}"
        elif isinstance(arc, CruiseArc):
            head += f" speed={_r(arc.speed)} p_start={_r(arc.p_start)}"
        elif isinstance(arc, SaturatedArc):
            head += (
                f" accel={_r(arc.accel)} p_start={_r(arc.p_start)}"
                f" v_start={_r(arc.v_start)}"
            )
        elif isinstance(arc, FollowArc):
            head += f" gap={_r(arc.gap)} predecessor={arc.predecessor.vehicle_id}"
        lines.append(head)
    return lines


def mz_coefficient_lines(traj: MzTrajectory) -> List[str]:
    return [
        f"vehicle {traj.vehicle_id} zone=mz"
        f" tm={_r(traj.tm)} tf={_r(traj.tf)} p_entry={_r(traj.p_entry)}"
        f" path_length={_r(traj.path_length)}",
        f"  arc 0 kind=exp_poly a={_r(traj.a)} b={_r(traj.b)} c={_r(traj.c)}"
        f" d={_r(traj.d)} e={_r(traj.e)} f={_r(traj.f)}"
        f" rho1={_r(traj.rho1)} rho2={_r(traj.rho2)}",
    ]


def write_coefficients(path: str, lines: Iterable[str]) -> None:
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _output_dir(flag_value: Optional[str], default: str = "out") -> str:
    # env var override applies to the output directory only
    out = os.environ.get("CROSSFLOW_OUTPUT_DIR") or flag_value or default
    os.makedirs(out, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Subcommands


def cmd_solve_cz(args) -> int:
    cfg = IntersectionConfig()
    prob = CzProblem(
        t0=args.t0,
        v0=args.v0,
        length=args.L,
        gamma=args.gamma,
        v_min=args.v_min if args.v_min is not None else cfg.v_min,
        v_max=args.v_max if args.v_max is not None else cfg.v_max,
        u_min=args.u_min if args.u_min is not None else cfg.u_min,
        u_max=args.u_max if args.u_max is not None else cfg.u_max,
        tm=args.tm,
        vehicle_id=1,
    )
    rep = solve_cz(prob)
    out = _output_dir(args.output_dir)
    write_sample_table(
        os.path.join(out, "cz_samples.csv"),
        cz_sample_rows(rep.trajectory, args.sample_step),
    )
    write_coefficients(
        os.path.join(out, "cz_coefficients.txt"),
        cz_coefficient_lines(rep.trajectory, rep.case),
    )
    mode = "fixed terminal time" if args.tm is not None else "free terminal time"
    print(f"case: {rep.case} ({mode})")
    print(f"tm: {rep.tm:.6f}")
    print(f"vm: {rep.vm:.6f}")
    print(f"max residual: {rep.max_residual:.3e}")
    print(f"wrote {out}/cz_samples.csv and {out}/cz_coefficients.txt")
    return EXIT_OK


def cmd_solve_mz(args) -> int:
    cfg = IntersectionConfig()
    weights = CostWeights(w=args.w, u_scale=args.u_scale, jerk_scale=args.jerk_scale)
    turn = Turn[args.turn.upper()]
    prob = MzProblem(
        tm=args.tm,
        tf=args.tm + (args.transit_time or turn_time(Movement(Origin.N, turn), cfg)),
        vm=args.vm,
        v_f=args.v_f,
        um=args.um,
        path_length=path_length(Movement(Origin.N, turn), cfg),
        rho1=weights.rho1,
        rho2=weights.rho2,
        p_entry=cfg.cz_length,
        vehicle_id=1,
    )
    traj = solve_mz(prob)
    energy, jerk, weighted = mz_objective(traj)
    out = _output_dir(args.output_dir)
    write_sample_table(
        os.path.join(out, "mz_samples.csv"), mz_sample_rows(traj, args.sample_step)
    )
    write_coefficients(
        os.path.join(out, "mz_coefficients.txt"), mz_coefficient_lines(traj)
    )
    print(f"turn: {turn.name.lower()} path={prob.path_length:.3f} T={prob.tf - prob.tm:.3f}")
    print(f"energy integral: {energy:.6e}")
    print(f"jerk integral: {jerk:.6e}")
    print(f"weighted objective: {weighted:.6e}")
    print(f"max residual: {np.max(np.abs(mz_residuals(traj, prob))):.3e}")
    print(f"wrote {out}/mz_samples.csv and {out}/mz_coefficients.txt")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    print(f"seed: {cfg.arrivals.seed}")
    log = run(
        cfg.intersection,
        cfg.weights,
        cfg.arrivals,
        cfg.fuel,
        infeasible_policy=cfg.infeasible_policy,
        monitor_step=cfg.monitor_step,
    )
    out = _output_dir(args.output_dir, cfg.output_dir)
    rows: List[dict] = []
    lines: List[str] = []
    for v in log.scheduled:
        rows.extend(cz_sample_rows(v.cz.trajectory, cfg.sample_step))
        lines.extend(cz_coefficient_lines(v.cz.trajectory, v.cz.case))
        if v.mz is not None:
            rows.extend(mz_sample_rows(v.mz, cfg.sample_step))
            lines.extend(mz_coefficient_lines(v.mz))
    write_sample_table(os.path.join(out, "samples.csv"), rows)
    write_coefficients(os.path.join(out, "coefficients.txt"), lines)
    with open(os.path.join(out, "metrics.txt"), "w") as fh:
        for key, value in sorted(log.metrics.items()):
            fh.write(f"{key}={value!r}\n")
            print(f"{key}: {value}")
    for v in log.vehicles:
        if v.skipped:
            print(f"skipped vehicle {v.record.vehicle_id}: {v.reason}")
    for verdict in log.violations:
        print(f"VIOLATION {verdict}")
    print(f"wrote {out}/samples.csv, {out}/coefficients.txt, {out}/metrics.txt")
    return EXIT_MONITOR if log.violations else EXIT_OK


def cmd_pareto(args) -> int:
    cfg = load_config(args.config)
    print(f"seed: {cfg.arrivals.seed}")
    values = [float(x) for x in args.values.split(",")]
    out = _output_dir(args.output_dir, cfg.output_dir)
    path = os.path.join(out, f"pareto_{args.zone}.csv")
    if args.zone == "cz":
        rows = pareto_sweep_cz(
            cfg.intersection, cfg.weights, cfg.arrivals, values, cfg.fuel
        )
    else:
        inter = cfg.intersection
        mv = Movement(Origin.N, Turn.STRAIGHT)
        prob = MzProblem(
            tm=0.0,
            tf=turn_time(mv, inter),
            vm=inter.exit_speed,
            v_f=inter.exit_speed,
            um=0.1,
            path_length=path_length(mv, inter),
            rho1=cfg.weights.rho1,
            rho2=cfg.weights.rho2,
            p_entry=inter.cz_length,
        )
        rows = pareto_sweep_mz(prob, cfg.weights, values)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    for row in rows:
        print(" ".join(f"{k}={v}" for k, v in row.items()))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    grid = GridSpec(h=args.h, tm_samples=args.tm_samples)
    if args.zone == "cz":
        prob = CzProblem(
            t0=args.t0,
            v0=args.v0,
            length=args.L,
            gamma=args.gamma,
            v_min=IntersectionConfig().v_min,
            v_max=IntersectionConfig().v_max,
            u_min=IntersectionConfig().u_min,
            u_max=IntersectionConfig().u_max,
            tm=args.tm,
        )
        cost, tm, _ = brute_force_cz(prob, grid)
        rep = solve_cz(prob)
        from .cz_solver import cz_cost

        analytic = cz_cost(rep.trajectory, prob.gamma)
        print(f"oracle cost: {cost:.9f} at tm={tm:.6f}")
        print(f"analytic cost: {analytic:.9f} at tm={rep.tm:.6f}")
        print(f"gap: {cost - analytic:.3e}")
    else:
        cfg = IntersectionConfig()
        weights = CostWeights(w=args.w)
        turn = Turn[args.turn.upper()]
        mv = Movement(Origin.N, turn)
        prob = MzProblem(
            tm=args.tm or 0.0,
            tf=(args.tm or 0.0) + (args.transit_time or turn_time(mv, cfg)),
            vm=args.vm,
            v_f=args.v_f,
            um=args.um,
            path_length=path_length(mv, cfg),
            rho1=weights.rho1,
            rho2=weights.rho2,
            p_entry=cfg.cz_length,
        )
        cost, _ = brute_force_mz(prob, grid)
        _, _, analytic = mz_objective(solve_mz(prob))
        print(f"oracle cost: {cost:.9e}")
        print(f"analytic cost: {analytic:.9e}")
        print(f"gap: {cost - analytic:.3e}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossflow",
        description="Decentralized optimal intersection crossing: solvers, "
        "simulator, and verification oracles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-cz", help="solve one control-zone instance")
    p.add_argument("--t0", type=float, required=True)
    p.add_argument("--v0", type=float, required=True)
    p.add_argument("--L", type=float, required=True, help="control-zone length [m]")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--tm", type=float, default=None, help="fixed terminal time")
    p.add_argument("--v-min", type=float, default=None)
    p.add_argument("--v-max", type=float, default=None)
    p.add_argument("--u-min", type=float, default=None)
    p.add_argument("--u-max", type=float, default=None)
    p.add_argument("--sample-step", type=float, default=0.01)
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=cmd_solve_cz)

    p = sub.add_parser("solve-mz", help="solve one merging-zone instance")
    p.add_argument("--tm", type=float, default=0.0)
    p.add_argument("--vm", type=float, required=True, help="entry speed [m/s]")
    p.add_argument("--v-f", type=float, default=10.0, help="exit speed [m/s]")
    p.add_argument("--um", type=float, default=0.0, help="entry control [m/s^2]")
    p.add_argument("--turn", choices=["left", "straight", "right"], default="straight")
    p.add_argument("--transit-time", type=float, default=None)
    p.add_argument("--w", type=float, default=0.5)
    p.add_argument("--u-scale", type=float, default=0.5)
    p.add_argument("--jerk-scale", type=float, default=10.0)
    p.add_argument("--sample-step", type=float, default=0.01)
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=cmd_solve_mz)

    p = sub.add_parser("simulate", help="run a seeded simulation from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pareto", help="sweep a tradeoff weight")
    p.add_argument("--config", required=True)
    p.add_argument("--zone", choices=["cz", "mz"], default="cz")
    p.add_argument(
        "--values", required=True, help="comma-separated beta (cz) or w (mz) values"
    )
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("oracle", help="brute-force check one instance")
    p.add_argument("--zone", choices=["cz", "mz"], default="cz")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--v0", type=float, default=10.0)
    p.add_argument("--L", type=float, default=400.0)
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--tm", type=float, default=None)
    p.add_argument("--vm", type=float, default=10.0)
    p.add_argument("--v-f", type=float, default=10.0)
    p.add_argument("--um", type=float, default=0.0)
    p.add_argument("--turn", choices=["left", "straight", "right"], default="straight")
    p.add_argument("--transit-time", type=float, default=None)
    p.add_argument("--w", type=float, default=0.5)
    p.add_argument("--h", type=float, default=0.05)
    p.add_argument("--tm-samples", type=int, default=41)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CrossflowError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
