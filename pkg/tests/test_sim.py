"""Arrival generation, fuel model, run loop, monitor, and Pareto sweeps."""
import math

import numpy as np
import pytest

from crossflow.coordinator import RelativeSets, SolvedEntry
from crossflow.cz_solver import SolveReport
from crossflow.errors import ConfigError, CrossflowError
from crossflow.model import (
    CostWeights,
    CzTrajectory,
    IntersectionConfig,
    Movement,
    Origin,
    Turn,
    VehicleRecord,
    cubic_arc_from_states,
)
from crossflow.sim import (
    ArrivalModel,
    FuelModelCoefficients,
    SimLog,
    VehicleLog,
    fuel_rate,
    generate_arrivals,
    monitor,
    pareto_sweep_cz,
    pareto_sweep_mz,
    run,
)

CFG = IntersectionConfig()
WEIGHTS = CostWeights(beta=0.2)


class TestArrivals:
    def test_deterministic_and_sorted(self):
        model = ArrivalModel(rate=0.5, seed=11, horizon=80.0)
        a = generate_arrivals(model, CFG)
        b = generate_arrivals(model, CFG)
        assert a == b
        times = [t for _, t, _ in a]
        assert times == sorted(times)
        assert all(0.0 < t <= 80.0 for t in times)

    def test_speed_range_and_cap(self):
        model = ArrivalModel(rate=1.0, seed=2, horizon=200.0, max_vehicles=25)
        arrivals = generate_arrivals(model, CFG)
        assert len(arrivals) == 25
        assert all(8.0 <= v0 <= 12.0 for _, _, v0 in arrivals)

    def test_interarrival_statistics(self):
        model = ArrivalModel(rate=2.0, seed=5, horizon=2000.0)
        times = [t for _, t, _ in generate_arrivals(model, CFG)]
        gaps = np.diff([0.0] + times)
        # mean of ~4000 exponential(0.5) samples
        assert abs(np.mean(gaps) - 0.5) < 0.05

    def test_all_movements_appear(self):
        model = ArrivalModel(rate=2.0, seed=9, horizon=400.0)
        seen = {mv for mv, _, _ in generate_arrivals(model, CFG)}
        assert len(seen) == 12

    def test_per_approach_streams(self):
        model = ArrivalModel(rate=0.3, seed=4, horizon=100.0, per_approach=True)
        arrivals = generate_arrivals(model, CFG)
        origins = {mv.origin for mv, _, _ in arrivals}
        assert origins == set(Origin)
        times = [t for _, t, _ in arrivals]
        assert times == sorted(times)

    def test_speed_range_outside_box_rejected(self):
        model = ArrivalModel(speed_lo=1.0, speed_hi=12.0)
        with pytest.raises(ConfigError):
            generate_arrivals(model, CFG)

    @pytest.mark.parametrize("kwargs", [{"rate": 0.0}, {"speed_lo": 12.0, "speed_hi": 8.0}])
    def test_invalid_model(self, kwargs):
        with pytest.raises(ConfigError):
            ArrivalModel(**kwargs)


class TestFuelRate:
    COEFFS = FuelModelCoefficients(
        w0=0.1569, w1=2.45e-2, w2=-7.415e-4, w3=5.975e-5,
        r0=0.07224, r1=9.681e-2, r2=1.075e-3,
    )

    def test_cruise_polynomial(self):
        v = 10.0
        expected = 0.1569 + 2.45e-2 * v - 7.415e-4 * v**2 + 5.975e-5 * v**3
        assert math.isclose(fuel_rate(v, 0.0, self.COEFFS), expected)

    def test_braking_adds_nothing(self):
        v = 10.0
        assert fuel_rate(v, -0.4, self.COEFFS) == fuel_rate(v, 0.0, self.COEFFS)

    def test_acceleration_term(self):
        v, u = 10.0, 0.3
        extra = u * (0.07224 + 9.681e-2 * v + 1.075e-3 * v**2)
        assert math.isclose(
            fuel_rate(v, u, self.COEFFS) - fuel_rate(v, 0.0, self.COEFFS), extra
        )

    def test_zero_coefficients_zero_fuel(self):
        assert fuel_rate(12.0, 0.5, FuelModelCoefficients()) == 0.0


class TestRun:
    def test_small_clean_run(self):
        log = run(CFG, WEIGHTS, ArrivalModel(rate=0.3, seed=1, horizon=60.0))
        assert log.violations == []
        m = log.metrics
        assert m["scheduled"] + m["skipped"] == m["vehicles"]
        assert m["scheduled"] >= 1
        assert m["total_energy"] >= 0.0
        assert m["mean_travel_time"] > CFG.cz_length / CFG.v_max
        for v in log.scheduled:
            assert v.cz is not None and v.mz is not None
            assert v.record.vehicle_id in log.solved

    def test_skip_policy_records_reason(self):
        log = run(CFG, WEIGHTS, ArrivalModel(rate=1.5, seed=8, horizon=40.0))
        skipped = [v for v in log.vehicles if v.skipped]
        for v in skipped:
            assert v.reason
            assert v.cz is None
            assert v.record.vehicle_id not in log.solved
        assert log.violations == []

    def test_abort_policy_raises(self):
        model = ArrivalModel(rate=1.5, seed=8, horizon=40.0)
        clean = run(CFG, WEIGHTS, model)
        if not any(v.skipped for v in clean.vehicles):
            pytest.skip("no infeasible vehicle in this stream")
        with pytest.raises(CrossflowError):
            run(CFG, WEIGHTS, model, infeasible_policy="abort")

    def test_invalid_policy(self):
        with pytest.raises(ConfigError):
            run(CFG, WEIGHTS, ArrivalModel(), infeasible_policy="retry")

    def test_fuel_metric_responds_to_coefficients(self):
        model = ArrivalModel(rate=0.3, seed=1, horizon=60.0)
        none = run(CFG, WEIGHTS, model)
        some = run(CFG, WEIGHTS, model, fuel=TestFuelRate.COEFFS)
        assert none.metrics["total_fuel"] == 0.0
        assert some.metrics["total_fuel"] > 0.0


def _hand_log(arcs_by_vehicle):
    """Two same-lane straight vehicles with hand-chosen CZ trajectories."""
    log = SimLog(CFG, WEIGHTS)
    mv = Movement(Origin.N, Turn.STRAIGHT)
    sets = [
        RelativeSets(frozenset(), frozenset(), frozenset(), frozenset()),
        RelativeSets(frozenset(), frozenset({1}), frozenset(), frozenset()),
    ]
    for i, arcs in enumerate(arcs_by_vehicle, start=1):
        traj = CzTrajectory(i, arcs, arcs[0].t_start, arcs[-1].t_end, 10.0, 0.0)
        rec = VehicleRecord(i, mv, traj.t0, 10.0, 3.0)
        entry = VehicleLog(rec, sets[i - 1], traj.t0, traj.tm + 100.0)
        entry.cz = SolveReport(traj, "unconstrained_fixed", np.zeros(1))
        log.vehicles.append(entry)
        log.solved[i] = SolvedEntry(
            tm=traj.tm, tf=traj.tm + 3.0, vm=10.0, exit_speed=10.0, gap_time=1.0
        )
    return log


class TestMonitor:
    def test_flags_rear_end_gap(self):
        # follower runs 5 m behind the leader: half the required spacing
        lead = cubic_arc_from_states(0.0, 0.0, 10.0, 40.0, 400.0, 10.0)
        tail = cubic_arc_from_states(0.5, 0.0, 10.0, 40.5, 400.0, 10.0)
        log = _hand_log([(lead,), (tail,)])
        violations, _ = monitor(log, step=0.01)
        names = {v.name for v in violations}
        assert "rear_end_gap" in names
        verdict = next(v for v in violations if v.name == "rear_end_gap")
        assert verdict.vehicles == (1, 2)
        assert verdict.margin < -4.9

    def test_flags_box_violation(self):
        # leader cruises legally; follower accelerates through the speed cap
        lead = cubic_arc_from_states(0.0, 0.0, 10.0, 40.0, 400.0, 10.0)
        hot = cubic_arc_from_states(20.0, 0.0, 10.0, 50.0, 400.0, 17.0)
        log = _hand_log([(lead,), (hot,)])
        violations, _ = monitor(log, step=0.01)
        assert any(v.name == "cz_speed_above_max" for v in violations)

    def test_flags_mz_start_order(self):
        lead = cubic_arc_from_states(0.0, 0.0, 10.0, 40.0, 400.0, 10.0)
        tail = cubic_arc_from_states(0.5, -20.0, 10.0, 40.5, 380.0, 10.0)
        log = _hand_log([(lead,), (tail,)])
        log.solved[2] = SolvedEntry(tm=40.2, tf=43.2, vm=10.0, exit_speed=10.0, gap_time=1.0)
        violations, _ = monitor(log, step=0.01)
        assert any(v.name == "mz_start_order" for v in violations)

    def test_clean_hand_log_passes(self):
        lead = cubic_arc_from_states(0.0, 0.0, 10.0, 40.0, 400.0, 10.0)
        tail = cubic_arc_from_states(2.0, 0.0, 10.0, 42.0, 400.0, 10.0)
        log = _hand_log([(lead,), (tail,)])
        log.solved[2] = SolvedEntry(tm=42.0, tf=45.0, vm=10.0, exit_speed=10.0, gap_time=1.0)
        violations, _ = monitor(log, step=0.01)
        assert violations == []

    def test_verdict_formatting(self):
        from crossflow.sim import Verdict

        v = Verdict("rear_end_gap", (1, 2), 12.345, -0.5)
        assert str(v) == "rear_end_gap[1,2] t=12.345 margin=-5.000e-01"


class TestPareto:
    def test_cz_sweep_rows(self):
        model = ArrivalModel(rate=0.25, seed=3, horizon=120.0, max_vehicles=10)
        rows = pareto_sweep_cz(CFG, WEIGHTS, model, [0.1, 0.5])
        assert [r["beta"] for r in rows] == [0.1, 0.5]
        for r in rows:
            assert r["violations"] == 0
            assert r["scheduled"] >= 1
        assert rows[1]["mean_travel_time"] <= rows[0]["mean_travel_time"]
        assert rows[1]["total_energy"] >= rows[0]["total_energy"]

    def test_mz_sweep_rows(self):
        from crossflow.mz_solver import MzProblem

        prob = MzProblem(
            tm=30.0, tf=33.5, vm=12.0, v_f=8.0, um=0.2,
            path_length=30.0, rho1=1.0, rho2=0.01, p_entry=400.0,
        )
        rows = pareto_sweep_mz(prob, WEIGHTS, [0.2, 0.5, 0.8])
        energies = [r["energy"] for r in rows]
        jerks = [r["jerk"] for r in rows]
        assert energies == sorted(energies, reverse=True)
        assert jerks == sorted(jerks)
