"""Control-zone solver: closed-form cases, junction continuity, violations."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossflow.cz_solver import (
    CzProblem,
    cz_cost,
    first_gap_contact,
    minimum_gap,
    newton_solve,
    scan_violations,
    solve_cz,
    solve_safety_no_exit,
    solve_safety_with_exit,
    solve_umax_arc,
    solve_unconstrained_fixed,
    solve_unconstrained_free,
    solve_vmax_arc,
)
from crossflow.errors import (
    CaseInapplicable,
    ConfigError,
    InfeasibleError,
    SolverError,
)
from crossflow.model import (
    CruiseArc,
    CubicArc,
    CzTrajectory,
    FollowArc,
    SaturatedArc,
    cubic_arc_from_states,
)

BOX = dict(v_min=5.0, v_max=15.0, u_min=-0.5, u_max=0.5)


def problem(**kwargs):
    base = dict(t0=0.0, v0=10.0, length=400.0, gamma=0.1, **BOX)
    base.update(kwargs)
    return CzProblem(**base)


def leader_traj(arc, vid=0):
    _, vm, um = arc.eval(arc.t_end)
    return CzTrajectory(vid, (arc,), arc.t_start, arc.t_end, vm, um)


def junction_continuity(traj, tol=1e-9):
    for prev, nxt in zip(traj.arcs, traj.arcs[1:]):
        t = prev.t_end
        p0, v0, _ = prev.eval(t)
        p1, v1, _ = nxt.eval(t)
        assert abs(p0 - p1) <= tol * max(1.0, abs(p0))
        assert abs(v0 - v1) <= tol * max(1.0, abs(v0))


class TestUnconstrained:
    def test_free_reference_instance(self):
        rep = solve_unconstrained_free(problem())
        assert abs(rep.tm - 32.03) < 0.05
        arc = rep.trajectory.arcs[0]
        assert math.isclose(arc.a, -0.0072811, abs_tol=1e-5)
        assert math.isclose(arc.b, 0.2331913, abs_tol=1e-5)
        # terminal control vanishes
        assert abs(arc.a * rep.tm + arc.b) < 1e-10

    def test_free_zero_gamma_is_cruise_time(self):
        rep = solve_unconstrained_free(problem(gamma=0.0))
        assert math.isclose(rep.tm, 40.0, abs_tol=1e-9)

    def test_fixed_boundary_conditions(self):
        rep = solve_unconstrained_fixed(problem(), 33.0)
        traj = rep.trajectory
        p0, v0, _ = traj.eval(0.0)
        pm, _, _ = traj.eval(33.0)
        assert abs(p0) < 1e-9 and abs(v0 - 10.0) < 1e-9
        assert abs(pm - 400.0) < 1e-9
        assert rep.case == "unconstrained_fixed"

    def test_fixed_at_free_optimum_matches_free(self):
        free = solve_unconstrained_free(problem())
        fixed = solve_unconstrained_fixed(problem(), free.tm)
        assert math.isclose(cz_cost(free.trajectory, 0.1),
                            cz_cost(fixed.trajectory, 0.1), rel_tol=1e-10)

    @given(
        v0=st.floats(6.0, 14.0),
        gamma=st.floats(0.005, 0.12),
        t0=st.floats(0.0, 100.0),
    )
    @settings(max_examples=100, deadline=None)
    def test_free_transversality_and_shape(self, v0, gamma, t0):
        rep = solve_unconstrained_free(problem(t0=t0, v0=v0, gamma=gamma))
        arc = rep.trajectory.arcs[0]
        # decelerating-to-zero control profile, non-negative throughout
        assert arc.a <= 1e-9
        assert arc.a * rep.tm + arc.b >= -1e-9
        assert arc.a * t0 + arc.b >= -1e-9
        assert abs(gamma - 0.5 * arc.b**2 + arc.a * arc.c) < 1e-8

    def test_cost_grows_away_from_free_optimum(self):
        free = solve_unconstrained_free(problem())
        for tm in (free.tm - 2.0, free.tm + 2.0):
            fixed = solve_unconstrained_fixed(problem(), tm)
            assert cz_cost(fixed.trajectory, 0.1) > cz_cost(free.trajectory, 0.1)


class TestConstrainedArcs:
    def test_vmax_free_structure(self):
        prob = problem(gamma=0.375, v0=11.0)
        rep = solve_cz(prob)
        assert rep.case == "vmax"
        kinds = [type(a) for a in rep.trajectory.arcs]
        assert kinds == [CubicArc, CruiseArc]
        assert math.isclose(rep.trajectory.arcs[1].speed, 15.0)
        junction_continuity(rep.trajectory)
        assert not scan_violations(rep.trajectory, prob)
        assert rep.max_residual < 1e-8

    def test_vmax_entry_at_ceiling_is_pure_cruise(self):
        prob = problem(v0=15.0, gamma=1.0)
        rep = solve_cz(prob)
        assert rep.case == "vmax"
        assert math.isclose(rep.tm, 400.0 / 15.0, rel_tol=1e-12)

    def test_composite_free_structure(self):
        prob = problem(gamma=3.0, v0=8.0)
        rep = solve_cz(prob)
        assert rep.case == "composite_umax_vmax"
        kinds = [type(a) for a in rep.trajectory.arcs]
        assert kinds == [SaturatedArc, CubicArc, CruiseArc]
        assert math.isclose(rep.trajectory.arcs[0].accel, 0.5)
        junction_continuity(rep.trajectory)
        assert not scan_violations(rep.trajectory, prob)

    def test_umax_fixed_structure(self):
        # demand a fast crossing from a slow entry: control ceiling binds
        prob = problem(v0=6.0, tm=34.0)
        rep = solve_cz(prob)
        assert rep.case == "umax"
        assert isinstance(rep.trajectory.arcs[0], SaturatedArc)
        junction_continuity(rep.trajectory)
        assert not scan_violations(rep.trajectory, prob)

    def test_cheaper_than_forcing_umax_when_inactive(self):
        prob = problem()
        free = solve_cz(prob)
        with pytest.raises((CaseInapplicable, SolverError)):
            solve_umax_arc(prob, free.tm)

    def test_vmax_fixed_matches_free_at_free_tm(self):
        prob = problem(gamma=0.375, v0=11.0)
        free = solve_vmax_arc(prob)
        fixed = solve_vmax_arc(prob, free.tm)
        assert math.isclose(free.trajectory.arcs[0].t_end,
                            fixed.trajectory.arcs[0].t_end, rel_tol=1e-6)


class TestSafetyCases:
    def _pred(self):
        rep = solve_unconstrained_free(problem())
        return rep.trajectory

    def test_no_exit_reference_instance(self):
        pred = self._pred()
        prob = problem(t0=2.0, v0=13.0, tm=32.76, pred=pred)
        rep = solve_cz(prob)
        assert rep.case == "safety_no_exit"
        arc = rep.trajectory.arcs[0]
        assert abs(arc.t_end - 14.31) < 0.05
        assert math.isclose(arc.a, 0.0263, abs_tol=5e-3)
        assert math.isclose(arc.b, -0.25, abs_tol=5e-3)
        gap, _ = minimum_gap(rep.trajectory, pred, 2.0, rep.tm)
        assert gap >= 10.0 - 1e-6

    def test_with_exit_reference_instance(self):
        pred = leader_traj(cubic_arc_from_states(0.0, 0.0, 10.0, 41.0, 400.0, 10.0))
        prob = problem(t0=1.5, v0=12.0, tm=42.5, pred=pred)
        rep = solve_safety_with_exit(prob, pred, 42.5)
        arcs = rep.trajectory.arcs
        assert [type(a) for a in arcs] == [CubicArc, FollowArc, CubicArc]
        assert abs(arcs[0].t_end - 8.75) < 0.05
        assert abs(arcs[2].t_start - 14.4) < 0.1
        assert math.isclose(arcs[2].a, 0.00038, abs_tol=5e-4)
        assert math.isclose(arcs[2].b, -0.0161, abs_tol=5e-3)
        junction_continuity(rep.trajectory)
        gap, _ = minimum_gap(rep.trajectory, pred, 1.5, 42.5)
        assert gap >= 10.0 - 1e-6

    def test_with_exit_beats_forced_no_exit(self):
        # on an instance where the exit exists, keeping the follow arc to the
        # end must not be cheaper
        pred = self._pred()
        tm = pred.tm + 10.0 / pred.vm
        prob = problem(t0=2.0, v0=13.0, tm=tm, pred=pred)
        no_exit = solve_safety_no_exit(prob, pred, tm)
        try:
            with_exit = solve_safety_with_exit(prob, pred, tm)
        except (CaseInapplicable, SolverError, InfeasibleError):
            return
        assert cz_cost(with_exit.trajectory, 0.1) <= cz_cost(no_exit.trajectory, 0.1) + 1e-9

    def test_fast_predecessor_never_binds(self):
        fast = leader_traj(cubic_arc_from_states(0.0, 200.0, 14.0, 28.0, 600.0, 14.0))
        prob = problem(pred=fast)
        rep = solve_cz(prob)
        assert rep.case == "unconstrained_free"

    def test_gap_below_delta_at_entry_infeasible(self):
        close = leader_traj(cubic_arc_from_states(0.0, 5.0, 8.0, 41.0, 405.0, 10.0))
        prob = problem(t0=0.5, v0=10.0, tm=41.0, pred=close)
        with pytest.raises(InfeasibleError):
            solve_safety_no_exit(prob, close, 41.0)

    def test_no_exit_requires_terminal_consistency(self):
        # terminal time far beyond the point where following would overshoot
        pred = self._pred()
        prob = problem(t0=2.0, v0=13.0, tm=pred.tm + 8.0, pred=pred)
        with pytest.raises(CaseInapplicable):
            solve_safety_no_exit(prob, pred, pred.tm + 8.0)


class TestGapGeometry:
    def test_minimum_gap_matches_grid(self):
        lead = leader_traj(cubic_arc_from_states(0.0, 30.0, 10.0, 32.0, 430.0, 13.0))
        follow = leader_traj(cubic_arc_from_states(0.0, 0.0, 12.0, 34.0, 400.0, 11.0), vid=1)
        gap, t_at = minimum_gap(follow, lead, 0.0, 32.0)
        ts = np.linspace(0.0, 32.0, 200001)
        pf, _, _ = follow.sample(ts)
        pl, _, _ = lead.sample_extended(ts)
        grid_gap = np.min(pl - pf)
        assert math.isclose(gap, grid_gap, abs_tol=1e-6)

    def test_first_contact_before_minimum(self):
        lead = leader_traj(cubic_arc_from_states(0.0, 12.0, 9.0, 40.0, 412.0, 10.0))
        follow = leader_traj(cubic_arc_from_states(0.0, 0.0, 12.0, 40.0, 400.0, 10.0), vid=1)
        gap, t_min = minimum_gap(follow, lead, 0.0, 40.0)
        if gap < 10.0:
            hit = first_gap_contact(follow, lead, 10.0, 0.0, 40.0)
            assert hit is not None and hit <= t_min + 1e-9

    def test_no_contact_when_gap_large(self):
        lead = leader_traj(cubic_arc_from_states(0.0, 200.0, 10.0, 40.0, 600.0, 10.0))
        follow = leader_traj(cubic_arc_from_states(0.0, 0.0, 10.0, 40.0, 400.0, 10.0), vid=1)
        assert first_gap_contact(follow, lead, 10.0, 0.0, 40.0) is None


class TestScanViolations:
    def test_clean_trajectory(self):
        rep = solve_unconstrained_free(problem())
        assert scan_violations(rep.trajectory, problem()) == set()

    def test_flags_box_breaches(self):
        arc = cubic_arc_from_states(0.0, 0.0, 5.0, 20.0, 380.0, 5.0)
        traj = leader_traj(arc, vid=1)
        viol = scan_violations(traj, problem(v0=5.0))
        assert "v_max" in viol or "u_max" in viol

    def test_flags_gap(self):
        lead = leader_traj(cubic_arc_from_states(0.0, 12.0, 9.0, 40.0, 412.0, 10.0))
        prob = problem(v0=12.0, pred=lead, tm=40.0)
        cand = solve_unconstrained_fixed(prob, 40.0)
        assert "gap" in scan_violations(cand.trajectory, prob)


class TestComposition:
    def test_empty_window_raises(self):
        prob = problem(t_lower=50.0, t_upper=40.0)
        with pytest.raises(InfeasibleError) as err:
            solve_cz(prob)
        assert err.value.t_lower == 50.0
        assert err.value.t_upper == 40.0

    def test_fixed_tm_outside_window_raises(self):
        prob = problem(tm=60.0, t_lower=20.0, t_upper=50.0)
        with pytest.raises(InfeasibleError):
            solve_cz(prob)

    def test_free_clamped_to_lower_bound(self):
        free_tm = solve_unconstrained_free(problem()).tm
        prob = problem(t_lower=free_tm + 3.0)
        rep = solve_cz(prob)
        assert math.isclose(rep.tm, free_tm + 3.0, rel_tol=1e-12)

    def test_free_inside_window_untouched(self):
        free_tm = solve_unconstrained_free(problem()).tm
        rep = solve_cz(problem(t_lower=free_tm - 5.0, t_upper=free_tm + 5.0))
        assert math.isclose(rep.tm, free_tm, rel_tol=1e-12)

    def test_provisional_clamp_releases_for_constrained_case(self):
        # the unconstrained candidate falls below the window, but the
        # speed-limited free optimum lies inside it and must be returned
        prob = problem(t0=0.44, v0=11.21, gamma=0.375, t_lower=28.07, t_upper=72.74)
        rep = solve_cz(prob)
        assert rep.case == "vmax"
        assert rep.tm > 28.07 + 0.1
        assert not scan_violations(rep.trajectory, prob)

    def test_invalid_problem_rejected(self):
        with pytest.raises(ConfigError):
            problem(v0=20.0)
        with pytest.raises(ConfigError):
            problem(gamma=-1.0)

    @given(
        v0=st.floats(6.0, 14.0),
        gamma=st.floats(0.01, 0.5),
    )
    @settings(max_examples=60, deadline=None)
    def test_solved_instances_clean_and_continuous(self, v0, gamma):
        prob = problem(v0=v0, gamma=gamma)
        rep = solve_cz(prob)
        assert not scan_violations(rep.trajectory, prob)
        junction_continuity(rep.trajectory)
        assert rep.max_residual < 1e-8
        p0, vv0, _ = rep.trajectory.eval(prob.t0)
        pm, _, _ = rep.trajectory.eval(rep.tm)
        assert abs(p0) < 1e-8 and abs(vv0 - v0) < 1e-8
        assert abs(pm - 400.0) < 1e-6


class TestNewton:
    def test_solves_quadratic_system(self):
        x, res = newton_solve(lambda x: [x[0] ** 2 - 4.0, x[1] - x[0]], [1.0, 1.0])
        assert math.isclose(x[0], 2.0, abs_tol=1e-8)
        assert np.max(np.abs(res)) < 1e-8

    def test_reports_nonconvergence(self):
        with pytest.raises(SolverError):
            newton_solve(lambda x: [x[0] ** 2 + 1.0], [1.0])
