"""Brute-force oracles: bounding relations against the analytic solvers."""
import math

import numpy as np
import pytest

from crossflow.cz_solver import CzProblem, cz_cost, solve_cz
from crossflow.errors import InfeasibleError
from crossflow.model import CzTrajectory, cubic_arc_from_states
from crossflow.mz_solver import MzProblem, mz_objective, solve_mz
from crossflow.oracle import GridSpec, brute_force_cz, brute_force_mz

BOX = dict(v_min=5.0, v_max=15.0, u_min=-0.5, u_max=0.5)


def problem(**kwargs):
    base = dict(t0=0.0, v0=10.0, length=400.0, gamma=0.1, **BOX)
    base.update(kwargs)
    return CzProblem(**base)


class TestCzOracle:
    def test_free_terminal_brackets_analytic(self):
        prob = problem()
        grid = GridSpec(h=0.05, tm_samples=41, refine_levels=2)
        cost, tm, traj = brute_force_cz(prob, grid)
        rep = solve_cz(prob)
        analytic = cz_cost(rep.trajectory, prob.gamma)
        assert cost >= analytic - 1e-9
        assert cost - analytic < 1e-4
        assert abs(tm - rep.tm) < 0.2
        assert abs(traj["p"][-1] - 400.0) < 1e-6

    def test_fixed_terminal(self):
        prob = problem(tm=33.0)
        cost, tm, _ = brute_force_cz(prob, GridSpec(h=0.05))
        rep = solve_cz(prob)
        analytic = cz_cost(rep.trajectory, prob.gamma)
        assert tm == 33.0
        assert analytic - 1e-9 <= cost <= analytic + 1e-4

    def test_refinement_reduces_gap(self):
        prob = problem()
        analytic = cz_cost(solve_cz(prob).trajectory, prob.gamma)
        gaps = []
        for levels in (0, 2):
            cost, _, _ = brute_force_cz(
                prob, GridSpec(h=0.05, tm_samples=21, refine_levels=levels)
            )
            gaps.append(cost - analytic)
        assert gaps[1] <= gaps[0] + 1e-12

    def test_box_constrained_instance(self):
        prob = problem(gamma=0.375, v0=11.0)  # speed ceiling binds
        cost, _, traj = brute_force_cz(prob, GridSpec(h=0.05, tm_samples=21, refine_levels=1))
        analytic = cz_cost(solve_cz(prob).trajectory, prob.gamma)
        assert cost >= analytic - 1e-9
        assert cost - analytic < 0.01 * analytic + 0.05
        assert np.max(traj["v"]) <= 15.0 + 1e-6

    def test_predecessor_constrained_instance(self):
        from crossflow.cz_solver import solve_unconstrained_free

        pred = solve_unconstrained_free(problem()).trajectory
        prob = problem(t0=2.0, v0=13.0, tm=32.76, pred=pred)
        cost, _, traj = brute_force_cz(prob, GridSpec(h=0.05))
        analytic = cz_cost(solve_cz(prob).trajectory, prob.gamma)
        # the discrete headway check samples the gap, so the oracle may cut
        # the corner of the constraint by a grid-sized sliver
        assert cost >= analytic - 5e-3
        assert cost - analytic < 0.01 * analytic + 0.05
        pk, _, _ = pred.sample_extended(traj["t"])
        assert np.min(pk - traj["p"]) >= 10.0 - 1e-3

    def test_empty_window_raises(self):
        with pytest.raises(InfeasibleError):
            brute_force_cz(problem(t_lower=80.0, t_upper=70.0), GridSpec())


class TestMzOracle:
    def test_brackets_analytic(self):
        prob = MzProblem(
            tm=30.0, tf=33.5, vm=12.0, v_f=8.0, um=0.2,
            path_length=30.0, rho1=2.0, rho2=0.005, p_entry=400.0,
        )
        cost, traj = brute_force_mz(prob, GridSpec(h=0.01))
        _, _, analytic = mz_objective(solve_mz(prob))
        assert cost >= analytic - 1e-9
        assert cost - analytic < 0.01 * analytic + 1e-6
        assert abs(traj["p"][-1] - 430.0) < 1e-8
        assert abs(traj["v"][-1] - 8.0) < 1e-8

    def test_trivial_instance_zero(self):
        prob = MzProblem(
            tm=30.0, tf=33.0, vm=10.0, v_f=10.0, um=0.0,
            path_length=30.0, rho1=2.0, rho2=0.005, p_entry=400.0,
        )
        cost, traj = brute_force_mz(prob, GridSpec(h=0.01))
        assert abs(cost) < 1e-10
        assert np.max(np.abs(traj["u"])) < 1e-8

    def test_finer_grid_not_worse(self):
        prob = MzProblem(
            tm=0.0, tf=4.0, vm=13.0, v_f=9.0, um=-0.1,
            path_length=36.0, rho1=1.0, rho2=0.01, p_entry=400.0,
        )
        coarse, _ = brute_force_mz(prob, GridSpec(h=0.1))
        fine, _ = brute_force_mz(prob, GridSpec(h=0.01))
        assert fine <= coarse + 1e-12
