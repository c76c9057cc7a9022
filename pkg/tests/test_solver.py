import math

import numpy as np
import pytest

from nashfund import (
    Distribution,
    MaxItersExceeded,
    SolverConfig,
    ZeroUtilityAgent,
    cover_gap_bound,
    kkt_check,
    log_nash_objective,
    pool,
    proportional_response_step,
    solve_nash,
    solve_profiles_batch,
    utility_of,
)
from nashfund.fixtures import basic_two_agent, four_agent_overlap, tied_pairs
from nashfund.sampling import random_distribution, random_instance
from nashfund.solver import trace_to_csv

from conftest import instance_from_arrays


def uniform_distribution(inst):
    total = pool(inst)
    return Distribution(
        total=total, spend={x: total / inst.m for x in inst.projects}
    )


def test_step_from_uniform_on_two_agents():
    # C = (1, 1), u1 = 1_a, u2 = 1_{ab}: from (1, 1) each agent splits her
    # contribution in proportion to utility drawn -> (1 + 1/4, 3/4)
    inst = basic_two_agent()
    new = proportional_response_step(inst, uniform_distribution(inst))
    assert new["a"] == pytest.approx(1.25, abs=1e-15)
    assert new["b"] == pytest.approx(0.75, abs=1e-15)


def test_gap_bound_values():
    inst = basic_two_agent()
    assert cover_gap_bound(inst, uniform_distribution(inst)) == pytest.approx(
        math.log(1.25), abs=1e-15
    )
    opt = Distribution(total=2.0, spend={"a": 1.5, "b": 0.5})
    assert cover_gap_bound(inst, opt) <= 1e-12


def test_kkt_residual_away_from_optimum():
    # at delta = 2a the unfunded project b has s(b) = 0/2 + 3/2, residual 1/2
    inst = basic_two_agent()
    rep = kkt_check(inst, Distribution(total=2.0, spend={"a": 2.0, "b": 0.0}))
    assert rep.max_residual == pytest.approx(0.5, abs=1e-12)


def test_kkt_at_optimum():
    inst = basic_two_agent()
    rep = kkt_check(inst, Distribution(total=2.0, spend={"a": 1.5, "b": 0.5}))
    assert rep.max_residual <= 1e-12
    assert rep.lambda_estimate == pytest.approx(1.0, abs=1e-12)


def test_solve_two_agent_instance():
    res = solve_nash(basic_two_agent(), SolverConfig(epsilon=1e-11))
    assert res.distribution["a"] == pytest.approx(1.5, abs=1e-9)
    assert res.distribution["b"] == pytest.approx(0.5, abs=1e-9)
    assert res.gap_bound <= 1e-11
    assert res.kkt.max_residual <= 1e-8
    assert res.min_monotone_margin >= 0.0
    assert res.min_pinsker_margin >= 0.0


def test_money_conservation_identity():
    # sum_x delta(x) s(x) = |C| for ANY full-support delta, not just optima
    rng = np.random.default_rng(21)
    for _ in range(50):
        inst = random_instance(rng)
        delta = random_distribution(rng, inst)
        idx = inst.contributing_indices()
        U = np.array([[inst.agents[i].utilities[x] for x in inst.projects] for i in idx])
        C = np.array([inst.agents[i].contribution for i in idx])
        d = np.array([delta[x] for x in inst.projects])
        u = U @ d
        if np.any(u <= 0.0):
            continue  # sparse delta can zero out an agent; identity needs u > 0
        s = (C / u) @ U
        assert float(d @ s) == pytest.approx(C.sum(), rel=1e-12)


def test_fixed_points_are_optima_and_steps_improve():
    rng = np.random.default_rng(22)
    for _ in range(25):
        inst = random_instance(rng)
        res = solve_nash(inst, SolverConfig(epsilon=1e-12, max_iters=4_000_000))
        stepped = proportional_response_step(inst, res.distribution)
        move = sum(
            abs(stepped[x] - res.distribution[x]) for x in inst.projects
        )
        # a (near-)fixed point of the step carries a (near-)zero gap, and the
        # step barely moves it
        assert move <= 1e-5 * pool(inst)
        assert res.gap_bound <= 1e-12

        start = random_distribution(rng, inst, sparsity=0.0)
        improved = proportional_response_step(inst, start)
        assert log_nash_objective(inst, improved) >= log_nash_objective(inst, start) - 1e-12


def test_contribution_scaling_equivariance():
    # nash(lam * C) = lam * nash(C): the objective shifts by a constant
    rng = np.random.default_rng(23)
    for _ in range(10):
        inst = random_instance(rng)
        lam = float(rng.uniform(0.5, 4.0))
        scaled = instance_from_arrays(
            [[a.utilities[x] for x in inst.projects] for a in inst.agents],
            [lam * a.contribution for a in inst.agents],
            budgets=[lam * a.budget for a in inst.agents],
            projects=inst.projects,
        )
        r1 = solve_nash(inst, SolverConfig(epsilon=1e-12, max_iters=4_000_000))
        r2 = solve_nash(scaled, SolverConfig(epsilon=1e-12, max_iters=4_000_000))
        for x in inst.projects:
            assert r2.distribution[x] == pytest.approx(
                lam * r1.distribution[x], abs=1e-5 * pool(scaled)
            )


def test_trace_records_pure_dynamic():
    res = solve_nash(four_agent_overlap(), SolverConfig(epsilon=1e-10, record_trace=True))
    trace = res.trace
    assert trace is not None and trace[0].iteration == 0
    assert [row.iteration for row in trace] == list(range(len(trace)))
    assert len(trace) == res.iterations + 1
    assert trace[-1].step_l1 == 0.0
    assert trace[-1].gap_bound <= 1e-10
    for a, b in zip(trace, trace[1:]):
        assert b.log_nash >= a.log_nash - 1e-12 * (1.0 + abs(a.log_nash))

    csv_text = trace_to_csv(trace)
    lines = csv_text.strip().splitlines()
    assert lines[0] == "iter,log_nash,gap_bound,step_l1"
    assert len(lines) == len(trace) + 1
    first = lines[1].split(",")
    assert int(first[0]) == 0
    assert float(first[1]) == pytest.approx(trace[0].log_nash, rel=1e-16)


def test_zero_pool_returns_empty_distribution():
    inst = instance_from_arrays([[1.0, 2.0]], [0.0])
    res = solve_nash(inst)
    assert res.distribution.total == 0.0
    assert res.gap_bound == 0.0
    assert res.iterations == 0


def test_budget_exhaustion_carries_partial_result():
    with pytest.raises(MaxItersExceeded) as exc_info:
        solve_nash(four_agent_overlap(), SolverConfig(epsilon=1e-14, max_iters=3))
    partial = exc_info.value.result
    assert partial.iterations == 3
    assert partial.gap_bound > 1e-14
    assert partial.distribution.total == pytest.approx(4.0)


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(epsilon=0.0)
    with pytest.raises(ValueError):
        SolverConfig(max_iters=0)


def test_batch_agrees_with_single_solver():
    rng = np.random.default_rng(24)
    for _ in range(10):
        inst = random_instance(rng)
        res = solve_nash(inst, SolverConfig(epsilon=1e-11))
        idx = inst.contributing_indices()
        U = np.array([[inst.agents[i].utilities[x] for x in inst.projects] for i in idx])
        C = np.array([inst.agents[i].contribution for i in idx])
        batch = solve_profiles_batch(U, C[None, :], epsilon=1e-11)
        assert batch.converged.all()
        d = np.array([res.distribution[x] for x in inst.projects])
        assert float(batch.log_nash[0]) == pytest.approx(float(C @ np.log(U @ d)), abs=1e-8)
        assert batch.min_monotone_margin >= 0.0
        assert batch.min_pinsker_margin >= 0.0


def test_batch_input_validation():
    U = np.array([[1.0, 2.0]])
    with pytest.raises(ValueError):
        solve_profiles_batch(U, np.array([[0.0]]))  # zero pool
    with pytest.raises(ValueError):
        solve_profiles_batch(U, np.array([[1.0]]), starts=np.ones((2, 2)))  # bad shape
    with pytest.raises(ValueError):
        solve_profiles_batch(U, np.array([[1.0]]), starts=np.array([[1.0, 0.0]]))


def test_batch_zero_utility_agent():
    # a contributing agent who values nothing breaks the dynamic loudly
    U = np.array([[1.0, 1.0], [0.0, 0.0]])
    with pytest.raises(ZeroUtilityAgent):
        solve_profiles_batch(U, np.array([[1.0, 1.0]]))


def test_tiny_support_optimum_is_fast_and_certified():
    # this profile's optimum puts ~4e-5 on one project; plain iteration needs
    # millions of steps there, the certified finisher should land it quickly
    inst = random_instance(np.random.default_rng(500_382), max_agents=5, max_projects=4)
    res = solve_nash(inst, SolverConfig(epsilon=1e-12, max_iters=4_000_000))
    assert res.gap_bound <= 1e-12
    assert res.iterations < 20_000
    assert res.kkt.max_residual <= 1e-6


def test_tie_instance_from_many_starts():
    inst = tied_pairs()
    idx = inst.contributing_indices()
    U = np.array([[inst.agents[i].utilities[x] for x in inst.projects] for i in idx])
    C = np.array([inst.agents[i].contribution for i in idx])
    starts = np.random.default_rng(25).uniform(0.2, 1.0, size=(5, inst.m))
    batch = solve_profiles_batch(U, np.tile(C, (5, 1)), epsilon=1e-11, starts=starts)
    assert batch.converged.all()
    # every optimum of the tied profile gives every agent utility exactly 2,
    # whichever convex combination a start converges to
    us = batch.deltas @ U.T
    assert np.max(np.abs(us - 2.0)) < 1e-6
