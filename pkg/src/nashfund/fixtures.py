"""Small embedded instances with known-by-hand solutions.

These are the profiles the test suite and `nashfund examples` lean on. Each
builder returns a validated instance; `EXPECTATIONS` pairs fixture names with
executable checks of the hand-derived outcomes (closed-form optima, known
axiom violations, decomposability verdicts), so a clean build can be
smoke-tested from the command line in one shot.
"""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np

from .axioms import check_cic, check_efficiency, check_strong_cic, cic_profile
from .decomposition import (
    check_decomposable,
    check_strong_decomposable,
    proportional_decomposition,
)
from .mechanisms import run_mechanism
from .model import Agent, Distribution, Instance, validate_and_normalize
from .solver import SolverConfig, solve_nash, solve_profiles_batch

__all__ = [
    "FIXTURES",
    "EXPECTATIONS",
    "basic_two_agent",
    "four_agent_overlap",
    "tied_pairs",
    "pet_projects",
    "three_pets_compromise",
    "nested_approvals",
    "matching_rule_profile",
    "fixture",
    "run_expectations",
]


def _instance(projects, rows) -> Instance:
    """rows: (name, budget, contribution, {project: utility})"""
    agents = tuple(
        Agent(name=n, budget=b, contribution=c, utilities=u) for n, b, c, u in rows
    )
    return validate_and_normalize(Instance(projects=tuple(projects), agents=agents))


def basic_two_agent(budget: float = 1.0) -> Instance:
    """Two agents over two projects; one cares only about a, the other
    prefers b three to one. The optimum splits 1.5 on a, 0.5 on b."""
    return _instance(
        ("a", "b"),
        [
            ("agent1", budget, 1.0, {"a": 1.0, "b": 0.0}),
            ("agent2", budget, 1.0, {"a": 1.0, "b": 3.0}),
        ],
    )


def four_agent_overlap() -> Instance:
    """Four approval voters over three projects with overlapping pairs; the
    optimum has an irrational closed form: spend (7 - sqrt(17))/4 on each of
    a and b, the rest on c."""
    return _instance(
        ("a", "b", "c"),
        [
            ("agent1", 1.0, 1.0, {"a": 1.0, "b": 1.0, "c": 0.0}),
            ("agent2", 1.0, 1.0, {"a": 1.0, "b": 0.0, "c": 1.0}),
            ("agent3", 1.0, 1.0, {"a": 0.0, "b": 1.0, "c": 1.0}),
            ("agent4", 1.0, 1.0, {"a": 0.0, "b": 0.0, "c": 1.0}),
        ],
    )


def tied_pairs() -> Instance:
    """Approval sets {a,c}, {a,d}, {b,c}, {b,d}: the optimum is any convex
    combination of 2a+2b and 2c+2d, but every agent's utility is 2 at all of
    them."""
    return _instance(
        ("a", "b", "c", "d"),
        [
            ("agent1", 1.0, 1.0, {"a": 1.0, "b": 0.0, "c": 1.0, "d": 0.0}),
            ("agent2", 1.0, 1.0, {"a": 1.0, "b": 0.0, "c": 0.0, "d": 1.0}),
            ("agent3", 1.0, 1.0, {"a": 0.0, "b": 1.0, "c": 1.0, "d": 0.0}),
            ("agent4", 1.0, 1.0, {"a": 0.0, "b": 1.0, "c": 0.0, "d": 1.0}),
        ],
    )


def pet_projects(eps: float = 0.5) -> Instance:
    """Each agent has a pet project the other dislikes, plus a shared
    compromise x worth slightly less than the pet. Funding only pets (a + b)
    is strongly decomposable yet dominated by pooling everything on x."""
    return _instance(
        ("a", "b", "x"),
        [
            ("agent1", 1.0, 1.0, {"a": 1.0 + eps, "b": 0.0, "x": 1.0}),
            ("agent2", 1.0, 1.0, {"a": 0.0, "b": 1.0 + eps, "x": 1.0}),
        ],
    )


def three_pets_compromise(eps: float = 0.25) -> Instance:
    """Three agents, each with a private pet project worth 2 - eps and a
    shared compromise x worth 1. Here requiring full-value returns on every
    contribution is impossible for anything efficient."""
    pets = {"agent1": "a", "agent2": "b", "agent3": "c"}
    rows = []
    for name, pet in pets.items():
        u = {"a": 0.0, "b": 0.0, "c": 0.0, "x": 1.0}
        u[pet] = 2.0 - eps
        rows.append((name, 1.0, 1.0, u))
    return _instance(("a", "b", "c", "x"), rows)


def nested_approvals(c2: float = 1.0) -> Instance:
    """Agent 1 approves {a, b}, agent 2 only {a}. The agent-2 contribution is
    adjustable to probe incentive failures of welfare-based baselines."""
    return _instance(
        ("a", "b"),
        [
            ("agent1", 1.0, 1.0, {"a": 1.0, "b": 1.0}),
            ("agent2", 1.0, c2, {"a": 1.0, "b": 0.0}),
        ],
    )


def matching_rule_profile(contributions=(1.0, 1.0, 1.0)) -> Instance:
    """The home profile of the appendix_c mechanism: agents 1 and 2 share
    project a and hold private projects b and c; agent 3 only wants d."""
    c1, c2, c3 = contributions
    return _instance(
        ("a", "b", "c", "d"),
        [
            ("agent1", 1.0, c1, {"a": 1.0, "b": 1.0, "c": 0.0, "d": 0.0}),
            ("agent2", 1.0, c2, {"a": 1.0, "b": 0.0, "c": 1.0, "d": 0.0}),
            ("agent3", 1.0, c3, {"a": 0.0, "b": 0.0, "c": 0.0, "d": 1.0}),
        ],
    )


FIXTURES: dict[str, Callable[[], Instance]] = {
    "basic_two_agent": basic_two_agent,
    "four_agent_overlap": four_agent_overlap,
    "tied_pairs": tied_pairs,
    "pet_projects": pet_projects,
    "three_pets_compromise": three_pets_compromise,
    "nested_approvals": nested_approvals,
    "matching_rule_profile": matching_rule_profile,
}


def fixture(name: str) -> Instance:
    try:
        build = FIXTURES[name]
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; available: {', '.join(sorted(FIXTURES))}")
    return build()


# ---------------------------------------------------------------------------
# Executable expectations (the `examples` subcommand)


def _expect_basic_solve(seed: int) -> tuple[bool, str]:
    inst = basic_two_agent()
    res = solve_nash(inst, SolverConfig(epsilon=1e-12))
    d = res.distribution
    ok = abs(d["a"] - 1.5) <= 1e-6 and abs(d["b"] - 0.5) <= 1e-6
    parts = proportional_decomposition(inst, d).parts
    ok = ok and abs(parts["agent1"]["a"] - 1.0) <= 1e-6
    ok = ok and abs(parts["agent2"]["a"] - 0.5) <= 1e-6
    ok = ok and abs(parts["agent2"]["b"] - 0.5) <= 1e-6
    return ok, f"spend a={d['a']:.9g} b={d['b']:.9g}, parts recomposed"


def _expect_overlap_solve(seed: int) -> tuple[bool, str]:
    inst = four_agent_overlap()
    res = solve_nash(inst, SolverConfig(epsilon=1e-12))
    d = res.distribution
    da = (7.0 - math.sqrt(17.0)) / 4.0
    ok = (
        abs(d["a"] - da) <= 1e-6
        and abs(d["b"] - da) <= 1e-6
        and abs(d["c"] - (4.0 - 2.0 * da)) <= 1e-6
        and res.kkt.max_residual <= 1e-8
    )
    return ok, (
        f"spend a={d['a']:.9g} b={d['b']:.9g} c={d['c']:.9g}, "
        f"max KKT residual {res.kkt.max_residual:.3g}"
    )


def _expect_tied_utilities(seed: int) -> tuple[bool, str]:
    inst = tied_pairs()
    from .model import utility_of

    res = solve_nash(inst, SolverConfig(epsilon=1e-12))
    utils = [utility_of(inst, i, res.distribution) for i in range(inst.n)]
    ok = all(abs(u - 2.0) <= 1e-6 for u in utils)
    # Perturbed restarts must land on the same utilities even though the
    # optimal spend itself is not unique.
    rng = np.random.default_rng(seed)
    U = np.array([[a.utilities[x] for x in inst.projects] for a in inst.agents])
    C = np.array([[a.contribution for a in inst.agents]] * 8)
    starts = rng.uniform(0.2, 1.0, size=(8, inst.m))
    batch = solve_profiles_batch(U, C, epsilon=1e-12, starts=starts)
    restart_utils = batch.deltas @ U.T
    ok = ok and bool(np.all(np.abs(restart_utils - 2.0) <= 1e-5))
    return ok, f"utilities {', '.join(f'{u:.9g}' for u in utils)} from 1+8 starts"


def _expect_greedy_welfare_not_cic(seed: int) -> tuple[bool, str]:
    report = check_cic("utilitarian", basic_two_agent(), agent_index=0)
    ok = not report.holds and report.witness is not None
    gap = report.witness["gap"] if report.witness else float("nan")
    return ok, f"utilitarian CIC violated for agent1, net gap {gap:.9g}"


def _expect_least_popular_not_cic(seed: int) -> tuple[bool, str]:
    both = run_mechanism("anticut", nested_approvals(1.0))
    alone = run_mechanism("anticut", nested_approvals(0.0))
    ok = (
        abs(both["a"] - 1.0) <= 1e-12
        and abs(both["b"] - 1.0) <= 1e-12
        and abs(alone["a"] - 0.5) <= 1e-12
        and abs(alone["b"] - 0.5) <= 1e-12
    )
    report = check_cic("anticut", nested_approvals(1.0), agent_index=1)
    ok = ok and not report.holds
    gap = report.witness["gap"] if report.witness else float("nan")
    ok = ok and abs(gap - 0.5) <= 1e-9
    return ok, f"anticut pays agent2 {gap:.9g} more for contributing nothing"


def _expect_matching_rule_not_decomposable(seed: int) -> tuple[bool, str]:
    inst = matching_rule_profile()
    dist = run_mechanism("appendix_c", inst)
    ok = abs(dist["a"] - 1.0) <= 1e-12 and abs(dist["d"] - 2.0) <= 1e-12
    report = check_decomposable(inst, dist)
    ok = ok and not report.decomposable and report.witness is not None
    agents = set(report.witness.agents) if report.witness else set()
    ok = ok and agents == {"agent1", "agent2"}
    return ok, f"a+2d not decomposable, witness group {sorted(agents)}"


def _expect_pets_dominated(seed: int) -> tuple[bool, str]:
    inst = pet_projects(0.5)
    ab = Distribution(total=2.0, spend={"a": 1.0, "b": 1.0, "x": 0.0})
    strong = check_strong_decomposable(inst, ab)
    eff = check_efficiency(inst, ab)
    ok = strong.decomposable and not eff.holds and eff.witness is not None
    if ok:
        gains = eff.witness["gains"]
        dom = eff.witness["dominating"]["spend"]
        u1 = 1.5 * dom.get("a", 0.0) + dom.get("x", 0.0)
        u2 = 1.5 * dom.get("b", 0.0) + dom.get("x", 0.0)
        ok = u1 >= 2.0 - 1e-6 and u2 >= 2.0 - 1e-6
        detail = f"a+b strongly decomposable but dominated (utilities {u1:.9g}, {u2:.9g})"
    else:
        detail = "expected strong decomposability + inefficiency"
    return ok, detail


def _expect_no_strong_cic(seed: int) -> tuple[bool, str]:
    inst = three_pets_compromise(0.25)
    violated = [
        i for i in range(inst.n)
        if not check_strong_cic("nash", inst, i, solver_epsilon=1e-11).holds
    ]
    return bool(violated), f"strong CIC fails for agents {violated}"


def _expect_closed_form_grids(seed: int) -> tuple[bool, str]:
    inst = basic_two_agent()
    worst = 0.0
    p1 = cic_profile("nash", inst, 0, grid_size=21, solver_epsilon=1e-11)
    for c, u in zip(p1.grid, p1.utilities):
        eps1 = 1.0 - c
        worst = max(worst, abs((u + eps1) - (1.5 - 0.5 * eps1)))
    p2 = cic_profile("nash", inst, 1, grid_size=21, solver_epsilon=1e-11)
    for c, u in zip(p2.grid, p2.utilities):
        eps2 = 1.0 - c
        expected = 6.0 - 2.0 * eps2 - 2.0 * min(1.5, 2.0 - eps2)
        worst = max(worst, abs((u + eps2) - expected))
    return worst <= 1e-6, f"incentive grids match closed forms, worst error {worst:.3g}"


EXPECTATIONS: list[tuple[str, str, Callable[[int], tuple[bool, str]]]] = [
    ("basic_two_agent", "optimum 1.5a + 0.5b and its per-agent split", _expect_basic_solve),
    ("four_agent_overlap", "irrational closed-form spend and tight KKT residual", _expect_overlap_solve),
    ("tied_pairs", "tied optima all give every agent utility 2", _expect_tied_utilities),
    ("basic_two_agent", "utilitarian rule fails contribution incentives", _expect_greedy_welfare_not_cic),
    ("nested_approvals", "anticut rule rewards withholding", _expect_least_popular_not_cic),
    ("matching_rule_profile", "matching rule output a+2d is not decomposable", _expect_matching_rule_not_decomposable),
    ("pet_projects", "a+b strongly decomposable yet dominated via x", _expect_pets_dominated),
    ("three_pets_compromise", "no full-value return on contributions here", _expect_no_strong_cic),
    ("basic_two_agent", "incentive grids match the hand-derived formulas", _expect_closed_form_grids),
]


def run_expectations(
    names: Optional[list[str]] = None, seed: int = 0
) -> list[tuple[str, str, bool, str]]:
    """Run the executable expectations, optionally restricted to fixtures in
    ``names``. Returns (fixture, description, ok, detail) per expectation.
    Raises KeyError for an unknown fixture name."""
    if names:
        unknown = set(names) - set(FIXTURES)
        if unknown:
            raise KeyError(
                f"unknown fixture(s) {sorted(unknown)}; available: {', '.join(sorted(FIXTURES))}"
            )
        selected = [e for e in EXPECTATIONS if e[0] in set(names)]
    else:
        selected = EXPECTATIONS
    results = []
    for fixture_name, description, check in selected:
        try:
            ok, detail = check(seed)
        except Exception as exc:  # an expectation crashing is a failure, not an abort
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append((fixture_name, description, ok, detail))
    return results
