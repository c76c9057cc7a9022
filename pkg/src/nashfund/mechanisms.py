"""Reference funding mechanisms, all mapping an instance to a distribution.

Besides the Nash rule itself (`solve_nash` behind the "nash" id), these are
simple constructive baselines used for comparisons and counterexamples:
majoritarian spending (utilitarian), per-agent uniform spreading
(uniform_split), each agent backing her most / least popular acceptable
project (conditional_utilitarian / anticut), and one hand-built rule over a
fixed four-project profile (appendix_c) that rewards matching contributions
between two agents.

All of them ignore non-contributing agents, both for the pool and for any
welfare tallies.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Optional

from .model import (
    Agent,
    ContributionExceedsBudget,
    Distribution,
    Instance,
    pool,
)
from .solver import MaxItersExceeded, SolverConfig, solve_nash

__all__ = [
    "MECHANISM_IDS",
    "UnsupportedInstance",
    "SolverFailure",
    "run_mechanism",
    "with_contribution",
]

MECHANISM_IDS = (
    "nash",
    "utilitarian",
    "uniform_split",
    "conditional_utilitarian",
    "anticut",
    "appendix_c",
)

TIE_REL_TOL = 1e-12


class UnsupportedInstance(ValueError):
    """The mechanism is only defined for a specific instance shape."""


class SolverFailure(RuntimeError):
    """The iterative solver behind the nash mechanism did not converge."""


def with_contribution(instance: Instance, agent_index: int, contribution: float) -> Instance:
    """A copy of the instance where one agent contributes a different amount.

    The incentive checks sweep this over [0, C_i]. Raises
    ContributionExceedsBudget if the new amount is negative, non-finite, or
    above the agent's budget.
    """
    agent = instance.agents[agent_index]
    if not (0.0 <= contribution <= agent.budget):
        raise ContributionExceedsBudget(
            f"contribution {contribution!r} for agent {agent.name!r} "
            f"must lie in [0, budget {agent.budget}]"
        )
    changed = replace(agent, contribution=float(contribution))
    agents = instance.agents[:agent_index] + (changed,) + instance.agents[agent_index + 1:]
    return replace(instance, agents=agents)


def run_mechanism(
    mechanism: str,
    instance: Instance,
    config: Optional[SolverConfig] = None,
) -> Distribution:
    """Run one of the named mechanisms on a validated instance.

    ``config`` only affects "nash" (solver epsilon and iteration budget).
    Raises UnsupportedInstance for appendix_c outside its fixed profile and
    SolverFailure if the nash solve exhausts its iteration budget.
    """
    if mechanism == "nash":
        try:
            result = solve_nash(instance, config or SolverConfig())
        except MaxItersExceeded as exc:
            raise SolverFailure(str(exc)) from exc
        return result.distribution
    if mechanism == "utilitarian":
        return _utilitarian(instance)
    if mechanism == "uniform_split":
        return _per_agent_uniform(instance, lambda a, w: a.acceptable())
    if mechanism == "conditional_utilitarian":
        return _per_agent_uniform(instance, _popular_acceptable)
    if mechanism == "anticut":
        return _per_agent_uniform(instance, _unpopular_acceptable)
    if mechanism == "appendix_c":
        return _matching_rule(instance)
    raise ValueError(f"unknown mechanism {mechanism!r}; expected one of {MECHANISM_IDS}")


# ---------------------------------------------------------------------------


def _welfare(instance: Instance) -> dict[str, float]:
    """Total utility per project, summed over contributing agents."""
    w = {x: 0.0 for x in instance.projects}
    for i in instance.contributing_indices():
        for x, v in instance.agents[i].utilities.items():
            w[x] += v
    return w


def _near_max(values: dict[str, float], keys) -> list[str]:
    best = max(values[x] for x in keys)
    cut = best - TIE_REL_TOL * max(1.0, abs(best))
    return [x for x in keys if values[x] >= cut]


def _near_min(values: dict[str, float], keys) -> list[str]:
    worst = min(values[x] for x in keys)
    cut = worst + TIE_REL_TOL * max(1.0, abs(worst))
    return [x for x in keys if values[x] <= cut]


def _utilitarian(instance: Instance) -> Distribution:
    """The whole pool on the project(s) with the highest total utility."""
    total = pool(instance)
    if total == 0.0:
        return Distribution.zero(instance.projects)
    winners = _near_max(_welfare(instance), instance.projects)
    share = total / len(winners)
    spend = {x: (share if x in winners else 0.0) for x in instance.projects}
    return Distribution(total=total, spend=spend)


def _popular_acceptable(agent: Agent, welfare: dict[str, float]) -> list[str]:
    return _near_max(welfare, sorted(agent.acceptable()))


def _unpopular_acceptable(agent: Agent, welfare: dict[str, float]) -> list[str]:
    return _near_min(welfare, sorted(agent.acceptable()))


def _per_agent_uniform(instance: Instance, choose) -> Distribution:
    """Each contributing agent splits her contribution uniformly over
    ``choose(agent, welfare)``; the results are summed."""
    welfare = _welfare(instance)
    spend = {x: 0.0 for x in instance.projects}
    for i in instance.contributing_indices():
        agent = instance.agents[i]
        targets = list(choose(agent, welfare))
        share = agent.contribution / len(targets)
        for x in targets:
            spend[x] += share
    return Distribution(total=pool(instance), spend=spend)


_MATCHING_PROJECTS = ("a", "b", "c", "d")
_MATCHING_PATTERNS = (
    {"a": 1.0, "b": 1.0, "c": 0.0, "d": 0.0},
    {"a": 1.0, "b": 0.0, "c": 1.0, "d": 0.0},
    {"a": 0.0, "b": 0.0, "c": 0.0, "d": 1.0},
)


def _matching_rule(instance: Instance) -> Distribution:
    """Fixed-profile rule: agents 1 and 2 fund their shared project a up to
    their matched contributions, overflow goes to their private projects b
    and c, and the match total plus agent 3's contribution funds d.

    Only defined on the exact three-agent, four-project profile with
    utilities 1_{ab}, 1_{ac}, 1_{d}; anything else raises UnsupportedInstance.
    """
    if instance.projects != _MATCHING_PROJECTS or instance.n != 3:
        raise UnsupportedInstance(
            "this rule is fixed to projects (a, b, c, d) and exactly 3 agents"
        )
    for agent, pattern in zip(instance.agents, _MATCHING_PATTERNS):
        if dict(agent.utilities) != pattern:
            raise UnsupportedInstance(
                f"agent {agent.name!r} must have utility pattern {pattern}"
            )
    c1, c2, c3 = (a.contribution for a in instance.agents)
    match = min(c1, c2)
    spend = {
        "a": match,
        "b": c1 - match,
        "c": c2 - match,
        "d": match + c3,
    }
    return Distribution(total=pool(instance), spend=spend)
