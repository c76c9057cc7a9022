"""Domain types for contribution-funded public goods.

An :class:`Instance` fixes a set of projects and a set of agents, each with a
budget, a contribution to the common pool, and a per-unit utility for every
project. A :class:`Distribution` spreads some amount of money over the
projects. Everything downstream (the solver, decomposition, mechanisms, axiom
checks) works on these two types plus :class:`Decomposition`.

Conventions baked in here:

* utilities are linear: u_i(delta) = sum_x delta(x) * u_i(x);
* utilities are normalized so the least-preferred *acceptable* project of each
  agent has utility exactly 1 (agents indifferent between all projects,
  including all-zero reports, get utility 1 everywhere);
* agents with zero contribution stay in the instance but are ignored by the
  objective.

All types are plain frozen dataclasses treated as immutable values.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

__all__ = [
    "Agent",
    "Instance",
    "Distribution",
    "Decomposition",
    "ModelError",
    "NegativeUtility",
    "ContributionExceedsBudget",
    "DuplicateProject",
    "EmptyInstance",
    "ProjectMismatch",
    "validate_and_normalize",
    "utility_of",
    "log_nash_objective",
    "pool",
    "distribution_tolerance",
]

#: Absolute tolerance for "these spends sum to that total" checks, as a
#: function of the total. Shared by every module.
def distribution_tolerance(total: float) -> float:
    return 1e-9 * max(1.0, total)


class ModelError(ValueError):
    """Base class for input validation failures."""


class NegativeUtility(ModelError):
    pass


class ContributionExceedsBudget(ModelError):
    pass


class DuplicateProject(ModelError):
    pass


class EmptyInstance(ModelError):
    pass


class ProjectMismatch(ModelError):
    """A distribution or utility map does not line up with the instance's projects."""


@dataclass(frozen=True)
class Agent:
    """One participant: her budget B_i, contribution C_i and utility function u_i.

    ``utilities`` maps every project of the instance to a nonnegative per-unit
    utility. ``raw_utilities`` keeps the values as originally reported, for
    display; it is set by :func:`validate_and_normalize` and carried through
    further normalizations unchanged.
    """

    name: str
    budget: float
    contribution: float
    utilities: Mapping[str, float]
    raw_utilities: Optional[Mapping[str, float]] = field(default=None, compare=False)

    def acceptable(self) -> frozenset[str]:
        """Projects with strictly positive utility (the set A_i)."""
        return frozenset(x for x, u in self.utilities.items() if u > 0.0)

    def favorites(self, rel_tol: float = 1e-12) -> frozenset[str]:
        """Projects attaining the maximum utility (the set of favorites).

        Utilities are floats, so "attaining the maximum" is read with a small
        relative tolerance; exact comparison would split mathematically equal
        ties that differ in the last bit.
        """
        top = max(self.utilities.values())
        return frozenset(
            x for x, u in self.utilities.items() if u >= top - rel_tol * max(1.0, abs(top))
        )

    def max_utility(self) -> float:
        return max(self.utilities.values())


@dataclass(frozen=True)
class Instance:
    """A profile: projects, agents, and their fixed utilities/budgets/contributions."""

    projects: tuple[str, ...]
    agents: tuple[Agent, ...]

    @property
    def m(self) -> int:
        return len(self.projects)

    @property
    def n(self) -> int:
        return len(self.agents)

    def agent_named(self, name: str) -> Agent:
        for a in self.agents:
            if a.name == name:
                return a
        raise KeyError(name)

    def contributing_indices(self) -> list[int]:
        return [i for i, a in enumerate(self.agents) if a.contribution > 0.0]


@dataclass(frozen=True)
class Distribution:
    """An allocation of ``total`` money units across projects.

    Invariants are checked at construction: spends are nonnegative and sum to
    ``total`` within ``distribution_tolerance(total)``.
    """

    total: float
    spend: Mapping[str, float]

    def __post_init__(self):
        if self.total < 0.0 or not math.isfinite(self.total):
            raise ValueError(f"distribution total must be finite and >= 0, got {self.total}")
        s = 0.0
        for x, v in self.spend.items():
            if v < 0.0 or not math.isfinite(v):
                raise ValueError(f"spend on {x!r} must be finite and >= 0, got {v}")
            s += v
        if abs(s - self.total) > distribution_tolerance(self.total):
            raise ValueError(
                f"spend sums to {s!r}, declared total is {self.total!r} "
                f"(tolerance {distribution_tolerance(self.total):g})"
            )

    def __getitem__(self, project: str) -> float:
        return self.spend.get(project, 0.0)

    def support(self, threshold: float = 0.0) -> frozenset[str]:
        return frozenset(x for x, v in self.spend.items() if v > threshold)

    @staticmethod
    def zero(projects: Iterable[str]) -> "Distribution":
        return Distribution(total=0.0, spend={x: 0.0 for x in projects})


@dataclass(frozen=True)
class Decomposition:
    """Per-agent distributions whose project-wise sum is a target distribution."""

    parts: Mapping[str, Distribution]

    def summed_spend(self, projects: Iterable[str]) -> dict[str, float]:
        out = {x: 0.0 for x in projects}
        for part in self.parts.values():
            for x, v in part.spend.items():
                out[x] = out.get(x, 0.0) + v
        return out


# ---------------------------------------------------------------------------
# Construction and validation


def _structural_check(projects, agents):
    if len(projects) == 0:
        raise EmptyInstance("instance has no projects")
    if len(agents) == 0:
        raise EmptyInstance("instance has no agents")
    seen = set()
    for x in projects:
        if not x:
            raise DuplicateProject("empty project identifier")
        if x in seen:
            raise DuplicateProject(f"duplicate project {x!r}")
        seen.add(x)
    for a in agents:
        if set(a.utilities.keys()) != seen:
            missing = seen - set(a.utilities.keys())
            extra = set(a.utilities.keys()) - seen
            raise ProjectMismatch(
                f"agent {a.name!r}: utilities must cover every project exactly "
                f"(missing {sorted(missing)}, unknown {sorted(extra)})"
            )
        for x, u in a.utilities.items():
            if not math.isfinite(u) or u < 0.0:
                raise NegativeUtility(f"agent {a.name!r}: utility for {x!r} is {u}")
        if not math.isfinite(a.budget) or a.budget < 0.0:
            raise ContributionExceedsBudget(f"agent {a.name!r}: budget {a.budget} is invalid")
        if not math.isfinite(a.contribution) or a.contribution < 0.0:
            raise ContributionExceedsBudget(
                f"agent {a.name!r}: contribution {a.contribution} is invalid"
            )
        if a.contribution > a.budget:
            raise ContributionExceedsBudget(
                f"agent {a.name!r}: contribution {a.contribution} exceeds budget {a.budget}"
            )


def _normalize_agent(agent: Agent, projects) -> Agent:
    raw = agent.raw_utilities if agent.raw_utilities is not None else dict(agent.utilities)
    values = [agent.utilities[x] for x in projects]
    positive = [v for v in values if v > 0.0]
    if not positive or min(values) == max(values):
        # All-indifferent (constant utilities, all-zero included): every
        # project counts as acceptable with utility exactly 1.
        norm = {x: 1.0 for x in projects}
    else:
        low = min(positive)
        norm = {x: agent.utilities[x] / low for x in projects}
        # Make the minimum positive value exactly 1 despite rounding.
        for x in projects:
            if agent.utilities[x] == low:
                norm[x] = 1.0
    return Agent(
        name=agent.name,
        budget=agent.budget,
        contribution=agent.contribution,
        utilities=norm,
        raw_utilities=raw,
    )


def validate_and_normalize(raw: Instance) -> Instance:
    """Validate an instance and rescale utilities to the min-positive-1 form.

    Each agent with at least one positive utility gets her utilities divided
    by min{u_i(x) : u_i(x) > 0}; an agent indifferent between all projects
    (all equal, including all-zero) gets utility 1 everywhere. Original values
    are retained on ``raw_utilities``. Idempotent.
    """
    _structural_check(raw.projects, raw.agents)
    return Instance(
        projects=tuple(raw.projects),
        agents=tuple(_normalize_agent(a, raw.projects) for a in raw.agents),
    )


# ---------------------------------------------------------------------------
# Evaluation


def _check_delta(instance: Instance, delta: Distribution):
    extra = set(delta.spend.keys()) - set(instance.projects)
    if extra:
        raise ProjectMismatch(f"distribution spends on unknown projects {sorted(extra)}")


def utility_of(instance: Instance, agent_index: int, delta: Distribution) -> float:
    """Linear utility u_i(delta) = sum_x delta(x) * u_i(x)."""
    _check_delta(instance, delta)
    agent = instance.agents[agent_index]
    return sum(delta[x] * agent.utilities[x] for x in instance.projects)


def log_nash_objective(instance: Instance, delta: Distribution) -> float:
    """F(delta) = sum over contributing agents of C_i * log u_i(delta).

    Agents with C_i = 0 are skipped (0 log 0 = 0 convention); a contributing
    agent with zero utility makes the objective -inf.
    """
    _check_delta(instance, delta)
    total = 0.0
    for i in instance.contributing_indices():
        u = utility_of(instance, i, delta)
        if u <= 0.0:
            return float("-inf")
        total += instance.agents[i].contribution * math.log(u)
    return total


def pool(instance: Instance) -> float:
    """The pool |C| = sum of all contributions."""
    return sum(a.contribution for a in instance.agents)


# ---------------------------------------------------------------------------
# JSON wire format


def instance_to_dict(instance: Instance) -> dict:
    return {
        "projects": list(instance.projects),
        "agents": [
            {
                "name": a.name,
                "budget": a.budget,
                "contribution": a.contribution,
                "utilities": {x: a.utilities[x] for x in instance.projects},
            }
            for a in instance.agents
        ],
    }


def instance_from_dict(data: dict) -> Instance:
    """Parse the canonical instance JSON and validate + normalize it."""
    try:
        projects = tuple(str(x) for x in data["projects"])
        agents = tuple(
            Agent(
                name=str(rec.get("name", idx)),
                budget=float(rec["budget"]),
                contribution=float(rec["contribution"]),
                utilities={str(x): float(u) for x, u in rec["utilities"].items()},
            )
            for idx, rec in enumerate(data["agents"])
        )
    except (KeyError, TypeError, AttributeError) as exc:
        raise ModelError(f"malformed instance JSON: {exc}") from exc
    return validate_and_normalize(Instance(projects=projects, agents=agents))


def load_instance(path: str) -> Instance:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))


def distribution_to_dict(delta: Distribution) -> dict:
    return {"total": delta.total, "spend": dict(delta.spend)}


def distribution_from_dict(data: dict) -> Distribution:
    try:
        return Distribution(
            total=float(data["total"]),
            spend={str(x): float(v) for x, v in data["spend"].items()},
        )
    except (KeyError, TypeError, AttributeError) as exc:
        raise ModelError(f"malformed distribution JSON: {exc}") from exc


def load_distribution(path: str) -> Distribution:
    with open(path) as fh:
        return distribution_from_dict(json.load(fh))


def decomposition_to_dict(decomp: Decomposition) -> dict:
    return {"parts": {name: distribution_to_dict(d) for name, d in decomp.parts.items()}}
