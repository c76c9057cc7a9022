"""Seeded random instances for the property suites.

All generators take a ``numpy.random.Generator`` so suites stay reproducible:
the caller seeds once (or derives one seed per case) and every draw flows
from it. Utility profiles mix dichotomous (0/1 approvals) and small-integer
cardinal agents, matching the regimes the guarantees are exercised under.
"""

from __future__ import annotations

import numpy as np

from .model import Agent, Distribution, Instance, validate_and_normalize

__all__ = [
    "random_instance",
    "random_distribution",
    "planted_core_instance",
]


def _project_names(m: int, offset: int = 0) -> tuple[str, ...]:
    return tuple(f"p{j + 1 + offset}" for j in range(m))


def _utility_row(rng: np.random.Generator, m: int, dichotomous: bool) -> np.ndarray:
    """One agent's raw utilities: 0/1 approvals or integers in 0..4, never all zero."""
    if dichotomous:
        row = rng.integers(0, 2, size=m)
    else:
        row = rng.integers(0, 5, size=m)
    if not row.any():
        row[rng.integers(0, m)] = 1 if dichotomous else int(rng.integers(1, 5))
    return row.astype(float)


def random_instance(
    rng: np.random.Generator,
    max_agents: int = 6,
    max_projects: int = 5,
    dichotomous_prob: float = 0.5,
) -> Instance:
    """A small instance with everything drawn from ``rng``.

    1..max_projects projects, 1..max_agents agents; each agent is dichotomous
    with probability ``dichotomous_prob`` and cardinal (integer utilities in
    0..4) otherwise, always valuing at least one project. Contributions are
    uniform in [0.1, 1.0] with budget 1, so every agent contributes and the
    pool is bounded away from zero.
    """
    m = int(rng.integers(1, max_projects + 1))
    n = int(rng.integers(1, max_agents + 1))
    projects = _project_names(m)
    agents = []
    for i in range(n):
        row = _utility_row(rng, m, bool(rng.random() < dichotomous_prob))
        agents.append(
            Agent(
                name=f"a{i + 1}",
                budget=1.0,
                contribution=float(rng.uniform(0.1, 1.0)),
                utilities={x: float(v) for x, v in zip(projects, row)},
            )
        )
    return validate_and_normalize(Instance(projects=projects, agents=tuple(agents)))


def random_distribution(
    rng: np.random.Generator,
    instance: Instance,
    sparsity: float = 0.3,
) -> Distribution:
    """A random feasible distribution of the instance's pool.

    Dirichlet weights over the projects, with each coordinate independently
    zeroed with probability ``sparsity`` (at least one survives). Useful for
    exercising checks away from the optimum.
    """
    pool = sum(a.contribution for a in instance.agents)
    m = instance.m
    weights = rng.dirichlet(np.ones(m))
    keep = rng.random(m) >= sparsity
    if not keep.any():
        keep[int(rng.integers(0, m))] = True
    weights = np.where(keep, weights, 0.0)
    if weights.sum() <= 0.0:
        weights = keep.astype(float)
    weights /= weights.sum()
    spend = {x: float(pool * w) for x, w in zip(instance.projects, weights)}
    return Distribution(total=pool, spend=spend)


def planted_core_instance(
    rng: np.random.Generator,
    max_extra_agents: int = 2,
) -> tuple[Instance, tuple[str, ...]]:
    """An instance with disjoint single-minded blocks, plus the first block.

    Each of 2..3 blocks owns one or two dedicated projects, and every agent
    in a block values exactly those (approval style). Up to
    ``max_extra_agents`` generalists value a random selection across all
    projects. Returns (instance, names of the first block's members) — the
    natural group for a coverage check, since its claim is tight.
    """
    n_blocks = int(rng.integers(2, 4))
    projects: list[str] = []
    block_projects: list[tuple[str, ...]] = []
    for _ in range(n_blocks):
        owned = _project_names(int(rng.integers(1, 3)), offset=len(projects))
        projects.extend(owned)
        block_projects.append(owned)

    agents = []
    first_block: list[str] = []
    for b, owned in enumerate(block_projects):
        for _ in range(int(rng.integers(1, 4))):
            name = f"a{len(agents) + 1}"
            agents.append(
                Agent(
                    name=name,
                    budget=1.0,
                    contribution=float(rng.uniform(0.1, 1.0)),
                    utilities={x: 1.0 if x in owned else 0.0 for x in projects},
                )
            )
            if b == 0:
                first_block.append(name)

    for _ in range(int(rng.integers(0, max_extra_agents + 1))):
        row = _utility_row(rng, len(projects), bool(rng.random() < 0.5))
        agents.append(
            Agent(
                name=f"a{len(agents) + 1}",
                budget=1.0,
                contribution=float(rng.uniform(0.1, 1.0)),
                utilities={x: float(v) for x, v in zip(projects, row)},
            )
        )

    instance = validate_and_normalize(
        Instance(projects=tuple(projects), agents=tuple(agents))
    )
    return instance, tuple(first_block)
