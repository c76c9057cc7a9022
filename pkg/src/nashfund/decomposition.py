"""Decomposing a Nash outcome into individual spending plans.

At an optimum, delta splits into per-agent plans

    part_i(x) = C_i * delta(x) * u_i(x) / u_i(delta),

each spending exactly agent i's contribution on projects she values
(`proportional_decomposition`). A *decomposable* distribution admits such a
split with every agent spending only on projects she finds acceptable; this
holds iff every group of agents has enough acceptable spending to cover its
combined contributions:

    for all subsets N' of contributors:
        sum over union of acceptable sets of delta(x) >= sum over N' of C_i.

`check_decomposable` decides this via a bipartite max-flow (source -> agent
at capacity C_i, agent -> acceptable project uncapped, project -> sink at
capacity delta(x)): the split exists iff the max flow reaches the pool, and
a failing min cut yields a violating subset as a witness. The flow runs on
exact rationals, so the only tolerance is the single float comparison at the
end. `brute_force_decomposability_oracle` re-decides the same question by
enumerating all 2^n subsets, as an independent cross-check for small n.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .model import (
    Decomposition,
    Distribution,
    Instance,
    ProjectMismatch,
    distribution_tolerance,
    pool,
    utility_of,
)
from .solver import kkt_check

__all__ = [
    "NotAtOptimum",
    "TooManyAgents",
    "SubsetWitness",
    "DecomposabilityReport",
    "proportional_decomposition",
    "check_decomposable",
    "check_strong_decomposable",
    "brute_force_decomposability_oracle",
]

KKT_TOLERANCE = 1e-6
ORACLE_MAX_AGENTS = 20


class NotAtOptimum(ValueError):
    """The distribution fails the first-order conditions, so the proportional
    split does not recompose it."""


class TooManyAgents(ValueError):
    """The subset-enumeration oracle is limited to 20 contributing agents."""


@dataclass(frozen=True)
class SubsetWitness:
    """A group whose acceptable projects receive less than its contributions."""

    agents: tuple[str, ...]
    projects: tuple[str, ...]   # union of the group's project sets
    required: float             # sum of the group's contributions
    covered: float              # spending on the union
    deficit: float              # required - covered


@dataclass(frozen=True)
class DecomposabilityReport:
    decomposable: bool
    flow_value: float
    pool: float
    tolerance: float
    witness: Optional[SubsetWitness] = None


def proportional_decomposition(
    instance: Instance,
    delta: Distribution,
    kkt_tolerance: float = KKT_TOLERANCE,
) -> Decomposition:
    """Split an optimal distribution into per-agent spending plans.

    Requires delta to (approximately) satisfy the first-order conditions:
    raises NotAtOptimum if the KKT residual exceeds ``kkt_tolerance`` or if
    the constructed parts fail to recompose delta within the distribution
    tolerance. Non-contributing agents get empty plans.
    """
    report = kkt_check(instance, delta)
    if report.max_residual > kkt_tolerance:
        raise NotAtOptimum(
            f"KKT residual {report.max_residual:.3e} exceeds {kkt_tolerance:.1e}; "
            "proportional shares only decompose an optimum"
        )
    parts: dict[str, Distribution] = {}
    for i, agent in enumerate(instance.agents):
        if agent.contribution == 0.0:
            parts[agent.name] = Distribution.zero(instance.projects)
            continue
        ui = utility_of(instance, i, delta)
        spend = {
            x: agent.contribution * delta[x] * agent.utilities[x] / ui
            for x in instance.projects
        }
        try:
            parts[agent.name] = Distribution(total=agent.contribution, spend=spend)
        except ValueError as exc:
            raise NotAtOptimum(
                f"per-agent plan for {agent.name!r} does not sum to her contribution: {exc}"
            ) from exc

    recomposed = Decomposition(parts=parts).summed_spend(instance.projects)
    tol = distribution_tolerance(pool(instance))
    worst = max(abs(recomposed[x] - delta[x]) for x in instance.projects)
    if worst > tol:
        raise NotAtOptimum(
            f"recomposed spending misses delta by {worst:.3e} (tolerance {tol:.3e}); "
            "solve to a tighter gap before decomposing"
        )
    return Decomposition(parts=parts)


# ---------------------------------------------------------------------------
# Decomposability via max-flow


def check_decomposable(
    instance: Instance,
    delta: Distribution,
    tolerance: Optional[float] = None,
) -> DecomposabilityReport:
    """Can delta be split so each agent spends only on acceptable projects?

    Acceptable = positive utility. Verdict plus, when it fails, a violating
    group found from the min cut.
    """
    sets = [a.acceptable() for a in instance.agents]
    return _check_cover(instance, delta, sets, tolerance)


def check_strong_decomposable(
    instance: Instance,
    delta: Distribution,
    tolerance: Optional[float] = None,
) -> DecomposabilityReport:
    """Like `check_decomposable` but each agent may only fund favorites
    (projects within relative tolerance 1e-12 of her maximum utility)."""
    sets = [a.favorites() for a in instance.agents]
    return _check_cover(instance, delta, sets, tolerance)


def _spend_vector(instance: Instance, delta: Distribution) -> list[float]:
    extra = set(delta.spend.keys()) - set(instance.projects)
    if extra:
        raise ProjectMismatch(f"distribution spends on unknown projects {sorted(extra)}")
    return [delta[x] for x in instance.projects]


def _check_cover(instance, delta, sets, tolerance) -> DecomposabilityReport:
    total = pool(instance)
    tol = distribution_tolerance(total) if tolerance is None else tolerance
    spend = _spend_vector(instance, delta)
    contributors = instance.contributing_indices()
    if not contributors:
        return DecomposabilityReport(True, 0.0, 0.0, tol, None)

    k, m = len(contributors), instance.m
    # Node ids: 0 source, 1..k agents, k+1..k+m projects, k+m+1 sink.
    source, sink = 0, k + m + 1
    cap = [[Fraction(0)] * (k + m + 2) for _ in range(k + m + 2)]
    big = Fraction(0)
    for row, i in enumerate(contributors):
        c = Fraction(instance.agents[i].contribution)
        cap[source][1 + row] = c
        big += c
    for col, x in enumerate(instance.projects):
        d = Fraction(spend[col])
        cap[k + 1 + col][sink] = d
        big += d
    big += 1  # exceeds any feasible flow, so these edges never bind
    for row, i in enumerate(contributors):
        for col, x in enumerate(instance.projects):
            if x in sets[i]:
                cap[1 + row][k + 1 + col] = big

    flow_value, reachable = _max_flow(cap, source, sink)
    required_total = Fraction(0)
    for i in contributors:
        required_total += Fraction(instance.agents[i].contribution)
    ok = float(required_total - flow_value) <= tol
    if ok:
        return DecomposabilityReport(True, float(flow_value), total, tol, None)

    # Source side of the min cut: those agents' acceptable projects are all
    # on the source side too, so the cut weighs exactly the group's deficit.
    group = [contributors[row] for row in range(k) if reachable[1 + row]]
    witness = _witness_for(instance, spend, sets, group)
    return DecomposabilityReport(False, float(flow_value), total, tol, witness)


def _witness_for(instance, spend, sets, group) -> SubsetWitness:
    union: set[str] = set()
    required = Fraction(0)
    for i in group:
        union |= sets[i]
        required += Fraction(instance.agents[i].contribution)
    covered = Fraction(0)
    for col, x in enumerate(instance.projects):
        if x in union:
            covered += Fraction(spend[col])
    return SubsetWitness(
        agents=tuple(instance.agents[i].name for i in group),
        projects=tuple(x for x in instance.projects if x in union),
        required=float(required),
        covered=float(covered),
        deficit=float(required - covered),
    )


def _max_flow(cap: list[list[Fraction]], source: int, sink: int):
    """Edmonds-Karp on a dense capacity matrix of exact rationals.

    Returns the max flow value and the set of nodes reachable from the
    source in the final residual graph (the source side of a min cut).
    """
    n = len(cap)
    flow = [[Fraction(0)] * n for _ in range(n)]
    adj = [[v for v in range(n) if cap[u][v] > 0 or cap[v][u] > 0] for u in range(n)]
    value = Fraction(0)
    while True:
        parent = [-1] * n
        parent[source] = source
        queue = deque([source])
        while queue:
            u = queue.popleft()
            if u == sink:
                break
            for v in adj[u]:
                if parent[v] == -1 and cap[u][v] - flow[u][v] > 0:
                    parent[v] = u
                    queue.append(v)
        if parent[sink] == -1:
            reachable = [p != -1 for p in parent]
            return value, reachable
        bottleneck = None
        v = sink
        while v != source:
            u = parent[v]
            room = cap[u][v] - flow[u][v]
            bottleneck = room if bottleneck is None else min(bottleneck, room)
            v = u
        v = sink
        while v != source:
            u = parent[v]
            flow[u][v] += bottleneck
            flow[v][u] -= bottleneck
            v = u
        value += bottleneck


# ---------------------------------------------------------------------------
# Independent subset-enumeration oracle


def brute_force_decomposability_oracle(
    instance: Instance,
    delta: Distribution,
    strong: bool = False,
    tolerance: Optional[float] = None,
) -> DecomposabilityReport:
    """Decide decomposability by checking every subset of contributors.

    Exists to cross-check the flow computation on small instances; raises
    TooManyAgents beyond 20 contributors. Values are snapped to nearby small
    rationals (denominator <= 1e9) so subset sums are exact; the verdict
    compares the worst deficit against the same tolerance the flow check
    uses. The reported flow_value is the pool minus the worst deficit, which
    is what the max flow attains.
    """
    total = pool(instance)
    tol = distribution_tolerance(total) if tolerance is None else tolerance
    spend = _spend_vector(instance, delta)
    contributors = instance.contributing_indices()
    if len(contributors) > ORACLE_MAX_AGENTS:
        raise TooManyAgents(
            f"{len(contributors)} contributing agents; oracle enumerates 2^n subsets "
            f"and is capped at {ORACLE_MAX_AGENTS}"
        )
    if not contributors:
        return DecomposabilityReport(True, 0.0, 0.0, tol, None)

    agents = instance.agents
    sets = [
        (agents[i].favorites() if strong else agents[i].acceptable())
        for i in range(len(agents))
    ]
    spend_frac = [Fraction(x).limit_denominator(10**9) for x in spend]
    contrib_frac = {
        i: Fraction(agents[i].contribution).limit_denominator(10**9)
        for i in contributors
    }

    worst_deficit = Fraction(0)
    worst_group: tuple[int, ...] = ()
    for r in range(1, len(contributors) + 1):
        for combo in itertools.combinations(contributors, r):
            union: set[str] = set()
            required = Fraction(0)
            for i in combo:
                union |= sets[i]
                required += contrib_frac[i]
            covered = Fraction(0)
            for col, x in enumerate(instance.projects):
                if x in union:
                    covered += spend_frac[col]
            deficit = required - covered
            if deficit > worst_deficit:
                worst_deficit = deficit
                worst_group = combo

    required_total = sum((contrib_frac[i] for i in contributors), Fraction(0))
    flow_value = float(required_total - worst_deficit)
    if float(worst_deficit) <= tol:
        return DecomposabilityReport(True, flow_value, total, tol, None)
    witness = _witness_for(instance, spend, sets, list(worst_group))
    return DecomposabilityReport(False, flow_value, total, tol, witness)
