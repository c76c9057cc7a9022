"""Numerical axiom checks: efficiency, contribution incentives, core shares.

Each check returns an AxiomReport. "holds" always means holds *on the tested
points* at the stated tolerance — incentive properties are quantified over a
continuum, so the harness samples an evenly spaced contribution grid; a
violated report carries a witness precise enough to re-evaluate the failed
inequality independently.

Efficiency is decided by linear programming: a distribution is dominated iff
some reallocation of the same pool weakly improves every contributing agent
with positive total gain. Small LPs (the usual case) run on an exact
rational simplex so the verdict does not hinge on float pivoting; larger
ones fall back to scipy's HiGHS.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from . import _simplex
from .model import (
    Distribution,
    Instance,
    distribution_tolerance,
    pool,
    utility_of,
)
from .mechanisms import SolverFailure, run_mechanism, with_contribution
from .solver import SolverConfig, solve_nash, solve_profiles_batch

__all__ = [
    "AxiomReport",
    "LpFailure",
    "GroupNotEligible",
    "check_efficiency",
    "check_cic",
    "check_strong_cic",
    "check_conjectured_cic",
    "check_core_share",
    "CicProfile",
    "cic_profile",
]

EXACT_LP_SIZE = 30          # n + m at or below this runs the rational simplex
RATIONALIZE_DENOM = 10**9


class LpFailure(RuntimeError):
    """The efficiency LP could not be solved (infeasible/unbounded/solver error)."""


class GroupNotEligible(ValueError):
    """Core-share groups need at least one member and all-positive contributions."""


@dataclass(frozen=True)
class AxiomReport:
    axiom: str
    verdict: str                      # "holds" or "violated"
    witness: Optional[dict]
    tested_points: int
    tolerance: float

    @property
    def holds(self) -> bool:
        return self.verdict == "holds"

    def to_dict(self) -> dict:
        return {
            "axiom": self.axiom,
            "verdict": self.verdict,
            "witness": self.witness,
            "tested_points": self.tested_points,
            "tolerance": self.tolerance,
        }


def _holds(axiom: str, points: int, tol: float) -> AxiomReport:
    return AxiomReport(axiom, "holds", None, points, tol)


def _violated(axiom: str, witness: dict, points: int, tol: float) -> AxiomReport:
    return AxiomReport(axiom, "violated", witness, points, tol)


# ---------------------------------------------------------------------------
# Efficiency


def check_efficiency(
    instance: Instance,
    delta: Distribution,
    tol: Optional[float] = None,
) -> AxiomReport:
    """Is delta undominated? Solves: maximize the total utility gain of a
    reallocation delta' of the same pool subject to no contributing agent
    losing. Efficient iff the optimal gain is at most tol (default 1e-7 * pool).
    """
    total = pool(instance)
    if tol is None:
        tol = 1e-7 * total
    contributors = instance.contributing_indices()
    if not contributors:
        return _holds("efficiency", 1, tol)

    projects = instance.projects
    U = [[instance.agents[i].utilities[x] for x in projects] for i in contributors]
    d = [delta[x] for x in projects]

    if instance.n + instance.m <= EXACT_LP_SIZE:
        gain, spend = _efficiency_exact(U, d)
    else:
        gain, spend = _efficiency_float(U, d, total)

    if gain <= tol:
        return _holds("efficiency", 1, tol)
    dominating = Distribution(
        total=float(sum(spend)), spend={x: float(v) for x, v in zip(projects, spend)}
    )
    gains = {}
    for row, i in enumerate(contributors):
        before = sum(U[row][j] * d[j] for j in range(len(projects)))
        after = utility_of(instance, i, dominating)
        gains[instance.agents[i].name] = after - before
    return _violated(
        "efficiency",
        {
            "dominating": {"total": dominating.total, "spend": dict(dominating.spend)},
            "gains": gains,
            "total_gain": float(gain),
        },
        1,
        tol,
    )


def _efficiency_exact(U, d):
    """Exact-rational LP. Inputs are snapped to nearby small rationals and the
    utility floors are computed from the snapped values, so the incumbent
    distribution is feasible by construction."""
    k, m = len(U), len(d)
    Uq = [[Fraction(v).limit_denominator(RATIONALIZE_DENOM) for v in row] for row in U]
    dq = [Fraction(v).limit_denominator(RATIONALIZE_DENOM) for v in d]
    floors = [sum(Uq[i][j] * dq[j] for j in range(m)) for i in range(k)]
    c = [sum(Uq[i][j] for i in range(k)) for j in range(m)]
    ones = [Fraction(1)] * m
    try:
        value, x = _simplex.maximize(c, [ones], [sum(dq, Fraction(0))], Uq, floors)
    except (_simplex.LpInfeasible, _simplex.LpUnbounded) as exc:
        raise LpFailure(f"efficiency LP failed: {exc}") from exc
    gain = value - sum(floors, Fraction(0))
    return float(gain), [float(v) for v in x]


def _efficiency_float(U, d, total):
    from scipy.optimize import linprog

    Ua = np.asarray(U, dtype=float)
    da = np.asarray(d, dtype=float)
    floors = Ua @ da
    c = -Ua.sum(axis=0)
    res = linprog(
        c,
        A_ub=-Ua,
        b_ub=-floors,
        A_eq=np.ones((1, len(d))),
        b_eq=[total],
        bounds=(0, None),
        method="highs",
    )
    if not res.success:
        raise LpFailure(f"efficiency LP failed: {res.message}")
    gain = float(-res.fun - floors.sum())
    return gain, [float(v) for v in res.x]


# ---------------------------------------------------------------------------
# Contribution incentives


@dataclass(frozen=True)
class CicProfile:
    """Mechanism outcomes for one agent across a contribution grid.

    utilities[t] is the agent's utility when she contributes grid[t] and
    everyone else stays put. For the nash mechanism the grid is solved as one
    batch and the two per-step dynamic margins are recorded (+inf otherwise);
    nonnegative margins certify monotone objective values and the step-gain
    bound across every solve in the batch.
    """

    grid: tuple[float, ...]
    utilities: tuple[float, ...]
    min_monotone_margin: float
    min_pinsker_margin: float


def cic_profile(
    mechanism: str,
    instance: Instance,
    agent_index: int,
    grid_size: int = 21,
    solver_epsilon: float = 1e-9,
    max_iters: int = 1_000_000,
) -> CicProfile:
    """Evaluate u_i(f(C_{-i}, c)) on an evenly spaced grid over [0, C_i]."""
    agent = instance.agents[agent_index]
    if agent.contribution == 0.0:
        grid = [0.0]
    else:
        grid = list(np.linspace(0.0, agent.contribution, grid_size))
        grid[-1] = agent.contribution
    if mechanism != "nash":
        utilities = []
        for c in grid:
            dist = run_mechanism(mechanism, with_contribution(instance, agent_index, c))
            utilities.append(utility_of(instance, agent_index, dist))
        return CicProfile(tuple(grid), tuple(utilities), math.inf, math.inf)

    projects = instance.projects
    U = np.array(
        [[a.utilities[x] for x in projects] for a in instance.agents], dtype=float
    )
    base = np.array([a.contribution for a in instance.agents], dtype=float)
    C_rows = np.tile(base, (len(grid), 1))
    C_rows[:, agent_index] = grid
    pools = C_rows.sum(axis=1)
    live = pools > 0.0

    utilities = np.zeros(len(grid))
    mono, pinsker = math.inf, math.inf
    if live.any():
        batch = solve_profiles_batch(
            U, C_rows[live], epsilon=solver_epsilon, max_iters=max_iters
        )
        if not batch.converged.all():
            worst = float(batch.gap_bound.max())
            raise SolverFailure(
                f"a grid solve stalled at gap {worst:.3e} > {solver_epsilon:.1e}"
            )
        utilities[live] = batch.deltas @ U[agent_index]
        mono = batch.min_monotone_margin
        pinsker = batch.min_pinsker_margin
    return CicProfile(tuple(grid), tuple(float(u) for u in utilities), mono, pinsker)


def check_cic(
    mechanism: str,
    instance: Instance,
    agent_index: int,
    grid_size: int = 21,
    tol: float = 1e-7,
    solver_epsilon: float = 1e-9,
) -> AxiomReport:
    """Does contributing the full C_i beat every smaller contribution?

    Evaluates g(c) = u_i(f(C_{-i}, c)) - c on the grid; holds iff
    g(C_i) >= g(c) - tol at every point.
    """
    profile = cic_profile(mechanism, instance, agent_index, grid_size, solver_epsilon)
    agent = instance.agents[agent_index]
    g = [u - c for u, c in zip(profile.utilities, profile.grid)]
    g_full = g[-1]
    worst = int(np.argmax(g))
    points = len(profile.grid)
    if g_full >= g[worst] - tol:
        return _holds("cic", points, tol)
    return _violated(
        "cic",
        {
            "mechanism": mechanism,
            "agent": agent.name,
            "agent_index": agent_index,
            "contribution": agent.contribution,
            "deviation": profile.grid[worst],
            "net_at_deviation": g[worst],
            "net_at_contribution": g_full,
            "gap": g[worst] - g_full,
            "utility_at_deviation": profile.utilities[worst],
            "utility_at_contribution": profile.utilities[-1],
        },
        points,
        tol,
    )


def check_strong_cic(
    mechanism: str,
    instance: Instance,
    agent_index: int,
    tol: float = 1e-7,
    full_grid: bool = False,
    grid_size: int = 21,
    solver_epsilon: float = 1e-9,
) -> AxiomReport:
    """Does the full contribution buy at least C_i times the agent's top
    utility over contributing less?

    Tests u_i(f(C)) >= u_i(f(C_{-i}, c')) + (C_i - c') * max_x u_i(x) at
    c' = 0 (the binding comparison), or across the whole grid with
    ``full_grid``.
    """
    agent = instance.agents[agent_index]
    if agent.contribution == 0.0:
        return _holds("strong-cic", 1, tol)
    u_max = agent.max_utility()
    profile = cic_profile(mechanism, instance, agent_index, grid_size, solver_epsilon)
    u_full = profile.utilities[-1]
    indices = range(len(profile.grid) - 1) if full_grid else [0]
    worst_short, worst_at = -math.inf, 0
    for t in indices:
        required = (agent.contribution - profile.grid[t]) * u_max
        short = (profile.utilities[t] + required) - u_full
        if short > worst_short:
            worst_short, worst_at = short, t
    points = len(list(indices))
    if worst_short <= tol:
        return _holds("strong-cic", points, tol)
    c_prime = profile.grid[worst_at]
    return _violated(
        "strong-cic",
        {
            "mechanism": mechanism,
            "agent": agent.name,
            "agent_index": agent_index,
            "baseline_contribution": c_prime,
            "utility_at_baseline": profile.utilities[worst_at],
            "utility_at_full": u_full,
            "required_gain": (agent.contribution - c_prime) * u_max,
            "actual_gain": u_full - profile.utilities[worst_at],
            "shortfall": worst_short,
        },
        points,
        tol,
    )


def check_conjectured_cic(
    instance: Instance,
    agent_index: int,
    epsilon_list: Sequence[float] = (0.1, 0.25, 0.5),
    tol: float = 1e-7,
    solver_epsilon: float = 1e-10,
) -> AxiomReport:
    """Experimental: does an extra epsilon of contribution buy the agent at
    least the utility of the epsilon-scaled copy of her proportional share?

    For each epsilon, compares u_i(nash(C_{-i}, C_i + epsilon)) against
    u_i(delta) + u_i(delta_eps) where delta_eps spends epsilon in proportion
    to delta(x) u_i(x). Failures are findings, not errors: the verdict simply
    reports them, and the witness always carries the per-epsilon numbers.
    """
    agent = instance.agents[agent_index]
    if agent.contribution <= 0.0:
        raise ValueError("conjectured-cic check needs an agent with C_i > 0")
    for eps in epsilon_list:
        if eps < 0.0 or agent.contribution + eps > agent.budget:
            raise ValueError(
                f"epsilon {eps} pushes the contribution past the budget {agent.budget}"
            )

    config = SolverConfig(epsilon=solver_epsilon)
    delta = solve_nash(instance, config).distribution
    u_base = utility_of(instance, agent_index, delta)
    # u_i of the epsilon-proportional bundle, per unit of epsilon
    unit = (
        sum(delta[x] * agent.utilities[x] ** 2 for x in instance.projects) / u_base
    )

    results = []
    violated = False
    for eps in epsilon_list:
        bumped = with_contribution(
            instance, agent_index, agent.contribution + eps
        )
        lhs = utility_of(
            instance, agent_index, solve_nash(bumped, config).distribution
        )
        rhs = u_base + eps * unit
        ok = lhs >= rhs - tol
        violated = violated or not ok
        results.append(
            {"epsilon": eps, "lhs": lhs, "rhs": rhs, "margin": lhs - rhs, "ok": ok}
        )
    witness = {
        "agent": agent.name,
        "agent_index": agent_index,
        "results": results,
    }
    verdict = "violated" if violated else "holds"
    return AxiomReport("conjectured-cic", verdict, witness, len(epsilon_list), tol)


# ---------------------------------------------------------------------------
# Core share


def check_core_share(
    instance: Instance,
    group: Iterable[str],
    tol: float = 1e-7,
    solver_epsilon: float = 1e-9,
) -> AxiomReport:
    """Does the Nash outcome spend at least the group's combined contribution
    on the union of the group's acceptable projects?

    ``group`` is a collection of agent names, all of whom must contribute.
    """
    names = list(group)
    if not names:
        raise GroupNotEligible("empty group")
    members = []
    for name in names:
        agent = instance.agent_named(name)
        if agent.contribution <= 0.0:
            raise GroupNotEligible(f"agent {name!r} contributes nothing")
        members.append(agent)

    union: set[str] = set()
    required = 0.0
    for agent in members:
        union |= agent.acceptable()
        required += agent.contribution

    delta = solve_nash(instance, SolverConfig(epsilon=solver_epsilon)).distribution
    covered = sum(delta[x] for x in union)
    slack = tol * pool(instance)
    if covered >= required - slack:
        return _holds("core-share", 1, tol)
    return _violated(
        "core-share",
        {
            "group": names,
            "projects": sorted(union),
            "required": required,
            "covered": covered,
            "shortfall": required - covered,
        },
        1,
        tol,
    )
