"""Shared test helpers plus the acceptance-summary terminal hook."""

import numpy as np

from nashfund import Agent, Instance, validate_and_normalize


def instance_from_arrays(U, C, budgets=None, names=None, projects=None) -> Instance:
    """Build a validated instance from a utility matrix and contribution vector."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    n, m = U.shape
    projects = tuple(projects) if projects else tuple(f"p{j+1}" for j in range(m))
    names = tuple(names) if names else tuple(f"a{i+1}" for i in range(n))
    budgets = list(budgets) if budgets is not None else [max(1.0, float(c)) for c in C]
    agents = tuple(
        Agent(
            name=names[i],
            budget=float(budgets[i]),
            contribution=float(C[i]),
            utilities={x: float(U[i, j]) for j, x in enumerate(projects)},
        )
        for i in range(n)
    )
    return validate_and_normalize(Instance(projects=projects, agents=agents))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    # One pass/fail line per acceptance criterion, printed even when pytest
    # captures stdout. test_acceptance records into its module-level list; a
    # fresh import here would see an empty copy, so take the loaded module.
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number, ok, detail in sorted(mod.RESULTS):
        mark = "PASS" if ok else "FAIL"
        tr.write_line(f"[{mark}] criterion {number}: {detail}")
