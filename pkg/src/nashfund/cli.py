"""Command-line front end.

Subcommands: solve, decompose, check, compare, examples. Machine output is
JSON (distributions, decompositions, axiom reports) written to --output or,
for solve/decompose, stdout; progress and summaries go to stderr; check,
compare and examples print human-readable text on stdout. Floats are printed
with 9 significant digits in human output, and JSON carries full-precision
round-trip values.

Exit codes: 0 success / axiom holds, 1 axiom violated (or a failing
expectation), 2 input error, 3 solver non-convergence (solve still writes
the best iterate found).
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

from .axioms import (
    GroupNotEligible,
    LpFailure,
    check_cic,
    check_conjectured_cic,
    check_core_share,
    check_efficiency,
    check_strong_cic,
)
from .decomposition import (
    NotAtOptimum,
    TooManyAgents,
    check_decomposable,
    check_strong_decomposable,
    proportional_decomposition,
)
from .fixtures import FIXTURES, run_expectations
from .mechanisms import (
    MECHANISM_IDS,
    SolverFailure,
    UnsupportedInstance,
    run_mechanism,
)
from .model import (
    Distribution,
    Instance,
    ModelError,
    decomposition_to_dict,
    distribution_to_dict,
    load_distribution,
    load_instance,
    pool,
    utility_of,
)
from .solver import (
    MaxItersExceeded,
    SolverConfig,
    SolverError,
    solve_nash,
    trace_to_csv,
)

EXIT_OK = 0
EXIT_VIOLATED = 1
EXIT_INPUT = 2
EXIT_NO_CONVERGENCE = 3

AXIOM_CHOICES = ("efficiency", "cic", "conjectured-cic", "core", "decomposability")


def _fmt(v: float) -> str:
    return f"{v:.9g}"


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _write_json(obj, path: Optional[str]) -> None:
    text = json.dumps(obj, indent=2)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _solver_config(args, record_trace: bool = False) -> SolverConfig:
    return SolverConfig(
        epsilon=args.eps, max_iters=args.max_iters, record_trace=record_trace
    )


# ---------------------------------------------------------------------------
# solve


def cmd_solve(args) -> int:
    instance = load_instance(args.input)
    if pool(instance) == 0.0:
        _say("warning: no agent contributes anything; the distribution is empty")
    config = _solver_config(args, record_trace=args.trace is not None)
    code = EXIT_OK
    try:
        result = solve_nash(instance, config)
    except MaxItersExceeded as exc:
        _say(f"warning: {exc}; writing the best iterate found")
        result = exc.result
        code = EXIT_NO_CONVERGENCE
    _write_json(distribution_to_dict(result.distribution), args.output)
    if args.trace is not None and result.trace is not None:
        with open(args.trace, "w") as fh:
            fh.write(trace_to_csv(result.trace))
    _say(
        f"iterations={result.iterations} gap_bound={_fmt(result.gap_bound)} "
        f"kkt_max_residual={_fmt(result.kkt.max_residual)}"
    )
    return code


# ---------------------------------------------------------------------------
# decompose


def cmd_decompose(args) -> int:
    instance = load_instance(args.input)
    try:
        result = solve_nash(instance, _solver_config(args))
    except MaxItersExceeded as exc:
        _say(f"error: {exc}")
        return EXIT_NO_CONVERGENCE
    try:
        decomp = proportional_decomposition(instance, result.distribution)
    except NotAtOptimum as exc:
        _say(f"error: {exc}; re-run with a smaller --eps")
        return EXIT_NO_CONVERGENCE
    payload = {
        "distribution": distribution_to_dict(result.distribution),
        **decomposition_to_dict(decomp),
    }
    _write_json(payload, args.output)
    for name, part in decomp.parts.items():
        spends = " ".join(f"{x}={_fmt(part[x])}" for x in instance.projects if part[x] > 0.0)
        _say(f"{name}: total={_fmt(part.total)} {spends}".rstrip())
    return EXIT_OK


# ---------------------------------------------------------------------------
# check


def _report_line(report, label: str) -> str:
    tail = (
        f"({report.tested_points} points, tol {_fmt(report.tolerance)})"
    )
    return f"{label}: {report.verdict} {tail}"


def _distribution_for_check(args, instance: Instance) -> Distribution:
    if args.distribution:
        return load_distribution(args.distribution)
    return run_mechanism(args.mechanism, instance, _solver_config(args))


def _agent_indices(args, instance: Instance) -> list[int]:
    if args.agent is None:
        return list(range(instance.n))
    instance.agent_named(args.agent)  # raises KeyError if unknown
    return [i for i, a in enumerate(instance.agents) if a.name == args.agent]


def cmd_check(args) -> int:
    instance = load_instance(args.input)
    reports: list[tuple[str, object]] = []

    if args.axiom == "efficiency":
        delta = _distribution_for_check(args, instance)
        reports.append(("efficiency", check_efficiency(instance, delta)))
    elif args.axiom == "cic":
        for i in _agent_indices(args, instance):
            name = instance.agents[i].name
            if args.strong:
                rep = check_strong_cic(
                    args.mechanism, instance, i,
                    grid_size=args.grid, solver_epsilon=args.eps,
                )
            else:
                rep = check_cic(
                    args.mechanism, instance, i,
                    grid_size=args.grid, solver_epsilon=args.eps,
                )
            reports.append((f"{args.axiom} {args.mechanism} agent={name}", rep))
    elif args.axiom == "conjectured-cic":
        epsilons = [float(tok) for tok in args.epsilons.split(",") if tok]
        for i in _agent_indices(args, instance):
            if instance.agents[i].contribution == 0.0:
                continue
            name = instance.agents[i].name
            rep = check_conjectured_cic(
                instance, i, epsilon_list=epsilons, solver_epsilon=args.eps
            )
            reports.append((f"conjectured-cic agent={name}", rep))
    elif args.axiom == "core":
        if not args.group:
            _say("error: check core needs --group with a comma-separated list of agent names")
            return EXIT_INPUT
        group = [tok for tok in args.group.split(",") if tok]
        rep = check_core_share(instance, group, solver_epsilon=args.eps)
        reports.append((f"core group={{{','.join(group)}}}", rep))
    else:  # decomposability
        delta = _distribution_for_check(args, instance)
        checker = check_strong_decomposable if args.strong else check_decomposable
        dec = checker(instance, delta)
        verdict = "holds" if dec.decomposable else "violated"
        witness = None
        if dec.witness is not None:
            witness = {
                "agents": list(dec.witness.agents),
                "projects": list(dec.witness.projects),
                "required": dec.witness.required,
                "covered": dec.witness.covered,
                "deficit": dec.witness.deficit,
            }
        payload = {
            "axiom": "strong-decomposability" if args.strong else "decomposability",
            "verdict": verdict,
            "witness": witness,
            "flow_value": dec.flow_value,
            "pool": dec.pool,
            "tolerance": dec.tolerance,
        }
        print(f"{payload['axiom']}: {verdict} (flow {_fmt(dec.flow_value)} of pool {_fmt(dec.pool)})")
        if witness:
            print(
                f"  witness agents {witness['agents']} get {_fmt(witness['covered'])} "
                f"on {witness['projects']} but contributed {_fmt(witness['required'])}"
            )
        if args.output:
            _write_json(payload, args.output)
        return EXIT_OK if dec.decomposable else EXIT_VIOLATED

    all_hold = True
    for label, rep in reports:
        print(_report_line(rep, label))
        if rep.witness is not None and not rep.holds:
            print(f"  witness: {json.dumps(rep.witness, default=str)}")
        all_hold &= rep.holds
    if args.output:
        dicts = [rep.to_dict() for _, rep in reports]
        _write_json(dicts[0] if len(dicts) == 1 else dicts, args.output)
    return EXIT_OK if all_hold else EXIT_VIOLATED


# ---------------------------------------------------------------------------
# compare


def cmd_compare(args) -> int:
    instance = load_instance(args.input)
    wanted = [tok for tok in args.mechanisms.split(",") if tok]
    unknown = [mech for mech in wanted if mech not in MECHANISM_IDS]
    if unknown:
        _say(f"error: unknown mechanism(s) {', '.join(unknown)}; valid: {', '.join(MECHANISM_IDS)}")
        return EXIT_INPUT

    rows = []
    for mech in wanted:
        try:
            delta = run_mechanism(mech, instance, _solver_config(args))
        except UnsupportedInstance as exc:
            rows.append({"mechanism": mech, "supported": False, "reason": str(exc)})
            continue
        rows.append(
            {
                "mechanism": mech,
                "supported": True,
                "spend": {x: delta[x] for x in instance.projects},
                "utilities": {
                    a.name: utility_of(instance, i, delta)
                    for i, a in enumerate(instance.agents)
                },
                "decomposable": check_decomposable(instance, delta).decomposable,
                "efficient": check_efficiency(instance, delta).holds,
            }
        )

    for row in rows:
        if not row["supported"]:
            print(f"{row['mechanism']:<24} (unsupported: {row['reason']})")
            continue
        spend = " ".join(f"{x}={_fmt(v)}" for x, v in row["spend"].items())
        utils = " ".join(f"{n}={_fmt(v)}" for n, v in row["utilities"].items())
        flags = (
            f"decomposable={'yes' if row['decomposable'] else 'no'} "
            f"efficient={'yes' if row['efficient'] else 'no'}"
        )
        print(f"{row['mechanism']:<24} {spend} | {utils} | {flags}")
    if args.output:
        _write_json({"projects": list(instance.projects), "rows": rows}, args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------
# examples


def cmd_examples(args) -> int:
    if args.list:
        for name in sorted(FIXTURES):
            print(name)
        return EXIT_OK
    names = args.names or None
    try:
        results = run_expectations(names, seed=args.seed)
    except KeyError as exc:
        _say(f"error: {exc.args[0]}")
        return EXIT_INPUT
    failures = 0
    for fixture_name, description, ok, detail in results:
        tag = "PASS" if ok else "FAIL"
        print(f"[{tag}] {fixture_name}: {description} — {detail}")
        failures += 0 if ok else 1
    print(f"{len(results) - failures}/{len(results)} expectations passed")
    return EXIT_OK if failures == 0 else EXIT_VIOLATED


# ---------------------------------------------------------------------------
# parser / dispatch


def _add_common(sub, with_input=True) -> None:
    if with_input:
        sub.add_argument("--input", required=True, help="instance JSON file")
    sub.add_argument("--output", help="write JSON here instead of stdout")
    sub.add_argument("--eps", type=float, default=1e-9, help="solver gap target")
    sub.add_argument(
        "--max-iters", type=int, default=1_000_000, help="solver iteration budget"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nashfund",
        description="Nash product funding of public goods from voluntary contributions.",
    )
    subs = parser.add_subparsers(dest="subcommand", required=True)

    p = subs.add_parser("solve", help="solve an instance and write the distribution")
    _add_common(p)
    p.add_argument("--trace", help="write the per-iteration trace CSV here")
    p.set_defaults(func=cmd_solve)

    p = subs.add_parser("decompose", help="solve and split the outcome per agent")
    _add_common(p)
    p.set_defaults(func=cmd_decompose)

    p = subs.add_parser("check", help="verify an axiom on an instance")
    p.add_argument("axiom", choices=AXIOM_CHOICES)
    p.add_argument(
        "mechanism", nargs="?", default="nash", choices=MECHANISM_IDS,
        help="mechanism under test (default nash)",
    )
    _add_common(p)
    p.add_argument("--agent", help="restrict per-agent checks to this agent")
    p.add_argument("--grid", type=int, default=21, help="contribution grid size")
    p.add_argument("--strong", action="store_true", help="strong variant (cic/decomposability)")
    p.add_argument("--distribution", help="check this distribution JSON instead of solving")
    p.add_argument("--group", help="comma-separated agent names (core)")
    p.add_argument(
        "--epsilons", default="0.1,0.25,0.5",
        help="comma-separated increments (conjectured-cic)",
    )
    p.add_argument("--seed", type=int, default=0, help="accepted for interface parity")
    p.set_defaults(func=cmd_check)

    p = subs.add_parser("compare", help="run several mechanisms side by side")
    _add_common(p)
    p.add_argument(
        "--mechanisms", default=",".join(MECHANISM_IDS),
        help="comma-separated mechanism ids (default: all)",
    )
    p.set_defaults(func=cmd_compare)

    p = subs.add_parser("examples", help="run the built-in fixtures and expectations")
    p.add_argument("names", nargs="*", help="fixture names (default: all)")
    p.add_argument("--list", action="store_true", help="list fixture names and exit")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_examples)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ModelError, OSError, json.JSONDecodeError, KeyError) as exc:
        _say(f"error: {exc}")
        return EXIT_INPUT
    except (UnsupportedInstance, GroupNotEligible, TooManyAgents, LpFailure) as exc:
        _say(f"error: {exc}")
        return EXIT_INPUT
    except SolverFailure as exc:
        _say(f"error: {exc}")
        return EXIT_NO_CONVERGENCE
    except SolverError as exc:
        _say(f"error: {exc}")
        return EXIT_NO_CONVERGENCE
    except ValueError as exc:
        _say(f"error: {exc}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
