"""Command-line driver: ``conset {check,interleave,lockstep,validate-f,replay}``.

Exit codes: 0 pass, 1 property failure, 2 inconclusive or not found, 3 usage error.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from collections import Counter
from pathlib import Path

from conset import __version__
from conset.adversary.interleave import (
    TheoremViolation,
    interleave_single_set,
    random_trace_pair,
    verify_indistinguishable,
)
from conset.adversary.lockstep import (
    certify_double_win,
    partition_signatures,
    random_family,
    scripted_family,
    select_conflict_pair,
)
from conset.executor import (
    CONSENSUS_PROPERTIES,
    DEFAULT_MAX_STEPS,
    TAS_PROPERTIES,
    check_all_interleavings,
    check_random_schedules,
    run,
    solo_execution,
)
from conset.objects import ContractViolation, validate_selector
from conset.report import REPORT_SCHEMA, dumps, overall_status, trace_to_json
from conset.scenario import (
    DEFAULT_SEED,
    ScenarioError,
    build_program,
    items_from_json,
    load,
    selector_from,
    traces_from_json,
    validate,
)

EXIT = {"pass": 0, "fail": 1, "inconclusive": 2}
USAGE = 3

# universe used to vet selectors when a scenario does not give one
DEFAULT_UNIVERSE = [{"payload": f"u{k}", "priority": q} for k, q in enumerate((0, 1, 1, 2, 2, 3))]


class UsageError(Exception):
    pass


def _header(command: str, sc: dict, seed: int, max_steps: int) -> dict:
    return {
        "schema": REPORT_SCHEMA,
        "tool": {"name": "conset", "version": __version__},
        "command": command,
        "scenario": sc,
        "seed": seed,
        "max_steps": max_steps,
    }


def _default_properties(sc: dict, program) -> tuple[str, ...]:
    if "properties" in sc:
        return tuple(sc["properties"])
    if program.kind == "consensus":
        props = CONSENSUS_PROPERTIES
        if sc["protocol"] == "consensus2_two_objects":
            props += ("register_freedom",)
        return props
    if "random_schedules" in sc:
        return TAS_PROPERTIES
    return TAS_PROPERTIES + ("tas_linearization",)


def cmd_check(sc: dict, seed: int, max_steps: int) -> tuple[dict, int]:
    program = build_program(sc)
    props = _default_properties(sc, program)
    report = _header("check", sc, seed, max_steps)
    report["program"] = {
        "name": program.name, "kind": program.kind, "n": program.n,
        "objects": {oid: [it.to_dict() for it in o.contents] for oid, o in program.objects.items()},
        "meta": {k: v for k, v in program.meta.items() if k in ("variant", "depth", "builder")},
    }
    try:
        if "random_schedules" in sc:
            rc = check_random_schedules(program, sc["random_schedules"], seed, props, max_steps=max_steps)
            verdicts = rc.verdicts
            report["mode"] = "random"
        else:
            verdicts = check_all_interleavings(program, props, max_steps=max_steps,
                                               max_states=sc.get("max_states", 5_000_000))
            report["mode"] = "exhaustive"
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report["verdicts"] = [v.to_dict() for v in verdicts]
    statuses = [v.status for v in verdicts]
    if program.isolation_bound is not None:
        solo = max(solo_execution(program, p, max_steps).length for p in range(program.n))
        ok = solo <= program.isolation_bound
        report["isolation"] = {"bound": program.isolation_bound, "max_solo_steps": solo, "within": ok}
        statuses.append("pass" if ok else "fail")
    report["status"] = overall_status(statuses)
    return report, EXIT[report["status"]]


def _vet_selector(sc: dict):
    sel = selector_from(sc)
    verdict = validate_selector(sel, items_from_json(DEFAULT_UNIVERSE), max_len=6)
    if not verdict:
        raise UsageError(f"selector {sel.name} is not a consistent set (witness {verdict.witness}); refused")
    return sel


def cmd_interleave(sc: dict, seed: int, max_steps: int) -> tuple[dict, int]:
    sel = _vet_selector(sc)
    allow = sc.get("allow_reorder", True)
    report = _header("interleave", sc, seed, max_steps)
    if "generator" in sc:
        gen = sc["generator"]
        rng = random.Random(seed)
        coverage, top = Counter(), Counter()
        passed, reordered = 0, 0
        failure = None
        for k in range(gen.get("pairs", 500)):
            e0, e1 = random_trace_pair(sel, rng, gen.get("max_len", 8), gen.get("mute_free"))
            try:
                res = interleave_single_set(e0, e1, allow_reorder=allow)
            except TheoremViolation as exc:
                failure = {"pair": k, "traces": [e0.to_dict(), e1.to_dict()], "diagnostic": str(exc)}
                break
            passed += 1
            coverage += res.coverage()
            top[res.top_case] += 1
            reordered += res.out_of_order > 0
        report["pairs"] = {"passed": passed, "requested": gen.get("pairs", 500),
                           "coverage": dict(sorted(coverage.items())), "top_case": dict(sorted(top.items())),
                           "pairs_with_reordered_steps": reordered}
        if failure:
            report["theorem_violation"] = failure
        report["status"] = "fail" if failure else "pass"
        return report, EXIT[report["status"]]
    if "traces" not in sc and "fixture" not in sc:
        raise UsageError("interleave needs traces, a fixture or a generator")
    e0, e1 = traces_from_json(sc)
    if e0.selector != sel:
        raise UsageError(f"fixture runs on {e0.selector.name}, scenario says {sel.name}")
    report["traces"] = [e0.to_dict(), e1.to_dict()]
    try:
        res = interleave_single_set(e0, e1, allow_reorder=allow)
    except TheoremViolation as exc:
        report["theorem_violation"] = {"diagnostic": str(exc),
                                       "state": json.loads(json.dumps(exc.state, default=repr))}
        report["status"] = "fail"
        return report, 1
    report["schedule"] = [list(r) for r in res.schedule]
    report["cases"] = [ev.to_dict() for ev in res.cases]
    report["out_of_order_steps"] = res.out_of_order
    report["indistinguishable"] = bool(verify_indistinguishable(res.schedule, e0, e1))
    report["status"] = "pass" if report["indistinguishable"] else "fail"
    return report, EXIT[report["status"]]


def _family(sc: dict, seed: int):
    fam, kind = sc["family"], sc["kind"]
    if fam["type"] == "random":
        return random_family(kind, fam.get("size", 10), shared=fam.get("shared", 2),
                             max_ops=fam.get("max_ops", 3), private=fam.get("private", 1), seed=seed)
    return scripted_family(kind, [[tuple(st) for st in script] for script in fam["scripts"]])


def cmd_lockstep(sc: dict, seed: int, max_steps: int) -> tuple[dict, int]:
    program = _family(sc, seed)
    M = sc.get("M", program.isolation_bound)
    report = _header("lockstep", sc, seed, max_steps)
    sigs, bad = partition_signatures(program, M)
    report["M"] = M
    report["signatures"] = [s.to_dict() for s in sigs]
    report["isolation_violations"] = [{"pid": p, "reason": why} for p, why in bad]
    pair = select_conflict_pair(sigs)
    if pair is None:
        report["status"] = "inconclusive"
        report["result"] = "not-found"
        return report, 2
    cert = certify_double_win(program, pair, sc["kind"])
    report["pair"] = pair.to_dict()
    report["schedule"] = list(cert.schedule)
    report["trace"] = trace_to_json(cert.trace)
    report["decisions"] = {str(k): v for k, v in sorted(cert.decisions.items())}
    report["indistinguishable"] = cert.indistinguishable
    report["double_win"] = cert.double_win
    report["result"] = "certificate" if cert.double_win and cert.indistinguishable else "construction-bug"
    report["status"] = "pass" if report["result"] == "certificate" else "fail"
    return report, EXIT[report["status"]]


def cmd_validate_f(sc: dict, seed: int, max_steps: int) -> tuple[dict, int]:
    sel = selector_from(sc)
    universe = items_from_json(sc.get("universe", DEFAULT_UNIVERSE))
    v = validate_selector(sel, universe, max_len=sc.get("max_len", 6))
    report = _header("validate-f", sc, seed, max_steps)
    report["selector"] = sel.name
    report["sequences_checked"] = v.sequences_checked
    if not v.passed:
        report["witness"] = {"pair": [it.to_dict() for it in v.pair],
                             "sequences": [[it.to_dict() for it in seq] for seq in v.witness]}
    report["status"] = "pass" if v.passed else "fail"
    return report, EXIT[report["status"]]


COMMANDS = {"check": cmd_check, "interleave": cmd_interleave, "lockstep": cmd_lockstep,
            "validate-f": cmd_validate_f}


def execute(sc: dict, seed: int | None = None, max_steps: int | None = None) -> tuple[dict, int]:
    """Run a validated scenario; CLI flags override the scenario's own seed and bound."""
    seed = seed if seed is not None else sc.get("seed", DEFAULT_SEED)
    max_steps = max_steps if max_steps is not None else sc.get("max_steps", DEFAULT_MAX_STEPS)
    return COMMANDS[sc["command"]](sc, seed, max_steps)


def cmd_replay(path: str) -> tuple[dict, int]:
    """Re-run the scenario inside a report and re-check every counterexample in it."""
    try:
        old = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read report: {exc}") from None
    if not isinstance(old, dict) or old.get("schema") != REPORT_SCHEMA or "scenario" not in old:
        raise UsageError("not a report produced by this tool")
    sc = validate(old["scenario"])
    new, _ = execute(sc, old["seed"], old["max_steps"])
    same = dumps(new) == dumps(old)
    reproduced = []
    if sc["command"] == "check":
        program = build_program(sc)
        for v in old.get("verdicts", []):
            if "counterexample" in v:
                trace = trace_to_json(run(program, v["counterexample"]).trace)
                reproduced.append(trace == v["trace"])
    if sc["command"] == "interleave" and "schedule" in old:
        e0, e1 = traces_from_json(sc)
        reproduced.append(bool(verify_indistinguishable([tuple(r) for r in old["schedule"]], e0, e1)))
    if sc["command"] == "lockstep" and "schedule" in old:
        program = _family(sc, old["seed"])
        reproduced.append(trace_to_json(run(program, old["schedule"]).trace) == old["trace"])
    ok = same and all(reproduced)
    report = {"schema": REPORT_SCHEMA, "tool": {"name": "conset", "version": __version__},
              "command": "replay", "replayed_status": old.get("status"), "identical": same,
              "artifacts_reproduced": sum(reproduced), "artifacts": len(reproduced),
              "status": "pass" if ok else "fail"}
    return report, EXIT[report["status"]]


def parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="conset", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"conset {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--seed", type=int, help="random seed (overrides the scenario)")
        p.add_argument("--max-steps", type=int, help="per-process step bound (overrides the scenario)")
        p.add_argument("--out", help="write the report here instead of stdout")
        p.add_argument("--quiet", action="store_true", help="print nothing; rely on the exit code")
    p = sub.add_parser("replay")
    p.add_argument("report", help="a report written by an earlier run")
    p.add_argument("--out")
    p.add_argument("--quiet", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    try:
        args = parser().parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad usage
        return 0 if exc.code == 0 else USAGE
    try:
        if args.command == "replay":
            report, code = cmd_replay(args.report)
        else:
            if args.seed is not None and args.seed < 0:
                raise UsageError("--seed must be non-negative")
            if args.max_steps is not None and args.max_steps < 1:
                raise UsageError("--max-steps must be positive")
            sc = load(args.scenario)
            if sc["command"] != args.command:
                raise UsageError(f"scenario is for '{sc['command']}', not '{args.command}'")
            report, code = execute(sc, args.seed, args.max_steps)
    except (UsageError, ScenarioError, ContractViolation) as exc:
        print(f"conset: error: {exc}", file=sys.stderr)
        return USAGE
    text = dumps(report)
    if args.out:
        Path(args.out).write_text(text)
    elif not args.quiet:
        sys.stdout.write(text)
    if not args.quiet:
        print(f"conset {args.command}: {report['status']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
