"""Deterministic scheduler, replay engine and exhaustive interleaving checker."""

from __future__ import annotations

import random
import sys
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace
from typing import Any

from conset.objects import ConsistentSet, RegisterBank
from conset.protocols import (
    REGISTER_ACTIONS,
    Action,
    Decide,
    InsertTo,
    ProtocolProgram,
    Read,
    RemoveFrom,
    Write,
)

DEFAULT_MAX_STEPS = 64


class ScheduleError(ValueError):
    """A schedule named a process that has already decided, or an unknown one."""


class NonTermination(RuntimeError):
    """A process did not decide within the step bound."""


class _Undecided:
    def __repr__(self):
        return "UNDECIDED"


UNDECIDED = _Undecided()


@dataclass(frozen=True)
class SystemState:
    objects: tuple[ConsistentSet, ...]
    registers: RegisterBank
    locals: tuple
    responses: tuple
    decided: tuple
    steps: tuple[int, ...]
    # ("inv", pid) / ("res", pid, value) events in real-time order
    history: tuple = ()

    def undecided(self) -> list[int]:
        return [p for p, d in enumerate(self.decided) if d is UNDECIDED]

    @property
    def terminal(self) -> bool:
        return all(d is not UNDECIDED for d in self.decided)

    def decisions(self) -> dict[int, Any]:
        return {p: d for p, d in enumerate(self.decided) if d is not UNDECIDED}

    def object_map(self, program: ProtocolProgram) -> dict[str, ConsistentSet]:
        return dict(zip(program.object_ids, self.objects))


def initial_state(program: ProtocolProgram) -> SystemState:
    n = program.n
    return SystemState(
        objects=tuple(program.objects.values()),
        registers=program.registers,
        locals=tuple(program.initial_locals),
        responses=(None,) * n,
        decided=(UNDECIDED,) * n,
        steps=(0,) * n,
    )


@dataclass(frozen=True)
class TraceEntry:
    pid: int
    action: Action
    response: Any = None


def _index(program: ProtocolProgram) -> dict[str, int]:
    idx = program.meta.get("_object_index")
    if idx is None:
        idx = {oid: k for k, oid in enumerate(program.object_ids)}
    return idx


def apply_step(program: ProtocolProgram, state: SystemState, pid: int,
               index: dict[str, int] | None = None,
               record_history: bool = True) -> tuple[SystemState, TraceEntry]:
    """Let ``pid`` take one atomic action."""
    if not 0 <= pid < program.n:
        raise ScheduleError(f"no process {pid}")
    if state.decided[pid] is not UNDECIDED:
        raise ScheduleError(f"process {pid} already decided")
    index = index if index is not None else _index(program)
    act, new_local = program.step(pid, state.locals[pid], state.responses[pid])
    objects, registers, decided, resp = state.objects, state.registers, state.decided, None
    history = state.history
    if record_history and state.steps[pid] == 0:
        history += (("inv", pid),)
    if isinstance(act, InsertTo):
        k = index[act.obj]
        objects = objects[:k] + (objects[k].insert(act.item),) + objects[k + 1:]
    elif isinstance(act, RemoveFrom):
        k = index[act.obj]
        new_obj, resp = objects[k].remove()
        objects = objects[:k] + (new_obj,) + objects[k + 1:]
    elif isinstance(act, Read):
        resp = registers.read(act.reg)
    elif isinstance(act, Write):
        registers = registers.write(act.reg, act.value)
    elif isinstance(act, Decide):
        decided = decided[:pid] + (act.value,) + decided[pid + 1:]
        if record_history:
            history += (("res", pid, act.value),)
    else:
        raise TypeError(f"unknown action {act!r}")
    new = SystemState(
        objects=objects,
        registers=registers,
        locals=state.locals[:pid] + (new_local,) + state.locals[pid + 1:],
        responses=state.responses[:pid] + (resp,) + state.responses[pid + 1:],
        decided=decided,
        steps=state.steps[:pid] + (state.steps[pid] + 1,) + state.steps[pid + 1:],
        history=history,
    )
    return new, TraceEntry(pid, act, resp)


@dataclass
class RunResult:
    state: SystemState
    trace: list[TraceEntry]

    def per_process(self, pid: int) -> list[TraceEntry]:
        return [e for e in self.trace if e.pid == pid]

    @property
    def decisions(self) -> dict[int, Any]:
        return self.state.decisions()


def run(program: ProtocolProgram, schedule: Iterable[int],
        state: SystemState | None = None) -> RunResult:
    """Apply one action per schedule entry, starting from the initial state."""
    state = state if state is not None else initial_state(program)
    index = _index(program)
    trace = []
    for pid in schedule:
        state, entry = apply_step(program, state, pid, index)
        trace.append(entry)
    return RunResult(state, trace)


@dataclass(frozen=True)
class SoloExecution:
    pid: int
    steps: tuple[TraceEntry, ...]
    decision: Any

    @property
    def length(self) -> int:
        return len(self.steps)

    @property
    def memory_steps(self) -> tuple[TraceEntry, ...]:
        return tuple(e for e in self.steps if not isinstance(e.action, Decide))


def solo_execution(program: ProtocolProgram, pid: int,
                   max_steps: int = DEFAULT_MAX_STEPS) -> SoloExecution:
    """Run ``pid`` alone from the initial state until it decides."""
    state = initial_state(program)
    index = _index(program)
    out = []
    while state.decided[pid] is UNDECIDED:
        if len(out) >= max_steps:
            raise NonTermination(f"process {pid} took {max_steps} steps alone without deciding")
        state, entry = apply_step(program, state, pid, index)
        out.append(entry)
    return SoloExecution(pid, tuple(out), state.decided[pid])


# ---------------------------------------------------------------------------
# Properties and verdicts
# ---------------------------------------------------------------------------

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"

CONSENSUS_PROPERTIES = ("agreement", "validity", "wait_freedom")
TAS_PROPERTIES = ("winner_uniqueness", "wait_freedom")
ALL_PROPERTIES = ("agreement", "validity", "winner_uniqueness", "wait_freedom",
                  "register_freedom", "tas_linearization")


@dataclass
class Verdict:
    property: str
    status: str
    counterexample: tuple[int, ...] | None = None
    trace: list[TraceEntry] | None = None
    explored: int = 0        # complete schedules
    states: int = 0          # distinct states visited
    max_steps: int = 0       # largest per-process step count seen
    bound: int = DEFAULT_MAX_STEPS
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_dict(self) -> dict:
        from conset.report import trace_to_json  # local import keeps the executor standalone

        d = {
            "property": self.property,
            "status": self.status,
            "explored_schedules": self.explored,
            "states": self.states,
            "max_steps": self.max_steps,
            "bound": self.bound,
        }
        if self.detail:
            d["detail"] = self.detail
        if self.counterexample is not None:
            d["counterexample"] = list(self.counterexample)
            d["trace"] = trace_to_json(self.trace or [])
        return d


def default_properties(program: ProtocolProgram) -> tuple[str, ...]:
    return CONSENSUS_PROPERTIES if program.kind == "consensus" else TAS_PROPERTIES


def linearizable_tas(history: Sequence[tuple], n: int) -> bool:
    """Brute-force search for a sequential test-and-set order respecting real time.

    Complete calls must all appear; pending calls may be linearized or dropped.
    The sequential object answers 1 to the first call and 0 afterwards.
    """
    inv, res = {}, {}
    for t, ev in enumerate(history):
        if ev[0] == "inv":
            inv[ev[1]] = t
        else:
            res[ev[1]] = (t, ev[2])
    calls = sorted(inv)

    def search(done: frozenset, won: bool) -> bool:
        if all(p in done for p in res):
            return True
        for p in calls:
            if p in done:
                continue
            # p may go next only if no undone call finished before p started
            if any(q not in done and q in res and res[q][0] < inv[p] for q in calls if q != p):
                continue
            ret = 0 if won else 1
            if p in res and res[p][1] != ret:
                continue
            if search(done | {p}, True):
                return True
        return False

    return search(frozenset(), False)


class _Explorer:
    def __init__(self, program, properties, max_steps, memoize, max_states):
        self.p = program
        self.props = tuple(properties)
        self.max_steps = max_steps
        self.memoize = memoize
        self.max_states = max_states
        self.index = _index(program)
        self.track_history = "tas_linearization" in self.props
        self.failures: dict[str, tuple[tuple[int, ...], str]] = {}
        self.memo: dict = {}
        self.visited = 0
        self.max_seen = 0
        self.bound_hit = False
        self.budget_hit = False
        self.inputs = set(program.inputs)

    def key(self, s: SystemState):
        return s if self.track_history else replace(s, history=())

    def fail(self, prop, path, why):
        if prop in self.props and prop not in self.failures:
            self.failures[prop] = (tuple(path), why)

    def check_state(self, s: SystemState, path):
        vals = [d for d in s.decided if d is not UNDECIDED]
        if self.p.kind == "consensus":
            if len(set(vals)) > 1:
                self.fail("agreement", path, f"decisions {s.decisions()}")
            if any(v not in self.inputs for v in vals):
                self.fail("validity", path, f"decisions {s.decisions()} vs inputs {self.p.inputs}")
        else:
            ones = sum(1 for v in vals if v == 1)
            if ones > 1 or (s.terminal and ones != 1):
                self.fail("winner_uniqueness", path, f"decisions {s.decisions()}")
            if s.terminal and self.track_history and not linearizable_tas(s.history, self.p.n):
                self.fail("tas_linearization", path, f"history {s.history}")

    def visit(self, s: SystemState, path: list[int]) -> int:
        self.check_state(s, path)
        if s.terminal:
            return 1
        k = self.key(s) if self.memoize else None
        if k is not None and k in self.memo:
            return self.memo[k]
        self.visited += 1
        if self.visited > self.max_states:
            self.budget_hit = True
            return 0
        total = 0
        for pid in s.undecided():
            if s.steps[pid] >= self.max_steps:
                self.bound_hit = True
                continue
            nxt, entry = apply_step(self.p, s, pid, self.index, self.track_history)
            self.max_seen = max(self.max_seen, nxt.steps[pid])
            if isinstance(entry.action, REGISTER_ACTIONS):
                self.fail("register_freedom", path + [pid], f"{entry.action!r}")
            path.append(pid)
            total += self.visit(nxt, path)
            path.pop()
            if self.budget_hit:
                return total
        if k is not None:
            self.memo[k] = total
        return total


def check_all_interleavings(program: ProtocolProgram, properties: Sequence[str] | None = None, *,
                            max_steps: int = DEFAULT_MAX_STEPS, memoize: bool = True,
                            max_states: int = 5_000_000) -> list[Verdict]:
    """DFS over every schedule, lowest process id first, with state memoization.

    A failure is definitive and carries a replayable schedule.  Hitting the
    per-process step bound or the state budget makes every non-failed
    property inconclusive.
    """
    props = tuple(properties) if properties is not None else default_properties(program)
    unknown = set(props) - set(ALL_PROPERTIES)
    if unknown:
        raise ValueError(f"unknown properties {sorted(unknown)}")
    ex = _Explorer(program, props, max_steps, memoize, max_states)
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 4 * program.n * max_steps + 1000))
    try:
        count = ex.visit(initial_state(program), [])
    finally:
        sys.setrecursionlimit(old)
    verdicts = []
    for prop in props:
        v = Verdict(prop, PASS, explored=count, states=ex.visited, max_steps=ex.max_seen,
                    bound=max_steps)
        if prop in ex.failures:
            sched, why = ex.failures[prop]
            v.status, v.counterexample, v.detail = FAIL, sched, why
            v.trace = run(program, sched).trace
        elif ex.bound_hit:
            v.status = INCONCLUSIVE
            v.detail = f"a process reached the step bound {max_steps} without deciding"
        elif ex.budget_hit:
            v.status = INCONCLUSIVE
            v.detail = f"state budget {max_states} exhausted"
        verdicts.append(v)
    return verdicts


def check_tas_linearization(program: ProtocolProgram, *, max_steps: int = DEFAULT_MAX_STEPS,
                            max_states: int = 5_000_000) -> Verdict:
    """Every explored complete history must linearize with the winner first."""
    if program.kind != "tas":
        raise ValueError("linearization check applies to test-and-set programs")
    return check_all_interleavings(program, ("tas_linearization",), max_steps=max_steps,
                                   max_states=max_states)[0]


def count_schedules_brute(program: ProtocolProgram, max_steps: int = DEFAULT_MAX_STEPS) -> int:
    """Number of complete schedules by plain enumeration, no deduplication."""
    index = _index(program)

    def go(s):
        if s.terminal:
            return 1
        total = 0
        for pid in s.undecided():
            if s.steps[pid] >= max_steps:
                raise NonTermination(f"process {pid} hit the step bound")
            total += go(apply_step(program, s, pid, index, False)[0])
        return total

    return go(initial_state(program))


@dataclass
class RandomCheck:
    verdicts: list[Verdict]
    schedules: int
    seed: int
    max_steps_seen: int = 0
    decisions: dict = field(default_factory=dict)


def check_random_schedules(program: ProtocolProgram, count: int, seed: int = 0,
                           properties: Sequence[str] | None = None, *,
                           max_steps: int = DEFAULT_MAX_STEPS) -> RandomCheck:
    """Seeded random schedules: at each point a uniformly chosen undecided process moves."""
    props = tuple(properties) if properties is not None else default_properties(program)
    ex = _Explorer(program, props, max_steps, False, 0)
    rng = random.Random(seed)
    index = _index(program)
    init = initial_state(program)
    max_seen = 0
    for _ in range(count):
        s, path = init, []
        while not s.terminal:
            live = s.undecided()
            pid = live[rng.randrange(len(live))]
            if s.steps[pid] >= max_steps:
                ex.bound_hit = True
                break
            s, entry = apply_step(program, s, pid, index, ex.track_history)
            path.append(pid)
            if isinstance(entry.action, REGISTER_ACTIONS):
                ex.fail("register_freedom", path, f"{entry.action!r}")
            ex.check_state(s, path)
        max_seen = max(max_seen, max(s.steps))
    verdicts = []
    for prop in props:
        v = Verdict(prop, PASS, explored=count, max_steps=max_seen, bound=max_steps)
        if prop in ex.failures:
            sched, why = ex.failures[prop]
            v.status, v.counterexample, v.detail = FAIL, sched, why
            v.trace = run(program, sched).trace
        elif ex.bound_hit:
            v.status, v.detail = INCONCLUSIVE, f"step bound {max_steps} reached"
        verdicts.append(v)
    return RandomCheck(verdicts, count, seed, max_seen)
