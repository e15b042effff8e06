"""Signatures, the pigeonhole pair and the lock-step schedule over empty queues or stacks.

Given a purported isolation-bounded test-and-set whose processes use only
initially empty queues (or stacks), two processes that touch the same shared
objects with the same operation pattern can be run in lock step so that
neither sees anything but its solo run, and both win.  Over a finite family
a found pair is a certificate; not finding one refutes nothing.
"""

from __future__ import annotations

import random
from collections.abc import Sequence
from dataclasses import dataclass

from conset.executor import NonTermination, TraceEntry, run, solo_execution
from conset.objects import QUEUE, STACK, VALUE, ConsistentSet, ContractViolation, Item
from conset.protocols import Decide, InsertTo, ProtocolProgram, RemoveFrom

KINDS = {"queue": QUEUE, "stack": STACK}


class IsolationBoundViolation(ContractViolation):
    """Some candidates do not decide 1 alone within M memory steps."""

    def __init__(self, violations: Sequence[tuple[int, str]]):
        self.violations = tuple(violations)
        super().__init__("; ".join(f"process {p}: {why}" for p, why in self.violations))


@dataclass(frozen=True)
class Signature:
    owner: int
    steps: tuple[TraceEntry, ...]  # memory steps of the solo run, Decide excluded
    footprint: frozenset[str]

    def pattern(self, objs: frozenset[str] | set[str]) -> tuple[tuple[str, str], ...]:
        """Operation kinds and object ids of the steps on ``objs``, in order."""
        return tuple(_kind(e) for e in self.steps if e.action.obj in objs)

    def to_dict(self) -> dict:
        return {"owner": self.owner,
                "steps": [list(_kind(e)) for e in self.steps],
                "footprint": sorted(self.footprint)}


def _kind(e: TraceEntry) -> tuple[str, str]:
    return ("insert" if isinstance(e.action, InsertTo) else "remove", e.action.obj)


def partition_signatures(program: ProtocolProgram, M: int) -> tuple[list[Signature], list[tuple[int, str]]]:
    """Signatures of the candidates that decide 1 alone within ``M`` steps, and why the others fail."""
    sigs, bad = [], []
    for pid in range(program.n):
        try:
            solo = solo_execution(program, pid, max_steps=M + 1)
        except NonTermination:
            bad.append((pid, f"no decision within {M} steps"))
            continue
        mem = solo.memory_steps
        if any(not isinstance(e.action, (InsertTo, RemoveFrom)) for e in mem):
            bad.append((pid, "uses registers"))
        elif solo.decision != 1:
            bad.append((pid, f"decides {solo.decision!r} alone"))
        else:
            sigs.append(Signature(pid, mem, frozenset(e.action.obj for e in mem)))
    return sigs, bad


def extract_signatures(program: ProtocolProgram, M: int) -> list[Signature]:
    """Solo run of every process; each must decide 1 within ``M`` inserts and removes."""
    sigs, bad = partition_signatures(program, M)
    if bad:
        raise IsolationBoundViolation(bad)
    return sigs


@dataclass(frozen=True)
class ConflictPair:
    p: Signature
    q: Signature
    shared: tuple[str, ...]

    def to_dict(self) -> dict:
        return {"p": self.p.owner, "q": self.q.owner, "shared": list(self.shared)}


def select_conflict_pair(signatures: Sequence[Signature]) -> ConflictPair | None:
    """A pair with identical operation patterns on the objects both touch.

    Objects touched by only one of the two are private to it, so outside the
    shared set the footprints are disjoint by construction.  With more
    candidates than patterns such a pair must exist; that is the pigeonhole
    step, made finite.  Pairs that share at least one object are preferred
    (in owner order); a pair with disjoint footprints is a valid but
    uninteresting certificate and is returned only when no other exists.
    """
    sigs = sorted(signatures, key=lambda s: s.owner)
    fallback = None
    for i, p in enumerate(sigs):
        for q in sigs[i + 1:]:
            shared = p.footprint & q.footprint
            if p.pattern(shared) != q.pattern(shared):
                continue
            if shared:
                return ConflictPair(p, q, tuple(sorted(shared)))
            if fallback is None:
                fallback = ConflictPair(p, q, ())
    return fallback


def lockstep_schedule(p: Signature, q: Signature, kind: str) -> tuple[int, ...]:
    """Process ids in lock-step order, Decide steps included.

    Each process runs its private steps freely; shared steps go in pairs,
    p then q, except that on a stack q removes first.
    """
    if kind not in KINDS:
        raise ContractViolation(f"kind must be one of {sorted(KINDS)}")
    shared = p.footprint & q.footprint
    if p.pattern(shared) != q.pattern(shared):
        raise ContractViolation("the two signatures differ on their shared objects")
    sched: list[int] = []
    ip = iq = 0

    def private_run(sig, i):
        while i < len(sig.steps) and sig.steps[i].action.obj not in shared:
            sched.append(sig.owner)
            i += 1
        return i

    while True:
        ip = private_run(p, ip)
        iq = private_run(q, iq)
        if ip == len(p.steps):
            break
        op = _kind(p.steps[ip])[0]
        pair = (q.owner, p.owner) if kind == "stack" and op == "remove" else (p.owner, q.owner)
        sched.extend(pair)
        ip, iq = ip + 1, iq + 1
    sched += [p.owner, q.owner]  # the two Decide steps
    return tuple(sched)


@dataclass(frozen=True)
class LockstepCertificate:
    pair: ConflictPair
    kind: str
    schedule: tuple[int, ...]
    decisions: dict
    indistinguishable: bool
    trace: tuple[TraceEntry, ...]

    @property
    def double_win(self) -> bool:
        return self.decisions.get(self.pair.p.owner) == 1 and self.decisions.get(self.pair.q.owner) == 1


def certify_double_win(program: ProtocolProgram, pair: ConflictPair, kind: str) -> LockstepCertificate:
    """Replay the lock-step schedule; both processes should see exactly their solo runs."""
    want = KINDS.get(kind)
    if want is None:
        raise ContractViolation(f"kind must be one of {sorted(KINDS)}")
    for oid in pair.shared:
        obj = program.objects[oid]
        if obj.selector != want or not obj.empty:
            raise ContractViolation(f"shared object {oid} is not an empty {kind}")
    sched = lockstep_schedule(pair.p, pair.q, kind)
    res = run(program, sched)
    same = all(
        tuple((e.action, e.response) for e in res.per_process(sig.owner)
              if not isinstance(e.action, Decide)) == tuple((e.action, e.response) for e in sig.steps)
        for sig in (pair.p, pair.q))
    return LockstepCertificate(pair, kind, sched, res.decisions, same, tuple(res.trace))


# ---------------------------------------------------------------------------
# Candidate families
# ---------------------------------------------------------------------------

Script = Sequence[tuple[str, str]]  # ("insert" | "remove", object id); "{pid}" expands per process


def scripted_family(kind: str, scripts: Sequence[Script], name: str = "scripted") -> ProtocolProgram:
    """One straight-line candidate per script over initially empty objects.

    A candidate follows its script and decides 1 exactly when every remove
    returned what it returned in the candidate's solo run; this is the most
    optimistic strategy a process limited to its own observations can take.
    """
    sel = KINDS.get(kind)
    if sel is None:
        raise ContractViolation(f"kind must be one of {sorted(KINDS)}")
    expanded = [tuple((op, obj.format(pid=pid)) for op, obj in script) for pid, script in enumerate(scripts)]
    objects = {oid: ConsistentSet(sel) for script in expanded for _, oid in script}
    tokens = [[Item(1000 * (pid + 1) + k, VALUE, f"t{pid}.{k}", inserter=pid) for k in range(len(script))]
              for pid, script in enumerate(expanded)]
    expected = []
    for pid, script in enumerate(expanded):
        objs = {oid: ConsistentSet(sel) for _, oid in script}
        exp = []
        for k, (op, oid) in enumerate(script):
            if op == "insert":
                objs[oid] = objs[oid].insert(tokens[pid][k])
                exp.append(None)
            else:
                objs[oid], got = objs[oid].remove()
                exp.append(got)
        expected.append(tuple(exp))

    def step(pid, local, resp):
        k, ok = local
        if k > 0 and expanded[pid][k - 1][0] == "remove":
            ok = ok and resp == expected[pid][k - 1]
        if k == len(expanded[pid]):
            return Decide(1 if ok else 0), (k, ok)
        op, oid = expanded[pid][k]
        act = InsertTo(oid, tokens[pid][k]) if op == "insert" else RemoveFrom(oid)
        return act, (k + 1, ok)

    return ProtocolProgram(
        name=f"{name}_{kind}", kind="tas", n=len(expanded), step=step,
        initial_locals=((0, True),) * len(expanded),
        objects=objects,
        isolation_bound=max((len(s) for s in expanded), default=0),
        meta={"scripts": expanded},
    )


def random_family(kind: str, size: int = 10, *, shared: int = 2, max_ops: int = 3,
                  private: int = 1, seed: int = 0) -> ProtocolProgram:
    """``size`` random scripts of 1..max_ops steps over ``shared`` common and per-process scratch objects.

    Every script touches at least one common object.
    """
    rng = random.Random(seed)
    common = [f"Q{k + 1}" for k in range(shared)]
    pool = common + [f"S{{pid}}.{k + 1}" for k in range(private)]
    scripts = []
    for _ in range(size):
        n_ops = rng.randint(1, max_ops)
        script = [(rng.choice(("insert", "remove")), rng.choice(pool)) for _ in range(n_ops)]
        if common and not any(obj in common for _, obj in script):
            k = rng.randrange(n_ops)
            script[k] = (script[k][0], rng.choice(common))
        scripts.append(script)
    return scripted_family(kind, scripts, name="random")
