"""Consensus and test-and-set protocols as deterministic per-process step functions.

A program's ``step(pid, local, response)`` consumes the response to the
process's previous action and returns its next atomic action together with
the new local state.  Local states are plain tuples so the executor can hash
and memoize whole system states.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

from conset.objects import (
    BOTTOM,
    MARKER,
    QUEUE,
    VALUE,
    ConsistentSet,
    ContractViolation,
    Item,
    RegisterBank,
    Selector,
    fresh_uid,
    marker,
)


class ConfigurationError(ValueError):
    """A protocol was asked to run on an object configuration it does not support."""


# ---------------------------------------------------------------------------
# Actions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InsertTo:
    obj: str
    item: Item


@dataclass(frozen=True)
class RemoveFrom:
    obj: str


@dataclass(frozen=True)
class Read:
    reg: str


@dataclass(frozen=True)
class Write:
    reg: str
    value: Any


@dataclass(frozen=True)
class Decide:
    value: Any


Action = InsertTo | RemoveFrom | Read | Write | Decide
REGISTER_ACTIONS = (Read, Write)

StepFn = Callable[[int, tuple, Any], tuple[Action, tuple]]


@dataclass(frozen=True)
class ProtocolProgram:
    """A fixed set of processes over named consistent sets and registers.

    ``kind`` is ``"consensus"`` (processes decide a common input) or ``"tas"``
    (exactly one process decides 1).
    """

    name: str
    kind: str
    n: int
    step: StepFn = field(repr=False, compare=False)
    initial_locals: tuple
    objects: Mapping[str, ConsistentSet] = field(compare=False)
    registers: RegisterBank = RegisterBank()
    inputs: tuple = ()
    isolation_bound: int | None = None
    meta: Mapping[str, Any] = field(default_factory=dict, compare=False)

    @property
    def object_ids(self) -> tuple[str, ...]:
        return tuple(self.objects)


# ---------------------------------------------------------------------------
# remLW: remove until a marker (W = dominant of its pair, L = subordinate) or null
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RemLWResult:
    classification: str | None  # "W", "L" or None for null
    value: Any = None

    @property
    def is_null(self) -> bool:
        return self.classification is None


NULL_RESULT = RemLWResult(None)


def marker_dominance(selector: Selector, m1: Item, m2: Item) -> Item:
    """The marker of the pair that is removed first when ``m1`` is inserted before ``m2``."""
    if m1 == m2:
        raise ContractViolation("dominance needs two distinct markers")
    return selector((m1, m2))


class MarkerRegistry:
    """Sibling pairs of markers with their precomputed winner."""

    def __init__(self):
        self._dominant: dict[int, bool] = {}

    def register_pair(self, selector: Selector, first: Item, second: Item) -> Item:
        if first.payload != second.payload:
            raise ContractViolation("sibling markers must carry the same value")
        win = marker_dominance(selector, first, second)
        self._dominant[first.uid] = win == first
        self._dominant[second.uid] = win == second
        return win

    def classify(self, item: Item | None) -> RemLWResult | None:
        """Result for a removed item, or None when it is not a marker and draining continues."""
        if item is None:
            return NULL_RESULT
        if item.tag != MARKER:
            return None
        try:
            dom = self._dominant[item.uid]
        except KeyError:
            raise ContractViolation(f"marker {item!r} has no registered sibling") from None
        return RemLWResult("W" if dom else "L", item.payload)


def remlw(state: ConsistentSet, registry: MarkerRegistry) -> tuple[ConsistentSet, RemLWResult]:
    """Serial remLW: drain non-marker items until a marker or null comes out."""
    while True:
        state, got = state.remove()
        res = registry.classify(got)
        if res is not None:
            return state, res


# ---------------------------------------------------------------------------
# Two-process consensus: one consistent set plus two registers
# ---------------------------------------------------------------------------

def _consensus2_registers(v0, v1, initial: ConsistentSet, *, write_before_insert: bool,
                          obj: str = "O", regs: tuple[str, str] = ("Proposed0", "Proposed1"),
                          w_uid: int | None = None, name: str) -> ProtocolProgram:
    w = marker(w_uid if w_uid is not None else fresh_uid(initial.contents), "W")
    r0, r1 = regs

    def p0(local, resp):
        pc = local[0]
        if pc == "start":
            return Write(r0, v0), ("read",)
        if pc == "read":
            return Read(r1), ("got1",)
        if pc == "got1":
            if resp is BOTTOM:
                return Decide(v0), ("done",)
            return RemoveFrom(obj), ("loop", resp)
        if pc == "loop":
            other = local[1]
            if resp == w:
                return Decide(v0), ("done",)
            if resp is None:
                return Decide(other), ("done",)
            return RemoveFrom(obj), local
        raise AssertionError(local)

    def p1(local, resp):
        pc = local[0]
        if pc == "start":
            if write_before_insert:
                return Write(r1, v1), ("insert",)
            return InsertTo(obj, w), ("write",)
        if pc == "insert":
            return InsertTo(obj, w), ("read",)
        if pc == "write":
            return Write(r1, v1), ("read",)
        if pc == "read":
            return Read(r0), ("got0",)
        if pc == "got0":
            if resp is not BOTTOM:
                return Decide(resp), ("done",)
            return RemoveFrom(obj), ("loop",)
        if pc == "loop":
            if resp == w:
                return Decide(v1), ("done",)
            if resp is None:
                return Read(r0), ("reread",)
            return RemoveFrom(obj), local
        if pc == "reread":
            # process 0 removed W, and it writes its proposal before removing anything
            assert resp is not BOTTOM, "null seen while Proposed0 is still empty"
            return Decide(resp), ("done",)
        raise AssertionError(local)

    def step(pid, local, resp):
        return (p0 if pid == 0 else p1)(local, resp)

    return ProtocolProgram(
        name=name, kind="consensus", n=2, step=step,
        initial_locals=(("start",), ("start",)),
        objects={obj: initial},
        registers=RegisterBank.of(regs),
        inputs=(v0, v1),
        meta={"W": w},
    )


def consensus2_registers(v0, v1, initial: ConsistentSet) -> ProtocolProgram:
    """Two-process consensus from one arbitrarily initialized consistent set and two registers.

    Process 1 inserts a fresh marker W before publishing its proposal, so a
    non-empty ``Proposed1`` implies W is in the set.  Process 0 publishes,
    and if it sees process 1's proposal it races process 1 for W.
    """
    return _consensus2_registers(v0, v1, initial, write_before_insert=False,
                                 name="consensus2_registers")


def consensus2_registers_broken(v0, v1, initial: ConsistentSet) -> ProtocolProgram:
    """Negative control: process 1 publishes before inserting W, which breaks agreement."""
    return _consensus2_registers(v0, v1, initial, write_before_insert=True,
                                 name="consensus2_registers_broken")


# ---------------------------------------------------------------------------
# Two-process consensus: two consistent sets, no registers
# ---------------------------------------------------------------------------

def _consensus2_two_objects(v0, v1, o0: ConsistentSet, o1: ConsistentSet, *,
                            objs: tuple[str, str] = ("O0", "O1"),
                            base_uid: int | None = None, name: str) -> ProtocolProgram:
    base = base_uid if base_uid is not None else fresh_uid(o0.contents, o1.contents)
    registry = MarkerRegistry()
    pairs = []
    for i, (v, o) in enumerate(((v0, o0), (v1, o1))):
        first = marker(base + 2 * i, f"P{i}", v, inserter=i)
        second = marker(base + 2 * i + 1, f"Q{i}", v, inserter=i)
        for m in (first, second):
            if m in o.contents:
                raise ConfigurationError(f"marker uid {m.uid} collides with an initial item")
        registry.register_pair(o.selector, first, second)
        pairs.append((first, second))
    own, other = objs[0], objs[1]
    if not all(registry.classify(first).classification == "W" for first, _ in pairs):
        return _consensus2_single_marker(v0, v1, o0, o1, objs=objs, base=base, name=name)

    def p0(local, resp):
        pc = local[0]
        if pc == "start":
            return InsertTo(own, pairs[0][0]), ("ins2",)
        if pc == "ins2":
            return InsertTo(own, pairs[0][1]), ("scan1",)
        if pc == "scan1":
            # first remLW(O1) removal goes out next
            return RemoveFrom(other), ("a1",)
        if pc == "a1":
            res = registry.classify(resp)
            if res is None:
                return RemoveFrom(other), local
            return RemoveFrom(own), ("a0", res)
        if pc == "a0":
            a1 = local[1]
            res = registry.classify(resp)
            if res is None:
                return RemoveFrom(own), local
            if res.classification == "W" and a1.is_null:
                return Decide(v0), ("done",)
            if not a1.is_null:
                return Decide(a1.value), ("done",)
            # lost O0 while O1 looked empty: process 1 has inserted its pair by now,
            # one more remLW(O1) recovers its value
            return RemoveFrom(other), ("recover",)
        if pc == "recover":
            res = registry.classify(resp)
            if res is None:
                return RemoveFrom(other), local
            assert not res.is_null, "process 1's markers missing from O1"
            return Decide(res.value), ("done",)
        raise AssertionError(local)

    def p1(local, resp):
        pc = local[0]
        if pc == "start":
            return InsertTo(other, pairs[1][0]), ("ins2",)
        if pc == "ins2":
            return InsertTo(other, pairs[1][1]), ("scan0",)
        if pc == "scan0":
            return RemoveFrom(own), ("b0",)
        if pc == "b0":
            res = registry.classify(resp)
            if res is None:
                return RemoveFrom(own), local
            return RemoveFrom(other), ("b1", res)
        if pc == "b1":
            b0 = local[1]
            res = registry.classify(resp)
            if res is None:
                return RemoveFrom(other), local
            if b0.classification == "L" and res.classification == "W":
                return Decide(b0.value), ("done",)
            return Decide(v1), ("done",)
        raise AssertionError(local)

    def step(pid, local, resp):
        return (p0 if pid == 0 else p1)(local, resp)

    return ProtocolProgram(
        name=name, kind="consensus", n=2, step=step,
        initial_locals=(("start",), ("start",)),
        objects={objs[0]: o0, objs[1]: o1},
        inputs=(v0, v1),
        meta={"markers": tuple(pairs), "registry": registry, "variant": "pair"},
    )


def _consensus2_single_marker(v0, v1, o0: ConsistentSet, o1: ConsistentSet, *,
                              objs: tuple[str, str], base: int, name: str) -> ProtocolProgram:
    """One marker per object, so the selection function never has to order two markers.

    Process 1 inserts ``b`` into ``O1`` and takes one remLW on ``O0``: null
    means process 0 has not started and it keeps ``v1``, otherwise it adopts
    ``v0``.  Process 0 inserts ``a`` into ``O0`` and takes one remLW on
    ``O1``: null means process 1 has not reached ``O0`` yet (or already took
    ``a``), so ``v0``.  Seeing ``b``, it races process 1 for its own ``a``;
    getting it back means process 1 found ``O0`` empty and kept ``v1``.
    """
    a = marker(base, "A", v0, inserter=0)
    b = marker(base + 1, "B", v1, inserter=1)
    for m, o in ((a, o0), (b, o1)):
        if m in o.contents:
            raise ConfigurationError(f"marker uid {m.uid} collides with an initial item")
    own, other = objs

    def p0(local, resp):
        pc = local[0]
        if pc == "start":
            return InsertTo(own, a), ("scan1",)
        if pc == "scan1":
            return RemoveFrom(other), ("x",)
        if pc == "x":
            if resp is None:
                return Decide(v0), ("done",)
            if not resp.is_marker:
                return RemoveFrom(other), local
            return RemoveFrom(own), ("z", resp.payload)
        if pc == "z":
            if resp is None:
                return Decide(v0), ("done",)
            if not resp.is_marker:
                return RemoveFrom(own), local
            return Decide(local[1]), ("done",)
        raise AssertionError(local)

    def p1(local, resp):
        pc = local[0]
        if pc == "start":
            return InsertTo(other, b), ("scan0",)
        if pc == "scan0":
            return RemoveFrom(own), ("y",)
        if pc == "y":
            if resp is None:
                return Decide(v1), ("done",)
            if not resp.is_marker:
                return RemoveFrom(own), local
            return Decide(resp.payload), ("done",)
        raise AssertionError(local)

    def step(pid, local, resp):
        return (p0 if pid == 0 else p1)(local, resp)

    return ProtocolProgram(
        name=name, kind="consensus", n=2, step=step,
        initial_locals=(("start",), ("start",)),
        objects={objs[0]: o0, objs[1]: o1},
        inputs=(v0, v1),
        meta={"markers": (a, b), "variant": "single"},
    )


def consensus2_two_objects(v0, v1, o0: ConsistentSet, o1: ConsistentSet) -> ProtocolProgram:
    """Two-process consensus from two arbitrarily initialized consistent sets and no registers.

    Process i puts a sibling pair of markers carrying its input into ``O_i``,
    then runs remLW on the other process's object before its own.  The W/L
    reading of a pair only works when the first-inserted marker dominates; for
    selection functions where the later one wins (stacks) the program falls
    back to a one-marker-per-object variant that no ordering can confuse.
    """
    return _consensus2_two_objects(v0, v1, o0, o1, name="consensus2_two_objects")


# ---------------------------------------------------------------------------
# Test-and-set from a lucky state, and queue consensus from a lucky state
# ---------------------------------------------------------------------------

def _the_w(state: ConsistentSet) -> Item:
    ws = [it for it in state.contents if it.tag == MARKER and it.marker == "W"]
    if len(ws) != 1:
        raise ConfigurationError(f"a lucky state holds exactly one W, found {len(ws)}")
    return ws[0]


def lucky_state(selector: Selector, before: Sequence[Any] = (), after: Sequence[Any] = ()) -> ConsistentSet:
    """A set holding ``before`` items, a single W, then ``after`` items."""
    items = [Item(k + 1, payload=p) for k, p in enumerate(before)]
    items.append(marker(len(items) + 1, "W"))
    items += [Item(len(items) + 1 + k, payload=p) for k, p in enumerate(after)]
    return ConsistentSet(selector, tuple(items))


def tas_lucky(n: int, lucky: ConsistentSet) -> ProtocolProgram:
    """Each process removes until it sees W (returns 1) or null (returns 0)."""
    w = _the_w(lucky)

    def step(pid, local, resp):
        if local[0] == "start":
            return RemoveFrom("O"), ("loop",)
        if resp == w:
            return Decide(1), ("done",)
        if resp is None:
            return Decide(0), ("done",)
        return RemoveFrom("O"), local

    return ProtocolProgram(
        name="tas_lucky", kind="tas", n=n, step=step,
        initial_locals=(("start",),) * n,
        objects={"O": lucky},
        meta={"W": w},
    )


def consensus2_queue_lucky(v0, v1, lucky: ConsistentSet) -> ProtocolProgram:
    """Enqueue own value, then dequeue until W (keep own value) or null (take the other's)."""
    if lucky.selector != QUEUE:
        raise ConfigurationError("this protocol needs a first-in-first-out queue")
    w = _the_w(lucky)
    base = fresh_uid(lucky.contents)
    mine = (Item(base, VALUE, v0, inserter=0), Item(base + 1, VALUE, v1, inserter=1))

    def step(pid, local, resp):
        pc = local[0]
        if pc == "start":
            return InsertTo("O", mine[pid]), ("issue",)
        if pc == "issue":
            return RemoveFrom("O"), ("deq", ())
        if pc == "deq":
            last = local[1]
            if resp == w:
                return Decide(mine[pid].payload), ("done",)
            if resp is None:
                # both inputs sit behind W, so they are the last two dequeued
                assert len(last) == 2 and mine[pid] in last, (pid, last)
                theirs = next(it for it in last if it != mine[pid])
                return Decide(theirs.payload), ("done",)
            return RemoveFrom("O"), ("deq", (last + (resp,))[-2:])
        raise AssertionError(local)

    return ProtocolProgram(
        name="consensus2_queue_lucky", kind="consensus", n=2, step=step,
        initial_locals=(("start",), ("start",)),
        objects={"O": lucky},
        inputs=(v0, v1),
        meta={"W": w},
    )


# ---------------------------------------------------------------------------
# n-process test-and-set: static tournament of two-process blocks
# ---------------------------------------------------------------------------

TOURNAMENT_BUILDERS = ("two-objects", "set-plus-registers")
DOOR = "Door"
DOOR_READ, DOOR_SEEN = -2, -1


def _block(builder: str, node: str, selector: Selector, initial: Sequence[Any]) -> ProtocolProgram:
    def fresh(start):
        return ConsistentSet(selector, tuple(Item(start + k, payload=p) for k, p in enumerate(initial)))

    if builder == "two-objects":
        o0, o1 = fresh(1), fresh(1 + len(initial))
        return _consensus2_two_objects(0, 1, o0, o1, objs=(f"{node}.O0", f"{node}.O1"),
                                       name=f"block{node}")
    if builder == "set-plus-registers":
        return _consensus2_registers(0, 1, fresh(1), write_before_insert=False, obj=f"{node}.O",
                                     regs=(f"{node}.Proposed0", f"{node}.Proposed1"),
                                     name=f"block{node}")
    raise ConfigurationError(f"unknown builder {builder!r}; use one of {TOURNAMENT_BUILDERS}")


def _solo_cost(block: ProtocolProgram, side: int) -> int:
    """Memory actions a side takes when it runs a fresh block alone."""
    objs = dict(block.objects)
    regs = block.registers
    local, resp, cost = block.initial_locals[side], None, 0
    while True:
        act, local = block.step(side, local, resp)
        if isinstance(act, Decide):
            return cost
        cost += 1
        if isinstance(act, InsertTo):
            objs[act.obj], resp = objs[act.obj].insert(act.item), None
        elif isinstance(act, RemoveFrom):
            objs[act.obj], resp = objs[act.obj].remove()
        elif isinstance(act, Read):
            resp = regs.read(act.reg)
        else:
            regs, resp = regs.write(act.reg, act.value), None


def tournament_tas(n: int, builder: str = "two-objects", *, selector: Selector = QUEUE,
                   initial: Sequence[Any] = (), max_n: int = 16) -> ProtocolProgram:
    """n-process test-and-set: a binary tournament whose nodes are two-process consensus blocks.

    Process p starts at leaf p and at level k plays side ``(p >> k) & 1`` of
    node ``p >> (k + 1)``.  Winning a block (deciding its own side) moves it up
    a level; winning the root returns 1, losing anywhere returns 0.

    A doorway register in front of the tree makes the result linearizable:
    a process that finds the door closed returns 0 at once, otherwise it
    closes it and enters.  Every entrant started before the door closed, so
    the eventual winner can be placed at that moment, ahead of every loser.
    """
    if n < 2:
        raise ConfigurationError("a tournament needs at least two processes")
    if n > max_n:
        raise ConfigurationError(f"n={n} exceeds the configured bound {max_n}")
    depth = max(1, math.ceil(math.log2(n)))
    blocks: dict[tuple[int, int], ProtocolProgram] = {}
    for level in range(depth):
        for idx in range(2 ** (depth - level - 1)):
            # skip nodes no process can reach
            if idx * 2 ** (level + 1) < n:
                blocks[level, idx] = _block(builder, f"n{level}.{idx}", selector, initial)
    objects: dict[str, ConsistentSet] = {}
    regnames: list[str] = []
    for b in blocks.values():
        objects.update(b.objects)
        regnames += b.registers.names()
    block_cost = max(_solo_cost(b, s) for b in blocks.values() for s in (0, 1))

    def step(pid, local, resp):
        level, sub = local
        if level == DOOR_READ:
            return Read(DOOR), (DOOR_SEEN, sub)
        if level == DOOR_SEEN:
            if resp is not BOTTOM:
                return Decide(0), (level, ("done",))
            return Write(DOOR, True), (0, sub)
        while True:
            side = (pid >> level) & 1
            block = blocks[level, pid >> (level + 1)]
            act, sub = block.step(side, sub, resp)
            if not isinstance(act, Decide):
                return act, (level, sub)
            if act.value != side:
                return Decide(0), (level, ("done",))
            if level == depth - 1:
                return Decide(1), (level, ("done",))
            level, resp = level + 1, None
            sub = blocks[level, pid >> (level + 1)].initial_locals[(pid >> level) & 1]

    first = {p: blocks[0, p >> 1].initial_locals[p & 1] for p in range(n)}
    return ProtocolProgram(
        name="tournament_tas", kind="tas", n=n, step=step,
        initial_locals=tuple((DOOR_READ, first[p]) for p in range(n)),
        objects=objects,
        registers=RegisterBank.of([DOOR, *regnames]),
        isolation_bound=2 + depth * block_cost + 1,
        meta={"depth": depth, "block_cost": block_cost, "builder": builder},
    )
