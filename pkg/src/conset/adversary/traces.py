"""Solo traces on a single consistent set, and the quantities the interleaver reasons with.

A solo trace is one process's run in isolation against an initially empty
set: a list of inserts and removes, each remove carrying the response it got.
"""

from __future__ import annotations

import random
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

from conset.objects import (
    PRIORITY_MAX,
    VALUE,
    ConsistentSet,
    ContractViolation,
    Item,
    Selector,
)

INSERT, REMOVE = "insert", "remove"


class UndefinedG(ContractViolation):
    """g is asked of a trace in which no item is both inserted and removed."""


@dataclass(frozen=True)
class TraceStep:
    """``insert(item)``, or ``remove()`` whose solo response is ``item`` (None for null)."""

    op: str
    item: Item | None = None

    def __post_init__(self):
        if self.op not in (INSERT, REMOVE):
            raise ContractViolation(f"unknown step op {self.op!r}")
        if self.op == INSERT and self.item is None:
            raise ContractViolation("an insert step needs an item")

    def __repr__(self):
        return f"ins {self.item!r}" if self.op == INSERT else f"rem->{self.item!r}"

    def to_dict(self) -> dict:
        d = {"op": self.op}
        if self.item is not None:
            d["item"] = self.item.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> TraceStep:
        item = d.get("item")
        return cls(d["op"], Item.from_dict(item) if item is not None else None)


def ins_step(item: Item) -> TraceStep:
    return TraceStep(INSERT, item)


@dataclass(frozen=True)
class SoloTrace:
    selector: Selector
    steps: tuple[TraceStep, ...] = ()

    def __post_init__(self):
        _, responses = _replay(self.selector, self.steps)
        for k, (st, got) in enumerate(zip(self.steps, responses)):
            if st.op == REMOVE and got != st.item:
                raise ContractViolation(
                    f"step {k}: recorded response {st.item!r} but solo replay gives {got!r}")

    @classmethod
    def from_ops(cls, selector: Selector, ops: Iterable[Item | None]) -> SoloTrace:
        """Build a trace from inserts (items) and removes (None), filling in responses."""
        s = ConsistentSet(selector)
        steps = []
        for op in ops:
            if op is None:
                s, got = s.remove()
                steps.append(TraceStep(REMOVE, got))
            else:
                s = s.insert(op)
                steps.append(TraceStep(INSERT, op))
        return cls(selector, tuple(steps))

    def __len__(self):
        return len(self.steps)

    @property
    def inserted(self) -> list[Item]:
        return [st.item for st in self.steps if st.op == INSERT]

    def to_dict(self) -> dict:
        return {"selector": self.selector.name, "steps": [st.to_dict() for st in self.steps]}


def _replay(selector: Selector, steps: Sequence[TraceStep],
            start: ConsistentSet | None = None) -> tuple[list[ConsistentSet], list[Item | None]]:
    """States after each prefix (index 0 = before any step) and the actual remove responses."""
    s = start if start is not None else ConsistentSet(selector)
    states, responses = [s], []
    for st in steps:
        if st.op == INSERT:
            s, got = s.insert(st.item), None
        else:
            s, got = s.remove()
        states.append(s)
        responses.append(got)
    return states, responses


def prefix_state(trace: SoloTrace, ell: int) -> ConsistentSet:
    if not 0 <= ell <= len(trace):
        raise ContractViolation(f"prefix length {ell} outside 0..{len(trace)}")
    return _replay(trace.selector, trace.steps[:ell])[0][-1]


def is_mute_prefix(trace: SoloTrace, ell: int) -> bool:
    """The set is empty after the first ``ell`` steps."""
    return prefix_state(trace, ell).empty


def mute_prefixes(trace: SoloTrace) -> list[int]:
    """Lengths of the non-empty mute prefixes."""
    states, _ = _replay(trace.selector, trace.steps)
    return [ell for ell in range(1, len(states)) if states[ell].empty]


def compute_f(trace: SoloTrace, ell: int) -> Item | None:
    """What a remove would return right after the ``ell``-prefix."""
    return prefix_state(trace, ell).peek()


def round_trip_items(steps: Sequence[TraceStep]) -> list[Item]:
    """Items both inserted and removed, in insertion order."""
    removed = {st.item for st in steps if st.op == REMOVE and st.item is not None}
    return [st.item for st in steps if st.op == INSERT and st.item in removed]


def compute_g(trace: SoloTrace) -> Item:
    """Last item out when the round-trip items are inserted in order and then drained."""
    items = round_trip_items(trace.steps)
    if not items:
        raise UndefinedG("no item is both inserted and removed in this trace")
    return ConsistentSet(trace.selector, tuple(items)).drain()[-1]


def _g_or_none(trace: SoloTrace) -> Item | None:
    try:
        return compute_g(trace)
    except UndefinedG:
        return None


@dataclass(frozen=True)
class BarrierAnalysis:
    f_at: dict[int, Item | None]
    g_other: Item | None        # g of the other trace, the item barriers are measured against
    barriers: frozenset[int]

    @property
    def largest(self) -> int | None:
        return max(self.barriers, default=None)


def find_barriers(trace: SoloTrace, other: SoloTrace) -> BarrierAnalysis:
    """Prefix lengths whose f-item loses to the other trace's g: F(f(l), g') = g'."""
    if trace.selector != other.selector:
        raise ContractViolation("both traces must run on the same selector")
    states, _ = _replay(trace.selector, trace.steps)
    f_at = {ell: st.peek() for ell, st in enumerate(states)}
    g = _g_or_none(other)
    if g is None:
        return BarrierAnalysis(f_at, None, frozenset())
    barriers = frozenset(ell for ell, f in f_at.items()
                         if f is not None and f != g and trace.selector((f, g)) == g)
    return BarrierAnalysis(f_at, g, barriers)


@dataclass(frozen=True)
class TrimResult:
    trace: tuple[TraceStep, ...]
    # original position and solo response of each dropped remove
    trimmed: tuple[tuple[int, Item], ...]


def trim(trace: SoloTrace, boundary: int) -> TrimResult:
    """Drop the first ``boundary`` steps and every later remove of an item inserted among them."""
    if not 0 <= boundary <= len(trace):
        raise ContractViolation(f"boundary {boundary} outside 0..{len(trace)}")
    early = {st.item for st in trace.steps[:boundary] if st.op == INSERT}
    kept, dropped = [], []
    for pos in range(boundary, len(trace)):
        st = trace.steps[pos]
        if st.op == REMOVE and st.item in early:
            dropped.append((pos, st.item))
        else:
            kept.append(st)
    return TrimResult(tuple(kept), tuple(dropped))


@dataclass(frozen=True)
class Decomposition:
    """P ends with the insert of g, Q ends with the remove returning g, R is the rest."""

    g: Item
    p_end: int   # P = steps[:p_end]
    q_end: int   # Q = steps[p_end:q_end], R = steps[q_end:]
    trimmed_q: tuple[int, ...]  # positions in Q whose remove returns an item inserted in P


def decompose(trace: SoloTrace) -> Decomposition:
    g = compute_g(trace)
    p_end = 1 + next(k for k, st in enumerate(trace.steps) if st.op == INSERT and st.item == g)
    q_end = 1 + next(k for k, st in enumerate(trace.steps) if st.op == REMOVE and st.item == g)
    in_p = {st.item for st in trace.steps[:p_end] if st.op == INSERT}
    trimmed = tuple(k for k in range(p_end, q_end)
                    if trace.steps[k].op == REMOVE and trace.steps[k].item in in_p)
    return Decomposition(g, p_end, q_end, trimmed)


# ---------------------------------------------------------------------------
# Generators and fixtures
# ---------------------------------------------------------------------------

def random_trace(selector: Selector, rng: random.Random, length: int, pid: int, *,
                 mute_free: bool = False, p_remove: float = 0.4,
                 priorities: Sequence[int] = (0, 1, 2, 3)) -> SoloTrace:
    """A random solo trace of exactly ``length`` steps with items owned by ``pid``.

    With ``mute_free`` the set never becomes empty after the first step, so
    the trace has no non-empty mute prefix.
    """
    s = ConsistentSet(selector)
    ops: list[Item | None] = []
    uid = 1000 * (pid + 1)
    for _ in range(length):
        floor = 1 if mute_free else 0
        if len(s) > floor and rng.random() < p_remove:
            s, _ = s.remove()
            ops.append(None)
        else:
            uid += 1
            it = Item(uid, VALUE, f"p{pid}.{uid % 1000}", inserter=pid, priority=rng.choice(priorities))
            s = s.insert(it)
            ops.append(it)
    return SoloTrace.from_ops(selector, ops)


def _named(uid: int, name: str, pid: int, priority: int) -> Item:
    return Item(uid, VALUE, name, inserter=pid, priority=priority)


def priority_barrier_example() -> tuple[SoloTrace, SoloTrace]:
    """Process 0 inserts low priorities then 2s; process 1 inserts 3s and 2s.

    Under a max-priority queue the low-priority prefix of process 0 is never
    seen by process 1, which is exactly a barrier.
    """
    a, b, c, d = (_named(1 + k, n, 0, q) for k, (n, q) in enumerate(zip("abcd", (1, 0, 2, 2))))
    x, y, z = (_named(11 + k, n, 1, q) for k, (n, q) in enumerate(zip("xyz", (3, 2, 2))))
    e0 = SoloTrace.from_ops(PRIORITY_MAX, [a, b, c, d, None])
    e1 = SoloTrace.from_ops(PRIORITY_MAX, [x, y, z, None, None])
    return e0, e1
