"""Simulated linearizable shared objects.

A consistent set holds items in insertion order and answers ``remove()``
with the item picked by a fixed selection function over that sequence.
Queues, stacks and priority queues are all instances.  Registers and a
test-and-set cell complete the set of primitives.  Every object here is
an immutable value: operations return new states, which is what lets the
model checker and the adversaries branch and replay cheaply.
"""

from __future__ import annotations

import itertools
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from typing import Any


class ContractViolation(ValueError):
    """An operation was called outside its precondition."""


class SelectorError(ValueError):
    """A selection function is not total on the sequences it was asked about."""


# ---------------------------------------------------------------------------
# Items
# ---------------------------------------------------------------------------

INITIAL = "init"
MARKER = "marker"
VALUE = "value"


@dataclass(frozen=True, eq=False)
class Item:
    """An element of a consistent set.

    Identity is the ``uid``; tag, payload and priority are carried data, so
    two items with the same payload are still told apart.
    """

    uid: int
    tag: str = INITIAL
    payload: Any = None
    marker: str | None = None
    inserter: int | str = "init"
    priority: int = 0

    def __post_init__(self):
        if self.tag not in (INITIAL, MARKER, VALUE):
            raise ContractViolation(f"unknown item tag {self.tag!r}")
        if (self.tag == MARKER) != (self.marker is not None):
            raise ContractViolation("marker items need a prefix id, others must not have one")

    def __eq__(self, other):
        return isinstance(other, Item) and other.uid == self.uid

    def __hash__(self):
        return hash(self.uid)

    def __repr__(self):
        if self.tag == MARKER:
            head = self.marker if self.payload is None else f"{self.marker}:{self.payload!r}"
        elif self.tag == VALUE:
            head = f"val:{self.payload!r}"
        else:
            head = f"init:{self.payload!r}" if self.payload is not None else "init"
        if self.priority:
            head += f"^{self.priority}"
        return f"<{head}#{self.uid}>"

    @property
    def is_marker(self) -> bool:
        return self.tag == MARKER

    def to_dict(self) -> dict:
        d = {"uid": self.uid, "tag": self.tag}
        if self.payload is not None:
            d["payload"] = self.payload
        if self.marker is not None:
            d["marker"] = self.marker
        if self.inserter != "init":
            d["inserter"] = self.inserter
        if self.priority:
            d["priority"] = self.priority
        return d

    @classmethod
    def from_dict(cls, d: dict) -> Item:
        return cls(
            uid=d["uid"],
            tag=d.get("tag", INITIAL),
            payload=d.get("payload"),
            marker=d.get("marker"),
            inserter=d.get("inserter", "init"),
            priority=d.get("priority", 0),
        )


def marker(uid: int, prefix: str, payload: Any = None, inserter: int | str = "init",
           priority: int = 0) -> Item:
    return Item(uid, MARKER, payload, prefix, inserter, priority)


def initial_items(payloads: Iterable[Any], start_uid: int = 1,
                  priorities: Iterable[int] | None = None) -> tuple[Item, ...]:
    """Pre-inserted items with consecutive uids starting at ``start_uid``."""
    payloads = list(payloads)
    prios = list(priorities) if priorities is not None else [0] * len(payloads)
    return tuple(Item(start_uid + k, INITIAL, p, priority=q)
                 for k, (p, q) in enumerate(zip(payloads, prios, strict=True)))


def fresh_uid(*groups: Iterable[Item]) -> int:
    """Smallest uid larger than every uid in ``groups``."""
    return 1 + max((it.uid for g in groups for it in g), default=0)


# ---------------------------------------------------------------------------
# Selection functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Selector:
    """A named selection function: insertion-ordered items -> index of the removed one."""

    name: str
    select: Callable[[Sequence[Item]], int] = field(repr=False)

    def __call__(self, items: Sequence[Item]) -> Item:
        if not items:
            raise SelectorError(f"{self.name}: selection on an empty sequence")
        try:
            k = self.select(items)
        except Exception as exc:  # selectors are user code
            raise SelectorError(f"{self.name} failed on {list(items)}: {exc}") from exc
        if not isinstance(k, int) or not 0 <= k < len(items):
            raise SelectorError(f"{self.name} returned index {k!r} for {len(items)} items")
        return items[k]

    def __eq__(self, other):
        return isinstance(other, Selector) and other.name == self.name

    def __hash__(self):
        return hash(self.name)


def _max_priority(items):
    # ties go to the earliest insertion
    return max(range(len(items)), key=lambda k: (items[k].priority, -k))


def _min_priority(items):
    return min(range(len(items)), key=lambda k: (items[k].priority, k))


QUEUE = Selector("queue", lambda items: 0)
STACK = Selector("stack", lambda items: len(items) - 1)
PRIORITY_MAX = Selector("priority_max", _max_priority)
PRIORITY_MIN = Selector("priority_min", _min_priority)
# Not a consistent set; kept as a negative control for the validator.
SECOND_ELSE_FIRST = Selector("second_else_first", lambda items: 1 if len(items) >= 2 else 0)

BUILTIN_SELECTORS = (QUEUE, STACK, PRIORITY_MAX)
SELECTORS = {s.name: s for s in (QUEUE, STACK, PRIORITY_MAX, PRIORITY_MIN, SECOND_ELSE_FIRST)}


def get_selector(name: str) -> Selector:
    try:
        return SELECTORS[name]
    except KeyError:
        raise ContractViolation(f"unknown selector {name!r}; known: {sorted(SELECTORS)}") from None


# ---------------------------------------------------------------------------
# Consistent set
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConsistentSet:
    selector: Selector
    contents: tuple[Item, ...] = ()

    def __len__(self):
        return len(self.contents)

    @property
    def empty(self) -> bool:
        return not self.contents

    def insert(self, item: Item) -> ConsistentSet:
        if item in self.contents:
            raise ContractViolation(f"{item!r} is already in the set")
        return ConsistentSet(self.selector, self.contents + (item,))

    def remove(self) -> tuple[ConsistentSet, Item | None]:
        """Remove the selected item; ``None`` stands for null on an empty set."""
        if not self.contents:
            return self, None
        chosen = self.selector(self.contents)
        rest = tuple(it for it in self.contents if it.uid != chosen.uid)
        return ConsistentSet(self.selector, rest), chosen

    def peek(self) -> Item | None:
        """What a remove would return, without removing it."""
        return self.selector(self.contents) if self.contents else None

    def drain(self) -> list[Item]:
        out, s = [], self
        while s.contents:
            s, it = s.remove()
            out.append(it)
        return out


def insert(state: ConsistentSet, item: Item) -> ConsistentSet:
    return state.insert(item)


def remove(state: ConsistentSet) -> tuple[ConsistentSet, Item | None]:
    return state.remove()


@dataclass(frozen=True)
class SetOp:
    """One serial call on a consistent set: ``insert(item)`` or ``remove()``."""

    kind: str
    item: Item | None = None

    def __post_init__(self):
        if self.kind not in ("insert", "remove"):
            raise ContractViolation(f"unknown op kind {self.kind!r}")
        if (self.kind == "insert") != (self.item is not None):
            raise ContractViolation("insert carries an item, remove does not")


def ins(item: Item) -> SetOp:
    return SetOp("insert", item)


REM = SetOp("remove")


def replay(selector: Selector, ops: Iterable[SetOp],
           initial: Sequence[Item] = ()) -> tuple[list[Item | None], ConsistentSet]:
    """Run ``ops`` serially; returns the per-op responses (None for inserts) and the final state."""
    s = ConsistentSet(selector, tuple(initial))
    out: list[Item | None] = []
    for op in ops:
        if op.kind == "insert":
            s = s.insert(op.item)
            out.append(None)
        else:
            s, got = s.remove()
            out.append(got)
    return out, s


# ---------------------------------------------------------------------------
# Checks on selection functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SelectorVerdict:
    selector: str
    passed: bool
    sequences_checked: int
    # two sequences that disagree about an ordered pair (first, second)
    witness: tuple[tuple[Item, ...], tuple[Item, ...]] | None = None
    pair: tuple[Item, Item] | None = None

    def __bool__(self):
        return self.passed


def validate_selector(selector: Selector, universe: Sequence[Item],
                      max_len: int = 6) -> SelectorVerdict:
    """Brute-force check of both consistency properties.

    For every ordered pair (a before b) all sequences of distinct items from
    ``universe`` up to ``max_len`` long that contain a then b and select one
    of them must select the same one.
    """
    if max_len > 6:
        raise ContractViolation("max_len above 6 is too large for exhaustive enumeration")
    seen: dict[tuple[int, int], tuple[Item, tuple[Item, ...]]] = {}
    checked = 0
    for length in range(1, min(max_len, len(universe)) + 1):
        for seq in itertools.permutations(universe, length):
            checked += 1
            win = selector(seq)
            w = seq.index(win)
            for k, other in enumerate(seq):
                if k == w:
                    continue
                key = (win.uid, other.uid) if w < k else (other.uid, win.uid)
                prev = seen.get(key)
                if prev is None:
                    seen[key] = (win, seq)
                elif prev[0] != win:
                    a, b = (seq[w], seq[k]) if w < k else (seq[k], seq[w])
                    return SelectorVerdict(selector.name, False, checked, (prev[1], seq), (a, b))
    return SelectorVerdict(selector.name, True, checked)


@dataclass(frozen=True)
class InvarianceVerdict:
    passed: bool
    original: tuple[Item | None, ...]
    reduced: tuple[Item | None, ...]
    mismatch: int | None = None  # position in the original op list

    def __bool__(self):
        return self.passed


def removal_invariance_check(selector: Selector, ops: Sequence[SetOp], s: Item) -> InvarianceVerdict:
    """Delete ``insert(s)`` and the remove that returned ``s``; all other removes must be unchanged."""
    responses, _ = replay(selector, ops)
    try:
        i_ins = next(k for k, op in enumerate(ops) if op.kind == "insert" and op.item == s)
        i_rem = next(k for k, (op, r) in enumerate(zip(ops, responses))
                     if op.kind == "remove" and r == s)
    except StopIteration:
        raise ContractViolation(f"{s!r} is not both inserted and removed in the execution") from None
    keep = [k for k in range(len(ops)) if k not in (i_ins, i_rem)]
    reduced, _ = replay(selector, [ops[k] for k in keep])
    before = tuple(responses[k] for k in keep)
    for pos, (a, b) in zip(keep, zip(before, reduced)):
        if ops[pos].kind == "remove" and a != b:
            return InvarianceVerdict(False, before, tuple(reduced), pos)
    return InvarianceVerdict(True, before, tuple(reduced))


# ---------------------------------------------------------------------------
# Registers
# ---------------------------------------------------------------------------

class _Bottom:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "⊥"

    def __reduce__(self):
        return (_Bottom, ())


BOTTOM = _Bottom()


@dataclass(frozen=True)
class RegisterBank:
    cells: tuple[tuple[str, Any], ...] = ()

    @classmethod
    def of(cls, names: Iterable[str] = (), **values) -> RegisterBank:
        d = {n: BOTTOM for n in names}
        d.update(values)
        return cls(tuple(sorted(d.items())))

    def read(self, name: str) -> Any:
        for k, v in self.cells:
            if k == name:
                return v
        return BOTTOM

    def write(self, name: str, value: Any) -> RegisterBank:
        d = dict(self.cells)
        d[name] = value
        return RegisterBank(tuple(sorted(d.items())))

    def names(self) -> list[str]:
        return [k for k, _ in self.cells]


def register_read(bank: RegisterBank, name: str) -> Any:
    return bank.read(name)


def register_write(bank: RegisterBank, name: str, value: Any) -> RegisterBank:
    return bank.write(name, value)


# ---------------------------------------------------------------------------
# Test-and-set cell
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TASCell:
    """A test-and-set bit: the first call returns 1, every later call 0."""

    won: bool = False

    def test_and_set(self) -> tuple[TASCell, int]:
        if self.won:
            return self, 0
        return TASCell(True), 1
