from __future__ import annotations

import itertools
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conset.objects import (
    BOTTOM,
    BUILTIN_SELECTORS,
    PRIORITY_MAX,
    PRIORITY_MIN,
    QUEUE,
    REM,
    SECOND_ELSE_FIRST,
    STACK,
    ConsistentSet,
    ContractViolation,
    Item,
    RegisterBank,
    TASCell,
    fresh_uid,
    get_selector,
    initial_items,
    ins,
    marker,
    register_read,
    register_write,
    removal_invariance_check,
    replay,
    validate_selector,
)

UNIVERSE = initial_items([f"u{k}" for k in range(6)], priorities=(0, 1, 1, 2, 2, 3))


def oracle_pick(name, items):
    """Independent reference for each built-in selection rule."""
    if name == "queue":
        return items[0]
    if name == "stack":
        return items[-1]
    if name == "priority_max":
        return sorted(enumerate(items), key=lambda t: (-t[1].priority, t[0]))[0][1]
    if name == "priority_min":
        return sorted(enumerate(items), key=lambda t: (t[1].priority, t[0]))[0][1]
    raise KeyError(name)


def test_item_identity_is_uid():
    a = Item(1, payload="x")
    b = Item(1, payload="y")
    assert a == b and hash(a) == hash(b)
    assert Item(2, payload="x") != a


def test_item_round_trip():
    it = marker(7, "W", payload=3, inserter=1, priority=2)
    back = Item.from_dict(it.to_dict())
    assert back == it and back.marker == "W" and back.priority == 2 and back.is_marker


def test_item_tag_checks():
    with pytest.raises(ContractViolation):
        Item(1, tag="bogus")
    with pytest.raises(ContractViolation):
        Item(1, tag="marker")


def test_fresh_uid():
    assert fresh_uid() == 1
    assert fresh_uid(initial_items("abc"), [Item(10)]) == 11


def test_get_selector_unknown():
    with pytest.raises(ValueError):
        get_selector("heap")


def test_double_insert_rejected():
    s = ConsistentSet(QUEUE).insert(Item(1))
    with pytest.raises(ContractViolation):
        s.insert(Item(1))


def test_remove_on_empty_is_null():
    s = ConsistentSet(STACK)
    s2, got = s.remove()
    assert got is None and s2.empty


@pytest.mark.parametrize("sel,order", [
    (QUEUE, [1, 2, 3, 4]),
    (STACK, [4, 3, 2, 1]),
    (PRIORITY_MAX, [2, 3, 4, 1]),
    (PRIORITY_MIN, [1, 4, 2, 3]),
])
def test_drain_order(sel, order):
    items = initial_items("abcd", priorities=(0, 5, 5, 1))
    assert [it.uid for it in ConsistentSet(sel, items).drain()] == order


@pytest.mark.parametrize("sel", [QUEUE, STACK, PRIORITY_MAX, PRIORITY_MIN])
@given(data=st.data())
def test_selectors_match_oracle(sel, data):
    k = data.draw(st.integers(1, 6))
    prios = data.draw(st.lists(st.integers(0, 3), min_size=k, max_size=k))
    items = initial_items(range(k), priorities=prios)
    assert sel(items) == oracle_pick(sel.name, items)
    assert ConsistentSet(sel, items).peek() == oracle_pick(sel.name, items)


def test_validate_sequence_count_frozen():
    # every permutation of 1..6 of the 6 items, counted by brute force once
    expected = sum(1 for n in range(1, 7) for _ in itertools.permutations(range(6), n))
    assert expected == 1956 == sum(math.perm(6, n) for n in range(1, 7))
    for sel in (*BUILTIN_SELECTORS, PRIORITY_MIN):
        v = validate_selector(sel, UNIVERSE, max_len=6)
        assert v.passed and v.sequences_checked == 1956 and v.witness is None


def test_validate_adversarial_witness_is_real():
    v = validate_selector(SECOND_ELSE_FIRST, UNIVERSE, max_len=6)
    assert not v.passed
    a, b = v.pair
    s1, s2 = v.witness
    picks = set()
    for seq in (s1, s2):
        assert a in seq and b in seq and seq.index(a) < seq.index(b)
        picks.add(SECOND_ELSE_FIRST(seq))
    assert picks == {a, b}


def test_validate_rejects_long_sequences():
    with pytest.raises(ContractViolation):
        validate_selector(QUEUE, UNIVERSE, max_len=7)


def test_replay_with_initial():
    it = initial_items("ab")
    c = Item(3)
    out, s = replay(STACK, [ins(c), REM, REM], initial=it)
    assert out == [None, c, it[1]] and s.contents == (it[0],)


def test_removal_invariance_queue_example():
    a, b, c = initial_items("abc")
    ops = [ins(a), ins(b), REM, ins(c), REM]
    v = removal_invariance_check(QUEUE, ops, a)
    assert v.passed
    assert v.original == (None, None, b) and v.reduced == (None, None, b)


def test_removal_invariance_requires_round_trip():
    a, b = initial_items("ab")
    with pytest.raises(ContractViolation):
        removal_invariance_check(QUEUE, [ins(a), ins(b), REM], b)


def random_execution(sel, rng, length=12):
    ops, uid, size = [], 0, 0
    for _ in range(length):
        if size and rng.random() < 0.45:
            ops.append(REM)
            size -= 1
        else:
            uid += 1
            ops.append(ins(Item(uid, payload=uid, priority=rng.randrange(4))))
            size += 1
    return ops


@pytest.mark.parametrize("sel", [QUEUE, STACK, PRIORITY_MAX, PRIORITY_MIN])
def test_removal_invariance_random(sel):
    rng = random.Random(11)
    checked = 0
    for _ in range(300):
        ops = random_execution(sel, rng)
        responses, _ = replay(sel, ops)
        for s in {r for r in responses if r is not None}:
            assert removal_invariance_check(sel, ops, s).passed
            checked += 1
    assert checked > 300


def test_adversary_breaks_invariance_somewhere():
    rng = random.Random(5)
    found = False
    for _ in range(200):
        ops = random_execution(SECOND_ELSE_FIRST, rng)
        responses, _ = replay(SECOND_ELSE_FIRST, ops)
        if any(not removal_invariance_check(SECOND_ELSE_FIRST, ops, s).passed
               for s in {r for r in responses if r is not None}):
            found = True
            break
    assert found


def test_registers():
    bank = RegisterBank.of(["A", "B"])
    assert register_read(bank, "A") is BOTTOM
    bank2 = register_write(bank, "A", 3)
    assert bank2.read("A") == 3 and bank.read("A") is BOTTOM
    assert bank2.names() == ["A", "B"]
    assert bank2.read("missing") is BOTTOM


def test_tas_cell():
    c, r1 = TASCell().test_and_set()
    c, r2 = c.test_and_set()
    assert (r1, r2) == (1, 0)
