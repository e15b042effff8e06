from __future__ import annotations

import pytest

from conset.executor import apply_step, check_all_interleavings, initial_state, run, solo_execution
from conset.objects import (
    PRIORITY_MAX,
    PRIORITY_MIN,
    QUEUE,
    STACK,
    ConsistentSet,
    ContractViolation,
    Item,
    initial_items,
    marker,
)
from conset.protocols import (
    ConfigurationError,
    MarkerRegistry,
    Read,
    RemoveFrom,
    Write,
    consensus2_queue_lucky,
    consensus2_registers,
    consensus2_registers_broken,
    consensus2_two_objects,
    lucky_state,
    marker_dominance,
    remlw,
    tas_lucky,
    tournament_tas,
)


def actions(solo):
    return [type(e.action).__name__ for e in solo.steps]


def test_marker_dominance():
    a, b = marker(1, "P", 0), marker(2, "Q", 0)
    assert marker_dominance(QUEUE, a, b) == a
    assert marker_dominance(STACK, a, b) == b
    lo, hi = marker(3, "P", 0, priority=2), marker(4, "Q", 0, priority=5)
    assert marker_dominance(PRIORITY_MAX, lo, hi) == hi == marker_dominance(PRIORITY_MAX, hi, lo)
    with pytest.raises(ContractViolation):
        marker_dominance(QUEUE, a, a)


def test_remlw_examples():
    reg = MarkerRegistry()
    p, q = marker(2, "P", "v"), marker(3, "Q", "v")
    reg.register_pair(QUEUE, p, q)
    s = ConsistentSet(QUEUE, (Item(1), p, q))
    s, r1 = remlw(s, reg)
    s, r2 = remlw(s, reg)
    s, r3 = remlw(s, reg)
    assert (r1.classification, r1.value) == ("W", "v")
    assert (r2.classification, r2.value) == ("L", "v")
    assert r3.is_null
    _, r = remlw(ConsistentSet(QUEUE, initial_items("ab")), reg)
    assert r.is_null


def test_remlw_unregistered_marker():
    with pytest.raises(ContractViolation):
        remlw(ConsistentSet(QUEUE, (marker(9, "P", 1),)), MarkerRegistry())


def test_registers_solo_runs():
    p = consensus2_registers(5, 7, ConsistentSet(QUEUE))
    s0 = solo_execution(p, 0)
    assert s0.decision == 5 and len(s0.memory_steps) == 2
    s1 = solo_execution(p, 1)
    assert actions(s1) == ["InsertTo", "Write", "Read", "RemoveFrom", "Decide"] and s1.decision == 7


def test_registers_solo_p1_drains_initial_items():
    init = initial_items("xyz")
    s = solo_execution(consensus2_registers(5, 7, ConsistentSet(QUEUE, init)), 1)
    removed = [e.response for e in s.steps if isinstance(e.action, RemoveFrom)]
    assert removed[:3] == list(init) and removed[3].marker == "W" and s.decision == 7


def test_registers_case_a_interleaving():
    # P0 writes and reads before P1 writes: P0 decides alone, P1 adopts its value
    p = consensus2_registers(5, 7, ConsistentSet(QUEUE))
    res = run(p, [0, 0, 0, 1, 1, 1, 1])
    assert res.decisions == {0: 5, 1: 5}


def sequential(program, order):
    """Run each process in ``order`` alone until it decides."""
    state = initial_state(program)
    for pid in order:
        while pid in state.undecided():
            state, _ = apply_step(program, state, pid)
    return state.decisions()


def test_two_objects_sequential_examples():
    p = consensus2_two_objects(5, 7, ConsistentSet(QUEUE), ConsistentSet(QUEUE))
    assert p.meta["variant"] == "pair"
    s0 = solo_execution(p, 0)
    assert s0.decision == 5
    assert not any(isinstance(e.action, (Read, Write)) for e in s0.steps)
    assert sequential(p, [0, 1]) == {0: 5, 1: 5}
    assert sequential(p, [1, 0]) == {0: 7, 1: 7}


def test_two_objects_stack_uses_single_marker():
    p = consensus2_two_objects(5, 7, ConsistentSet(STACK), ConsistentSet(STACK))
    assert p.meta["variant"] == "single"


@pytest.mark.parametrize("sel", [QUEUE, STACK, PRIORITY_MAX, PRIORITY_MIN])
def test_two_objects_all_selectors_small(sel):
    p = consensus2_two_objects("a", "b", ConsistentSet(sel, initial_items("x")),
                               ConsistentSet(sel, initial_items("y", start_uid=2)))
    vs = check_all_interleavings(p, ("agreement", "validity", "wait_freedom", "register_freedom"))
    assert all(v.passed for v in vs), [v.to_dict() for v in vs]


def test_lucky_state_needs_one_w():
    s = ConsistentSet(QUEUE, initial_items("ab"))
    with pytest.raises(ConfigurationError):
        tas_lucky(2, s)
    w = lucky_state(QUEUE).contents[0]
    with pytest.raises(ConfigurationError):
        tas_lucky(2, ConsistentSet(QUEUE, (w, marker(5, "W"))))


def test_tas_lucky_single_process():
    s = solo_execution(tas_lucky(1, lucky_state(QUEUE)), 0)
    assert s.length == 2 and s.decision == 1


def test_queue_lucky_rejects_stack():
    with pytest.raises(ConfigurationError):
        consensus2_queue_lucky(4, 9, lucky_state(STACK))


def test_queue_lucky_solo_and_loser_path():
    p = consensus2_queue_lucky(4, 9, lucky_state(QUEUE))
    assert solo_execution(p, 0).decision == 4
    res = run(p, [0, 1, 0, 0, 1, 1, 1, 1])
    assert res.decisions == {0: 4, 1: 4}
    removed = [e.response for e in res.per_process(1) if isinstance(e.action, RemoveFrom)]
    assert [it.payload for it in removed[:2]] == [4, 9] and removed[2] is None


def test_tournament_bounds():
    with pytest.raises(ConfigurationError):
        tournament_tas(1)
    with pytest.raises(ConfigurationError):
        tournament_tas(17)


@pytest.mark.parametrize("n", [2, 3, 5, 8])
def test_tournament_solo_within_bound(n):
    t = tournament_tas(n)
    for pid in range(n):
        s = solo_execution(t, pid)
        assert s.decision == 1 and s.length <= t.isolation_bound


def test_tournament_n2_is_one_block():
    t = tournament_tas(2)
    assert {oid.split(".O")[0] for oid in t.object_ids} == {"n0.0"}


@pytest.mark.parametrize("builder", ["two-objects", "set-plus-registers"])
def test_tournament_n3_exhaustive(builder):
    vs = check_all_interleavings(tournament_tas(3, builder), ("winner_uniqueness", "wait_freedom"))
    assert all(v.passed for v in vs)


def test_broken_registers_variant_loses_agreement():
    v = check_all_interleavings(consensus2_registers_broken(0, 1, ConsistentSet(QUEUE)), ("agreement",))[0]
    assert not v.passed
    res = run(consensus2_registers_broken(0, 1, ConsistentSet(QUEUE)), v.counterexample)
    assert len(set(res.decisions.values())) == 2
    # P0 drains to null before W is inserted
    p0_removes = [e for e in res.per_process(0) if isinstance(e.action, RemoveFrom)]
    first_w = next(k for k, e in enumerate(res.trace) if e.action.__class__.__name__ == "InsertTo")
    assert p0_removes and p0_removes[0].response is None
    assert res.trace.index(p0_removes[0]) < first_w
