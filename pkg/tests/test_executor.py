from __future__ import annotations

import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conset.executor import (
    FAIL,
    INCONCLUSIVE,
    PASS,
    NonTermination,
    ScheduleError,
    check_all_interleavings,
    check_random_schedules,
    check_tas_linearization,
    count_schedules_brute,
    initial_state,
    linearizable_tas,
    run,
    solo_execution,
)
from conset.objects import QUEUE, STACK, ConsistentSet, initial_items
from conset.protocols import (
    Decide,
    ProtocolProgram,
    RemoveFrom,
    consensus2_registers,
    consensus2_registers_broken,
    lucky_state,
    tas_lucky,
)


def by_prop(verdicts):
    return {v.property: v for v in verdicts}


def pid_zero_wins(n: int = 2) -> ProtocolProgram:
    """Winner-unique but not linearizable: process 0 wins even if it starts last."""

    def step(pid, local, resp):
        return Decide(1 if pid == 0 else 0), local

    return ProtocolProgram("pid_zero_wins", "tas", n, step, ((),) * n, {})


def spinner() -> ProtocolProgram:
    def step(pid, local, resp):
        return RemoveFrom("O"), local

    return ProtocolProgram("spinner", "tas", 2, step, ((), ()), {"O": ConsistentSet(QUEUE)})


def test_empty_schedule_leaves_state():
    p = consensus2_registers(0, 1, ConsistentSet(QUEUE))
    assert run(p, []).state == initial_state(p)


def test_solo_schedule_matches_solo_execution():
    p = consensus2_registers(0, 1, ConsistentSet(QUEUE, initial_items("ab")))
    solo = solo_execution(p, 1)
    assert tuple(run(p, [1] * solo.length).trace) == solo.steps


def test_decided_process_cannot_move():
    p = consensus2_registers(0, 1, ConsistentSet(QUEUE))
    with pytest.raises(ScheduleError):
        run(p, [0, 0, 0, 0])
    with pytest.raises(ScheduleError):
        run(p, [2])


def test_solo_execution_tas_lucky():
    s = solo_execution(tas_lucky(2, lucky_state(QUEUE)), 0)
    assert [type(e.action).__name__ for e in s.steps] == ["RemoveFrom", "Decide"]
    assert s.steps[0].response.marker == "W" and s.decision == 1


def test_solo_nontermination():
    with pytest.raises(NonTermination):
        solo_execution(spinner(), 0, max_steps=10)


def test_registers_empty_queue_all_pass():
    vs = by_prop(check_all_interleavings(consensus2_registers(5, 7, ConsistentSet(QUEUE))))
    assert set(vs) == {"agreement", "validity", "wait_freedom"}
    assert all(v.status == PASS for v in vs.values())
    assert vs["agreement"].explored == count_schedules_brute(consensus2_registers(5, 7, ConsistentSet(QUEUE)))


def test_schedule_counts_frozen():
    # each tas_lucky process from [W] takes exactly two steps, so every
    # interleaving of 2-step sequences is a distinct complete schedule
    assert count_schedules_brute(tas_lucky(2, lucky_state(QUEUE))) == math.comb(4, 2) == 6
    assert count_schedules_brute(tas_lucky(3, lucky_state(QUEUE))) == math.factorial(6) // 8 == 90
    for n, want in ((2, 6), (3, 90)):
        v = check_all_interleavings(tas_lucky(n, lucky_state(QUEUE)))[0]
        assert v.explored == want


@pytest.mark.parametrize("sel", [QUEUE, STACK])
@pytest.mark.parametrize("k", [0, 1, 2])
def test_memo_matches_plain_dfs(sel, k):
    p = consensus2_registers(0, 1, ConsistentSet(sel, initial_items(range(k))))
    a = check_all_interleavings(p, memoize=True)
    b = check_all_interleavings(p, memoize=False)
    assert [(v.property, v.status, v.explored) for v in a] == [(v.property, v.status, v.explored) for v in b]
    assert a[0].explored == count_schedules_brute(p)
    assert a[0].states <= b[0].states


def test_broken_variant_counterexample_replays():
    p = consensus2_registers_broken(0, 1, ConsistentSet(QUEUE))
    v = by_prop(check_all_interleavings(p))["agreement"]
    assert v.status == FAIL and v.counterexample
    again = run(p, v.counterexample)
    assert len(set(again.decisions.values())) == 2
    assert v.to_dict()["counterexample"] == list(v.counterexample)
    # deterministic exploration: same counterexample every time
    assert by_prop(check_all_interleavings(p))["agreement"].counterexample == v.counterexample


def test_step_bound_is_inconclusive():
    vs = check_all_interleavings(consensus2_registers(0, 1, ConsistentSet(QUEUE)), max_steps=1)
    assert all(v.status == INCONCLUSIVE for v in vs)


def test_state_budget_is_inconclusive():
    vs = check_all_interleavings(tas_lucky(3, lucky_state(QUEUE, ["a"], ["b"])), max_states=5)
    assert all(v.status == INCONCLUSIVE for v in vs)


def test_unknown_property():
    with pytest.raises(ValueError):
        check_all_interleavings(tas_lucky(2, lucky_state(QUEUE)), ("liveness",))


def test_register_freedom_flags_registers():
    v = check_all_interleavings(consensus2_registers(0, 1, ConsistentSet(QUEUE)), ("register_freedom",))[0]
    assert v.status == FAIL and v.counterexample == (0,)


def test_linearizable_tas_examples():
    # A finishes with 1, then B runs: B returning 0 is fine, 1 is not
    assert linearizable_tas([("inv", 0), ("res", 0, 1), ("inv", 1), ("res", 1, 0)], 2)
    assert not linearizable_tas([("inv", 0), ("res", 0, 1), ("inv", 1), ("res", 1, 1)], 2)
    # a loser that finished before the winner started cannot be linearized
    assert not linearizable_tas([("inv", 1), ("res", 1, 0), ("inv", 0), ("res", 0, 1)], 2)
    assert linearizable_tas([("inv", 1), ("inv", 0), ("res", 1, 0), ("res", 0, 1)], 2)


def brute_linearizable(history):
    """Reference: try every order of the calls against real-time precedence."""
    inv = {e[1]: t for t, e in enumerate(history) if e[0] == "inv"}
    res = {e[1]: (t, e[2]) for t, e in enumerate(history) if e[0] == "res"}
    for order in itertools.permutations(inv):
        if any(q in res and res[q][0] < inv[p]
               for i, p in enumerate(order) for q in order[i + 1:]):
            continue
        if all(res[p][1] == (1 if i == 0 else 0) for i, p in enumerate(order) if p in res):
            return True
    return False


@st.composite
def histories(draw):
    n = draw(st.integers(1, 3))
    events = [("inv", p) for p in range(n)] + [("res", p) for p in range(n)]
    order = draw(st.permutations(events))
    # responses come after their invocation
    fixed, seen = [], set()
    pending = list(order)
    while pending:
        for k, e in enumerate(pending):
            if e[0] == "inv" or e[1] in seen:
                pending.pop(k)
                if e[0] == "inv":
                    seen.add(e[1])
                    fixed.append(e)
                else:
                    fixed.append(("res", e[1], draw(st.integers(0, 1))))
                break
    return fixed, n


@settings(max_examples=300)
@given(histories())
def test_linearizable_tas_matches_brute_force(h):
    hist, n = h
    assert linearizable_tas(hist, n) == brute_linearizable(hist)


def test_tas_linearization_catches_pid_zero_wins():
    p = pid_zero_wins()
    assert check_all_interleavings(p, ("winner_uniqueness",))[0].status == PASS
    v = check_tas_linearization(p)
    assert v.status == FAIL and v.counterexample == (1, 0)


def test_tas_linearization_requires_tas():
    with pytest.raises(ValueError):
        check_tas_linearization(consensus2_registers(0, 1, ConsistentSet(QUEUE)))


def test_tas_lucky_n3_linearizable():
    p = tas_lucky(3, lucky_state(QUEUE, ["x"], ["y"]))
    assert check_tas_linearization(p).status == PASS
    assert all(v.passed for v in check_all_interleavings(p))


def test_random_schedules_seeded():
    p = tas_lucky(3, lucky_state(QUEUE, ["x"], ["y"]))
    a = check_random_schedules(p, 200, seed=3)
    b = check_random_schedules(p, 200, seed=3)
    assert [v.to_dict() for v in a.verdicts] == [v.to_dict() for v in b.verdicts]
    assert all(v.passed for v in a.verdicts) and a.schedules == 200


def test_random_schedules_find_broken_variant():
    rc = check_random_schedules(consensus2_registers_broken(0, 1, ConsistentSet(QUEUE)), 500, seed=1)
    v = {v.property: v for v in rc.verdicts}["agreement"]
    assert v.status == FAIL
    assert len(set(run(consensus2_registers_broken(0, 1, ConsistentSet(QUEUE)), v.counterexample)
                   .decisions.values())) == 2
