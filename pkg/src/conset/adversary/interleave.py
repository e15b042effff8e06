"""Indistinguishable interleavings of two solo traces on one initially empty consistent set.

The construction is a structural recursion on the total number of steps:

* base: one trace is empty, run the other alone;
* mute: a trace has a non-empty prefix after which the set is empty again,
  run that prefix first;
* barrier: a prefix of trace j whose next item loses to the other trace's g,
  run the largest such prefix, interleave the trimmed remainder with the
  other trace, then merge the trimmed removes back in;
* blind: a trace with no removes observes nothing and goes last;
* pqr: split both traces around g into P, Q and R, interleave each part,
  run P, then Q with the trimmed removes merged back, then R.

Merging follows the recursive schedule's order where it can and slots the
trimmed removes in between.  That order can conflict with a process's own
order (the recursive schedule may put a step of process 1 before a trimmed
remove of process 1 that must wait for process 0), so the merge may run a
step early; such steps are counted.  Every placement is checked by replaying
the shared set, so a wrong step is never taken silently.
"""

from __future__ import annotations

import random
from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass, field

from conset.adversary.traces import (
    INSERT,
    REMOVE,
    SoloTrace,
    TraceStep,
    random_trace,
    round_trip_items,
)
from conset.objects import ConsistentSet, ContractViolation, Item, Selector

Ref = tuple[int, int]  # (process, index into its solo trace)

CASES = ("base", "mute", "barrier", "blind", "pqr")


class TheoremViolation(RuntimeError):
    """No indistinguishable continuation exists: the selector or the engine is broken."""

    def __init__(self, message: str, state: dict):
        super().__init__(message)
        self.state = state


class MalformedSchedule(ContractViolation):
    """A schedule does not interleave exactly the steps of the two traces."""


@dataclass(frozen=True)
class CaseEvent:
    case: str
    depth: int
    pid: int | None   # the process the case was applied to, if any
    sizes: tuple[int, int]
    detail: str = ""

    def to_dict(self) -> dict:
        d = {"case": self.case, "depth": self.depth, "sizes": list(self.sizes)}
        if self.pid is not None:
            d["pid"] = self.pid
        if self.detail:
            d["detail"] = self.detail
        return d


@dataclass
class InterleaveResult:
    schedule: tuple[Ref, ...]
    cases: list[CaseEvent] = field(default_factory=list)
    backtracks: int = 0
    out_of_order: int = 0  # merge steps taken ahead of the recursive schedule's order

    @property
    def top_case(self) -> str:
        return self.cases[0].case

    def coverage(self) -> Counter:
        return Counter(ev.case for ev in self.cases)


@dataclass(frozen=True)
class IndistinguishabilityVerdict:
    passed: bool
    # (schedule position, pid, index, solo response, shared response) of the first mismatch
    mismatch: tuple[int, int, int, Item | None, Item | None] | None = None

    def __bool__(self):
        return self.passed


def verify_indistinguishable(schedule: Sequence[Ref], e0: SoloTrace, e1: SoloTrace) -> IndistinguishabilityVerdict:
    """Replay the interleaving on one shared set; every remove must see its solo response."""
    traces = (e0, e1)
    if e0.selector != e1.selector:
        raise ContractViolation("both traces must run on the same selector")
    nxt = [0, 0]
    for pos, ref in enumerate(schedule):
        pid, idx = ref
        if pid not in (0, 1) or idx != nxt[pid]:
            raise MalformedSchedule(f"position {pos}: expected step {nxt[pid] if pid in (0, 1) else '?'} "
                                    f"of process {pid}, got {ref}")
        nxt[pid] += 1
    if nxt != [len(e0), len(e1)]:
        raise MalformedSchedule(f"schedule covers {nxt} steps, traces have {[len(e0), len(e1)]}")
    s = ConsistentSet(e0.selector)
    for pos, (pid, idx) in enumerate(schedule):
        st = traces[pid].steps[idx]
        if st.op == INSERT:
            s = s.insert(st.item)
        else:
            s, got = s.remove()
            if got != st.item:
                return IndistinguishabilityVerdict(False, (pos, pid, idx, st.item, got))
    return IndistinguishabilityVerdict(True)


class _Builder:
    def __init__(self, e0: SoloTrace, e1: SoloTrace, max_merge_states: int, allow_reorder: bool):
        self.traces = (e0, e1)
        self.sel: Selector = e0.selector
        self.cases: list[CaseEvent] = []
        self.backtracks = 0
        self.out_of_order = 0
        self.max_merge_states = max_merge_states
        self.allow_reorder = allow_reorder

    def step(self, ref: Ref) -> TraceStep:
        return self.traces[ref[0]].steps[ref[1]]

    def steps(self, seq: Sequence[Ref]) -> list[TraceStep]:
        return [self.step(r) for r in seq]

    def states(self, seq: Sequence[Ref]) -> list[ConsistentSet]:
        s = ConsistentSet(self.sel)
        out = [s]
        for r in seq:
            st = self.step(r)
            s = s.insert(st.item) if st.op == INSERT else s.remove()[0]
            out.append(s)
        return out

    def g(self, seq: Sequence[Ref]) -> Item | None:
        items = round_trip_items(self.steps(seq))
        if not items:
            return None
        return ConsistentSet(self.sel, tuple(items)).drain()[-1]

    def log(self, case, depth, pid, seqs, detail=""):
        self.cases.append(CaseEvent(case, depth, pid, (len(seqs[0]), len(seqs[1])), detail))

    # -- the recursion -----------------------------------------------------

    def build(self, seqs: tuple[list[Ref], list[Ref]], depth: int) -> list[Ref]:
        for j in (0, 1):
            if not seqs[j]:
                self.log("base", depth, j, seqs)
                return list(seqs[1 - j])

        for j in (0, 1):
            st = self.states(seqs[j])
            mute = [ell for ell in range(1, len(st)) if st[ell].empty]
            if mute:
                ell = mute[-1]
                self.log("mute", depth, j, seqs, f"prefix {ell}")
                rest = [seqs[0], seqs[1]]
                rest[j] = seqs[j][ell:]
                return list(seqs[j][:ell]) + self.build((rest[0], rest[1]), depth + 1)

        gs = (self.g(seqs[0]), self.g(seqs[1]))
        for j in (0, 1):
            g_other = gs[1 - j]
            if g_other is None:
                continue
            st = self.states(seqs[j])
            barriers = [ell for ell in range(1, len(st))
                        if self.sel((st[ell].peek(), g_other)) == g_other]
            if barriers:
                return self.barrier_case(seqs, j, barriers[-1], depth)

        for j in (0, 1):
            if all(self.step(r).op == INSERT for r in seqs[j]):
                self.log("blind", depth, j, seqs)
                return list(seqs[1 - j]) + list(seqs[j])

        return self.pqr_case(seqs, gs, depth)

    def barrier_case(self, seqs, j, ell, depth) -> list[Ref]:
        self.log("barrier", depth, j, seqs, f"largest barrier prefix {ell}")
        prefix = seqs[j][:ell]
        early = {self.step(r).item for r in prefix if self.step(r).op == INSERT}
        remainder = seqs[j][ell:]
        trimmed = {r for r in remainder if self.step(r).op == REMOVE and self.step(r).item in early}
        sub = [seqs[0], seqs[1]]
        sub[j] = [r for r in remainder if r not in trimmed]
        x = self.build((sub[0], sub[1]), depth + 1)
        own = [seqs[0], seqs[1]]
        own[j] = remainder
        start = self.states(prefix)[-1]
        merged = self.merge(start, x, own, trimmed, depth, "barrier")
        return list(prefix) + merged

    def pqr_case(self, seqs, gs, depth) -> list[Ref]:
        self.log("pqr", depth, None, seqs)
        parts = {"P": [], "Q": [], "Qt": [], "R": []}
        trimmed: set[Ref] = set()
        for i in (0, 1):
            seq, g = seqs[i], gs[i]
            p_end = 1 + next(k for k, r in enumerate(seq) if self.step(r) == TraceStep(INSERT, g))
            q_end = 1 + next(k for k, r in enumerate(seq) if self.step(r) == TraceStep(REMOVE, g))
            in_p = {self.step(r).item for r in seq[:p_end] if self.step(r).op == INSERT}
            q = seq[p_end:q_end]
            t = {r for r in q if self.step(r).op == REMOVE and self.step(r).item in in_p}
            trimmed |= t
            parts["P"].append(seq[:p_end])
            parts["Q"].append(q)
            parts["Qt"].append([r for r in q if r not in t])
            parts["R"].append(seq[q_end:])
        e_p = self.build(tuple(parts["P"]), depth + 1)
        e_q = self.build(tuple(parts["Qt"]), depth + 1)
        e_r = self.build(tuple(parts["R"]), depth + 1)
        start = self.states(e_p)[-1]
        merged = self.merge(start, e_q, parts["Q"], trimmed, depth, "pqr", tail=e_r)
        return e_p + merged + e_r

    # -- merging trimmed removes back in -----------------------------------

    def merge(self, start: ConsistentSet, x: list[Ref], own: Sequence[list[Ref]],
              trimmed: set[Ref], depth: int, case: str, tail: Sequence[Ref] = ()) -> list[Ref]:
        """Schedule every step of ``own`` (each process in its own order) after ``start``.

        The recursive schedule ``x`` is the guide: its next step is taken when
        the owning process is ready for it.  Otherwise a pending trimmed remove
        goes, and as a last resort a process runs its next step ahead of
        ``x``'s order, which can be forced when ``x`` puts a step of one
        process before a trimmed remove it depends on.  Every move is checked
        by replay, ``tail`` must still replay cleanly afterwards, and dead ends
        are backtracked (memoized on progress plus set contents).
        """
        order = {r: k for k, r in enumerate(x)}
        dead: set = set()
        out: list[Ref] = []
        visited = 0
        stats = {"out_of_order": 0}

        def replays(s, seq) -> bool:
            for r in seq:
                st = self.step(r)
                if st.op == INSERT:
                    s = s.insert(st.item)
                else:
                    s, got = s.remove()
                    if got != st.item:
                        return False
            return True

        def moves(t, s):
            pending = [own[p][t[p]] for p in (0, 1) if t[p] < len(own[p])]
            # earliest step of x not yet run; each process has run a prefix of its own steps
            guide = min((order[r] for p in (0, 1) for r in own[p][t[p]:] if r in order), default=None)
            ranked = []
            for r in pending:
                if guide is not None and order.get(r) == guide:
                    rank = 0
                elif r in trimmed:
                    rank = 1
                elif self.allow_reorder:
                    rank = 2
                else:
                    continue
                ranked.append((rank, r[0], r))
            ranked.sort()
            ok = []
            for rank, _, r in ranked:
                st = self.step(r)
                if st.op == INSERT:
                    ok.append((r, rank, s.insert(st.item)))
                else:
                    s2, got = s.remove()
                    if got == st.item:
                        ok.append((r, rank, s2))
            return ok

        def go(t, s) -> bool:
            nonlocal visited
            if all(t[p] == len(own[p]) for p in (0, 1)):
                return replays(s, tail)
            key = (t[0], t[1], tuple(it.uid for it in s.contents))
            if key in dead:
                return False
            visited += 1
            if visited > self.max_merge_states:
                raise TheoremViolation(f"merge search budget exhausted in {case} case at depth {depth}",
                                       {"case": case, "depth": depth})
            for k, (r, rank, s2) in enumerate(moves(t, s)):
                if k:
                    self.backtracks += 1
                t2 = list(t)
                t2[r[0]] += 1
                out.append(r)
                stats["out_of_order"] += rank == 2
                if go(t2, s2):
                    return True
                stats["out_of_order"] -= rank == 2
                out.pop()
            dead.add(key)
            return False

        if not go([0, 0], start):
            raise TheoremViolation(
                f"no indistinguishable merge in the {case} case at depth {depth}",
                {"case": case, "depth": depth, "start": list(start.contents),
                 "schedule": list(x), "trimmed": sorted(trimmed)})
        self.out_of_order += stats["out_of_order"]
        return out


def interleave_single_set(e0: SoloTrace, e1: SoloTrace, *, max_merge_states: int = 200_000,
                          allow_reorder: bool = True, verify: bool = True) -> InterleaveResult:
    """Interleave two solo traces so that neither process can tell it was not alone.

    With ``allow_reorder=False`` merges keep the recursive schedule's order
    strictly; some trace pairs then have no merge and raise TheoremViolation.
    """
    if e0.selector != e1.selector:
        raise ContractViolation("both traces must run on the same selector")
    b = _Builder(e0, e1, max_merge_states, allow_reorder)
    seqs = ([(0, k) for k in range(len(e0))], [(1, k) for k in range(len(e1))])
    sched = tuple(b.build(seqs, 0))
    result = InterleaveResult(sched, b.cases, b.backtracks, b.out_of_order)
    if verify:
        v = verify_indistinguishable(sched, e0, e1)
        if not v:
            raise TheoremViolation(f"constructed schedule is distinguishable at {v.mismatch}",
                                   {"schedule": list(sched), "mismatch": v.mismatch})
    return result


def random_trace_pair(selector: Selector, rng: random.Random, max_len: int = 8,
                      mute_free: bool | None = None) -> tuple[SoloTrace, SoloTrace]:
    """Two random solo traces with disjoint items; ``mute_free=None`` picks per trace."""
    out = []
    for pid in (0, 1):
        mf = rng.random() < 0.5 if mute_free is None else mute_free
        out.append(random_trace(selector, rng, rng.randint(0, max_len), pid, mute_free=mf))
    return out[0], out[1]
