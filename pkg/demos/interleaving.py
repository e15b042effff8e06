"""Two solo runs on one shared set, interleaved so neither process notices.

The priority-queue fixture takes the barrier case: process 0's low-priority
prefix can never be seen by process 1, so it runs first.  Then a batch of
random pairs shows which recursion cases each selector exercises.
"""

from __future__ import annotations

import random
from collections import Counter

from conset.adversary import (
    find_barriers,
    interleave_single_set,
    priority_barrier_example,
    random_trace_pair,
    verify_indistinguishable,
)
from conset.objects import BUILTIN_SELECTORS


def main() -> None:
    e0, e1 = priority_barrier_example()
    print("E0:", list(e0.steps))
    print("E1:", list(e1.steps))
    print("barriers of E0 against E1:", sorted(find_barriers(e0, e1).barriers))
    res = interleave_single_set(e0, e1)
    print("cases:", [f"{ev.case}@{ev.depth}" for ev in res.cases])
    print("schedule:", [f"p{p}.{k}" for p, k in res.schedule])
    print("indistinguishable:", verify_indistinguishable(res.schedule, e0, e1).passed)

    for sel in BUILTIN_SELECTORS:
        rng = random.Random(1)
        cov, moved = Counter(), 0
        for _ in range(300):
            r = interleave_single_set(*random_trace_pair(sel, rng, 8))
            cov.update(r.coverage())
            moved += r.out_of_order
        print(f"{sel.name:13s} {dict(sorted(cov.items()))}  out-of-order merge steps: {moved}")


if __name__ == "__main__":
    main()
