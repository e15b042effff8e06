"""Two-process consensus from one consistent set plus registers, and from two sets alone.

Every interleaving is explored.  The broken variant, where process 1
publishes its value before inserting W, is caught with a schedule that
replays to disagreement.
"""

from __future__ import annotations

from conset.executor import CONSENSUS_PROPERTIES, check_all_interleavings, run
from conset.objects import QUEUE, STACK, ConsistentSet, initial_items
from conset.protocols import (
    consensus2_registers,
    consensus2_registers_broken,
    consensus2_two_objects,
)


def summary(program, props=CONSENSUS_PROPERTIES) -> str:
    vs = check_all_interleavings(program, props)
    return ", ".join(f"{v.property}={v.status}" for v in vs) + f" ({vs[0].explored} schedules)"


def main() -> None:
    init = ConsistentSet(QUEUE, initial_items(["x", "y"]))
    print("registers + queue:", summary(consensus2_registers(5, 7, init)))

    for sel in (QUEUE, STACK):
        prog = consensus2_two_objects("a", "b", ConsistentSet(sel, initial_items("p")),
                                      ConsistentSet(sel, initial_items("q", start_uid=2)))
        print(f"two {sel.name}s ({prog.meta['variant']} markers):",
              summary(prog, CONSENSUS_PROPERTIES + ("register_freedom",)))

    broken = consensus2_registers_broken(0, 1, ConsistentSet(QUEUE))
    v = check_all_interleavings(broken, ("agreement",))[0]
    print("broken variant:", v.status, "schedule", list(v.counterexample))
    for e in run(broken, v.counterexample).trace:
        print(f"    p{e.pid} {e.action}" + (f" -> {e.response!r}" if e.response is not None else ""))


if __name__ == "__main__":
    main()
