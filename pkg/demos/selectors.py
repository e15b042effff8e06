"""Which selection functions make a consistent set?

Queues, stacks and priority queues pass the brute-force consistency check.
A selector that returns the second item when there is one does not, and the
checker prints the two sequences that disagree.
"""

from __future__ import annotations

from conset.objects import (
    BUILTIN_SELECTORS,
    SECOND_ELSE_FIRST,
    ConsistentSet,
    initial_items,
    validate_selector,
)


def main() -> None:
    universe = initial_items([f"u{k}" for k in range(6)], priorities=(0, 1, 1, 2, 2, 3))
    for sel in (*BUILTIN_SELECTORS, SECOND_ELSE_FIRST):
        v = validate_selector(sel, universe, max_len=6)
        print(f"{sel.name:18s} consistent={v.passed}  sequences={v.sequences_checked}")
        if not v.passed:
            a, b = v.pair
            for seq in v.witness:
                print(f"    {[it.payload for it in seq]} -> {sel(seq).payload}")
            print(f"    the pair ({a.payload}, {b.payload}) has no fixed winner")

    # the same four items drained under each rule
    items = initial_items("abcd", priorities=(0, 5, 5, 1))
    for sel in BUILTIN_SELECTORS:
        print(sel.name, [it.payload for it in ConsistentSet(sel, items).drain()])


if __name__ == "__main__":
    main()
