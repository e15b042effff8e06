"""An n-process test-and-set from a tournament of two-process blocks.

Exhaustive at n = 3, seeded random schedules at n = 8, and the solo run
length against the declared isolation bound.
"""

from __future__ import annotations

from conset.executor import check_all_interleavings, check_random_schedules, solo_execution
from conset.protocols import tournament_tas


def main() -> None:
    t3 = tournament_tas(3)
    for v in check_all_interleavings(t3, ("winner_uniqueness", "tas_linearization")):
        print(f"n=3 {v.property}: {v.status} over {v.explored} schedules")
    t8 = tournament_tas(8)
    rc = check_random_schedules(t8, 2000, seed=4)
    print("n=8 random:", {v.property: v.status for v in rc.verdicts})
    for n, t in ((3, t3), (8, t8)):
        longest = max(solo_execution(t, p).length for p in range(n))
        print(f"n={n}: longest solo run {longest}, bound M={t.isolation_bound}")


if __name__ == "__main__":
    main()
