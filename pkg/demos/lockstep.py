"""Two candidates that look alike on a shared queue both win when run in lock step.

Ten straight-line candidates over empty queues (then stacks) are run alone to
get their signatures; two with the same pattern on the objects they share
are replayed in lock step and both decide 1.
"""

from __future__ import annotations

from conset.adversary import (
    certify_double_win,
    extract_signatures,
    random_family,
    select_conflict_pair,
)


def main() -> None:
    for kind in ("queue", "stack"):
        fam = random_family(kind, 10, seed=0)
        sigs = extract_signatures(fam, fam.isolation_bound)
        pair = select_conflict_pair(sigs)
        print(f"{kind}: pair p{pair.p.owner}/p{pair.q.owner} sharing {list(pair.shared)}")
        for sig in (pair.p, pair.q):
            print(f"    p{sig.owner}: {[f'{op} {obj}' for op, obj in sig.pattern(sig.footprint)]}")
        cert = certify_double_win(fam, pair, kind)
        print(f"    schedule {list(cert.schedule)} decisions {cert.decisions} double win={cert.double_win}")


if __name__ == "__main__":
    main()
