"""Executable versions of the two impossibility constructions."""

from conset.adversary.interleave import (
    CASES,
    CaseEvent,
    IndistinguishabilityVerdict,
    InterleaveResult,
    MalformedSchedule,
    TheoremViolation,
    interleave_single_set,
    random_trace_pair,
    verify_indistinguishable,
)
from conset.adversary.traces import (
    BarrierAnalysis,
    Decomposition,
    SoloTrace,
    TraceStep,
    TrimResult,
    UndefinedG,
    compute_f,
    compute_g,
    decompose,
    find_barriers,
    is_mute_prefix,
    mute_prefixes,
    priority_barrier_example,
    random_trace,
    trim,
)
from conset.adversary.lockstep import (
    ConflictPair,
    IsolationBoundViolation,
    LockstepCertificate,
    Signature,
    certify_double_win,
    extract_signatures,
    lockstep_schedule,
    partition_signatures,
    random_family,
    scripted_family,
    select_conflict_pair,
)
