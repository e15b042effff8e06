"""Canonical JSON encoding of traces, schedules and reports.

Reports are written with sorted keys and fixed indentation and carry no
wall-clock data, so the same scenario and seed always give the same bytes.
"""

from __future__ import annotations

import json
from collections.abc import Iterable
from typing import Any

from conset.objects import BOTTOM, Item
from conset.protocols import Decide, InsertTo, Read, RemoveFrom, Write

REPORT_SCHEMA = "conset-report/1"


def value_to_json(v: Any) -> Any:
    if v is BOTTOM:
        return {"bottom": True}
    if isinstance(v, Item):
        return {"item": v.to_dict()}
    if isinstance(v, (list, tuple)):
        return [value_to_json(x) for x in v]
    if isinstance(v, dict):
        return {str(k): value_to_json(x) for k, x in v.items()}
    if v is None or isinstance(v, (bool, int, float, str)):
        return v
    return repr(v)


def action_to_json(act) -> dict:
    if isinstance(act, InsertTo):
        return {"op": "insert", "obj": act.obj, "item": act.item.to_dict()}
    if isinstance(act, RemoveFrom):
        return {"op": "remove", "obj": act.obj}
    if isinstance(act, Read):
        return {"op": "read", "reg": act.reg}
    if isinstance(act, Write):
        return {"op": "write", "reg": act.reg, "value": value_to_json(act.value)}
    if isinstance(act, Decide):
        return {"op": "decide", "value": value_to_json(act.value)}
    raise TypeError(f"unknown action {act!r}")


def trace_to_json(entries: Iterable) -> list[dict]:
    """Executor trace entries as plain dicts; remove responses of null are ``None``."""
    out = []
    for e in entries:
        d = {"pid": e.pid, "action": action_to_json(e.action)}
        if isinstance(e.action, (RemoveFrom, Read)):
            d["response"] = value_to_json(e.response)
        out.append(d)
    return out


def dumps(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def overall_status(statuses: Iterable[str]) -> str:
    """fail beats inconclusive beats pass."""
    statuses = list(statuses)
    if "fail" in statuses:
        return "fail"
    if "inconclusive" in statuses:
        return "inconclusive"
    return "pass"
