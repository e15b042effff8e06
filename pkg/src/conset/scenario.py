"""Scenario files: schema, validation and construction of the objects they describe.

A scenario is a JSON document with a ``schema`` version tag and a
``command``.  Unknown fields are rejected.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import jsonschema

from conset.adversary.traces import INSERT, REMOVE, SoloTrace, priority_barrier_example
from conset.objects import VALUE, ConsistentSet, Item, get_selector, initial_items
from conset.protocols import (
    TOURNAMENT_BUILDERS,
    ProtocolProgram,
    consensus2_queue_lucky,
    consensus2_registers,
    consensus2_registers_broken,
    consensus2_two_objects,
    lucky_state,
    tas_lucky,
    tournament_tas,
)

SCENARIO_SCHEMA_ID = "conset-scenario/1"
DEFAULT_SEED = 20240229

PROTOCOLS = ("consensus2_registers", "consensus2_registers_broken", "consensus2_two_objects",
             "tas_lucky", "consensus2_queue_lucky", "tournament_tas")


class ScenarioError(ValueError):
    """The scenario file is unreadable, fails the schema, or is inconsistent."""


_item = {
    "oneOf": [
        {"type": ["string", "integer", "number", "boolean", "null"]},
        {"type": "object", "additionalProperties": False,
         "properties": {"payload": {}, "priority": {"type": "integer"}}},
    ]
}
_payloads = {"type": "array", "items": {"type": ["string", "integer", "number", "boolean", "null"]}}
_step = {
    "type": "object", "additionalProperties": False, "required": ["op"],
    "properties": {
        "op": {"enum": [INSERT, REMOVE]},
        "uid": {"type": "integer"},
        "payload": {},
        "priority": {"type": "integer"},
    },
}
_common = {
    "schema": {"const": SCENARIO_SCHEMA_ID},
    "command": {},
    "seed": {"type": "integer", "minimum": 0},
    "max_steps": {"type": "integer", "minimum": 1},
    "description": {"type": "string"},
}


def _cmd(name: str, required: list[str], props: dict) -> dict:
    return {
        "if": {"properties": {"command": {"const": name}}},
        "then": {"additionalProperties": False, "required": ["schema", "command", *required],
                 "properties": {**_common, **props}},
    }


SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "command"],
    "properties": {"command": {"enum": ["check", "interleave", "lockstep", "validate-f"]}},
    "allOf": [
        _cmd("check", ["protocol"], {
            "protocol": {"enum": list(PROTOCOLS)},
            "selector": {"type": "string"},
            "inputs": {"type": "array", "minItems": 2, "maxItems": 2},
            "n": {"type": "integer", "minimum": 1},
            "initial": {"type": "array", "items": _item},
            "initial1": {"type": "array", "items": _item},
            "lucky": {"type": "object", "additionalProperties": False,
                      "properties": {"before": _payloads, "after": _payloads}},
            "builder": {"enum": list(TOURNAMENT_BUILDERS)},
            "properties": {"type": "array", "items": {"type": "string"}},
            "random_schedules": {"type": "integer", "minimum": 1},
            "max_states": {"type": "integer", "minimum": 1},
        }),
        _cmd("interleave", ["selector"], {
            "selector": {"type": "string"},
            "traces": {"type": "array", "minItems": 2, "maxItems": 2,
                       "items": {"type": "array", "items": _step}},
            "fixture": {"enum": ["priority_barrier"]},
            "generator": {"type": "object", "additionalProperties": False,
                          "properties": {"pairs": {"type": "integer", "minimum": 1},
                                         "max_len": {"type": "integer", "minimum": 0, "maximum": 16},
                                         "mute_free": {"type": ["boolean", "null"]}}},
            "allow_reorder": {"type": "boolean"},
        }),
        _cmd("lockstep", ["kind", "family"], {
            "kind": {"enum": ["queue", "stack"]},
            "M": {"type": "integer", "minimum": 0},
            "family": {"oneOf": [
                {"type": "object", "additionalProperties": False, "required": ["type"],
                 "properties": {"type": {"const": "random"},
                                "size": {"type": "integer", "minimum": 2},
                                "shared": {"type": "integer", "minimum": 1},
                                "max_ops": {"type": "integer", "minimum": 1},
                                "private": {"type": "integer", "minimum": 0}}},
                {"type": "object", "additionalProperties": False, "required": ["type", "scripts"],
                 "properties": {"type": {"const": "scripted"},
                                "scripts": {"type": "array", "minItems": 2, "items": {
                                    "type": "array", "items": {
                                        "type": "array", "minItems": 2, "maxItems": 2,
                                        "prefixItems": [{"enum": [INSERT, REMOVE]}, {"type": "string"}]}}}}},
            ]},
        }),
        _cmd("validate-f", ["selector"], {
            "selector": {"type": "string"},
            "max_len": {"type": "integer", "minimum": 1, "maximum": 6},
            "universe": {"type": "array", "items": _item, "minItems": 1},
        }),
    ],
}


def validate(doc: Any) -> dict:
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"scenario invalid at {where}: {exc.message}") from None
    return doc


def load(path: str | Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario is not valid JSON: {exc}") from None
    return validate(doc)


def items_from_json(entries: list, start_uid: int = 1) -> tuple[Item, ...]:
    payloads, prios = [], []
    for s in entries:
        if isinstance(s, dict):
            payloads.append(s.get("payload"))
            prios.append(s.get("priority", 0))
        else:
            payloads.append(s)
            prios.append(0)
    return initial_items(payloads, start_uid, prios)


def selector_from(sc: dict, default: str = "queue"):
    try:
        return get_selector(sc.get("selector", default))
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None


def build_program(sc: dict) -> ProtocolProgram:
    """The protocol a ``check`` scenario names, over its initial objects."""
    name = sc["protocol"]
    sel = selector_from(sc)
    v0, v1 = sc.get("inputs", [0, 1])
    init = items_from_json(sc.get("initial", []))
    try:
        if name in ("consensus2_registers", "consensus2_registers_broken"):
            build = consensus2_registers if name == "consensus2_registers" else consensus2_registers_broken
            return build(v0, v1, ConsistentSet(sel, init))
        if name == "consensus2_two_objects":
            init1 = items_from_json(sc.get("initial1", []), start_uid=len(init) + 1)
            return consensus2_two_objects(v0, v1, ConsistentSet(sel, init), ConsistentSet(sel, init1))
        if name in ("tas_lucky", "consensus2_queue_lucky"):
            lucky = sc.get("lucky", {})
            state = lucky_state(sel, lucky.get("before", []), lucky.get("after", []))
            if name == "tas_lucky":
                return tas_lucky(sc.get("n", 2), state)
            return consensus2_queue_lucky(v0, v1, state)
        return tournament_tas(sc.get("n", 2), sc.get("builder", "two-objects"), selector=sel,
                              initial=[it.payload for it in init])
    except ValueError as exc:
        raise ScenarioError(f"{name}: {exc}") from None


def traces_from_json(sc: dict) -> tuple[SoloTrace, SoloTrace]:
    """Trace pair given inline (responses filled in by solo replay) or a named fixture."""
    if sc.get("fixture") == "priority_barrier":
        return priority_barrier_example()
    sel = selector_from(sc)
    out = []
    for pid, steps in enumerate(sc["traces"]):
        ops: list[Item | None] = []
        for k, st in enumerate(steps):
            if st["op"] == REMOVE:
                ops.append(None)
            else:
                uid = st.get("uid", 1000 * (pid + 1) + k + 1)
                ops.append(Item(uid, VALUE, st.get("payload", f"p{pid}.{k}"), inserter=pid,
                                priority=st.get("priority", 0)))
        try:
            out.append(SoloTrace.from_ops(sel, ops))
        except ValueError as exc:
            raise ScenarioError(f"trace {pid}: {exc}") from None
    return out[0], out[1]
