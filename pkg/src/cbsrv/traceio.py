"""Trace files: a line-oriented text form and a compact JSON form.

Text form: one header line, then STATE / LABEL lines alternating, then one
VERDICT line per delivered global state (monitored runs only)::

    # cbs-rv-trace@1
    STATE [["free", {"x": 0}], ...]
    LABEL ex12
    STATE [["⊥@exec@free@done", {"x": 0}], ...]
    VERDICT currently-true

States list one ``[location, valuation]`` pair per component, in component
order.  Both forms round-trip exactly.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable

from .errors import MalformedTrace
from .model import ComponentState, SystemState
from .semantics import Trace, label_name, parse_label

TRACE_TAG = "cbs-rv-trace@1"


def state_to_obj(state: SystemState) -> list:
    return [[cs.location, dict(cs.values)] for cs in state]


def state_from_obj(obj) -> SystemState:
    try:
        return tuple(
            ComponentState(loc, tuple(vals.items())) for loc, vals in obj
        )
    except (TypeError, ValueError) as exc:
        raise MalformedTrace(f"bad state entry: {obj!r}") from exc


def trace_to_text(trace: Trace, verdicts: Iterable[str] = ()) -> str:
    lines = [f"# {TRACE_TAG}"]
    lines.append("STATE " + json.dumps(state_to_obj(trace.initial), ensure_ascii=False))
    for label, state in trace.steps:
        lines.append("LABEL " + label_name(label))
        lines.append("STATE " + json.dumps(state_to_obj(state), ensure_ascii=False))
    for v in verdicts:
        lines.append("VERDICT " + v)
    return "\n".join(lines) + "\n"


def trace_to_json(trace: Trace, verdicts: Iterable[str] = ()) -> str:
    obj = {
        "format": TRACE_TAG,
        "initial": state_to_obj(trace.initial),
        "steps": [[label_name(l), state_to_obj(q)] for l, q in trace.steps],
        "verdicts": list(verdicts),
    }
    return json.dumps(obj, ensure_ascii=False, indent=2) + "\n"


def read_trace(text: str) -> tuple[Trace, list[str]]:
    text = text.strip()
    if not text:
        raise MalformedTrace("empty trace document")
    if text.startswith("{"):
        return _from_json(text)
    return _from_text(text)


def _from_json(text: str) -> tuple[Trace, list[str]]:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedTrace(f"bad JSON: {exc}") from exc
    if obj.get("format") != TRACE_TAG:
        raise MalformedTrace(f"missing or unsupported format tag {obj.get('format')!r}")
    trace = Trace(
        state_from_obj(obj["initial"]),
        tuple((parse_label(l), state_from_obj(q)) for l, q in obj.get("steps", [])),
    )
    return trace, list(obj.get("verdicts", []))


def _from_text(text: str) -> tuple[Trace, list[str]]:
    initial = None
    steps: list = []
    verdicts: list[str] = []
    pending_label = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        kind, _, rest = line.partition(" ")
        if kind == "STATE":
            try:
                state = state_from_obj(json.loads(rest))
            except json.JSONDecodeError as exc:
                raise MalformedTrace(f"line {lineno}: bad state JSON") from exc
            if initial is None:
                initial = state
            elif pending_label is not None:
                steps.append((pending_label, state))
                pending_label = None
            else:
                raise MalformedTrace(f"line {lineno}: STATE without preceding LABEL")
        elif kind == "LABEL":
            if initial is None or pending_label is not None:
                raise MalformedTrace(f"line {lineno}: LABEL breaks alternation")
            pending_label = parse_label(rest.strip())
        elif kind == "VERDICT":
            verdicts.append(rest.strip())
        else:
            raise MalformedTrace(f"line {lineno}: unknown record {kind!r}")
    if initial is None:
        raise MalformedTrace("trace has no initial STATE")
    if pending_label is not None:
        raise MalformedTrace("trailing LABEL without a following STATE")
    return Trace(initial, tuple(steps)), verdicts


def write_trace_file(path: str | Path, trace: Trace, verdicts: Iterable[str] = (),
                     json_form: bool = False) -> None:
    content = trace_to_json(trace, verdicts) if json_form else trace_to_text(trace, verdicts)
    Path(path).write_text(content, encoding="utf-8")


def read_trace_file(path: str | Path) -> tuple[Trace, list[str]]:
    return read_trace(Path(path).read_text(encoding="utf-8"))
