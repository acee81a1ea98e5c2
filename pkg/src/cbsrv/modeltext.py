"""The model document format: a structured text grammar plus an equivalent
JSON rendering with the same field names.

One document describes one composite system::

    system task

    component Worker1 {
      vars x: int = 0;
      ports exec, finish, maintenance;
      locations free, done;
      initial free;
      transition free -exec-> done [true] / [x := x + 1];
      transition done -finish-> free [x <= 10];
      transition done -maintenance-> free [x > 10] / [x := 0];
    }

    interaction ex12 { ports: Generator.deliver, Worker1.exec, Worker2.exec; }

Guards default to ``true`` and steps to the empty sequence.  Synthesized
components carry ``builtin`` declarations and ``@``-actions; see
docs/model-format.md for the full grammar and the JSON schema.
"""

from __future__ import annotations

import json
from typing import Any

from .errors import CbsError, ModelSyntaxError
from .expr import (
    Assignment,
    Expr,
    Lit,
    LocName,
    TokenCursor,
    Unary,
    Binary,
    Var,
    parse_expression,
    render_assignment,
    render_expr,
    tokenize,
)
from .model import (
    AtomicComponent,
    BuiltinStep,
    CompositeSystem,
    Interaction,
    Port,
    validated,
)

FORMAT_TAG = "cbs-rv-model@1"


# --- parsing -------------------------------------------------------------------


def parse_model(text: str) -> CompositeSystem:
    """Parse and validate a model document (text or JSON form)."""
    if text.lstrip().startswith("{"):
        sys = _from_json_obj(json.loads(text))
    else:
        sys = _parse_text(text)
    sys = _wire_builtins(sys)
    return validated(sys)


def _parse_text(text: str) -> CompositeSystem:
    cur = TokenCursor(tokenize(text))
    name = "system"
    components: list[AtomicComponent] = []
    interactions: list[Interaction] = []
    builtin_decls: dict[str, dict] = {}
    while cur.current.kind != "end":
        kw = cur.expect_kind("ident").text
        if kw == "system":
            name = cur.expect_kind("ident").text
        elif kw == "component":
            comp, decl = _parse_component(cur)
            components.append(comp)
            if decl:
                builtin_decls[comp.id] = decl
        elif kw == "interaction":
            interactions.append(_parse_interaction(cur))
        else:
            cur.error(f"expected 'component' or 'interaction', found {kw!r}")
    sys = CompositeSystem(tuple(components), tuple(interactions), name=name)
    if builtin_decls:
        sys = CompositeSystem(
            tuple(_tag_builtin(c, builtin_decls.get(c.id)) for c in components),
            tuple(interactions),
            name=name,
        )
    return sys


def _tag_builtin(comp: AtomicComponent, decl: dict | None) -> AtomicComponent:
    if decl is None:
        return comp
    from dataclasses import replace

    return replace(comp, behavior=_PendingBuiltin(**decl))


class _PendingBuiltin:
    """Builtin declaration parsed from a document, wired after load."""

    def __init__(self, kind: str, variant: str = "default",
                 monitored: tuple[str, ...] = (), retain: bool = False):
        self.kind = kind
        self.variant = variant
        self.monitored = tuple(monitored)
        self.retain = retain


def _parse_component(cur: TokenCursor) -> tuple[AtomicComponent, dict | None]:
    cid = cur.expect_kind("ident").text
    cur.expect("{")
    variables: list[tuple[str, Any]] = []
    ports: list[Port] = []
    locations: list[str] = []
    initial = None
    raw_transitions: list[tuple] = []
    builtin_decl: dict | None = None
    while not cur.accept("}"):
        kw = cur.expect_kind("ident").text
        if kw == "vars":
            while True:
                vname = cur.expect_kind("ident").text
                cur.expect(":")
                ty = cur.expect_kind("ident").text
                if ty not in ("int", "bool"):
                    cur.error(f"unknown type {ty!r} (expected int or bool)")
                cur.expect("=")
                init_expr = parse_expression(cur)
                init = _const_value(init_expr, cur, ty)
                variables.append((vname, init))
                if not cur.accept(","):
                    break
            cur.expect(";")
        elif kw == "ports":
            while True:
                pname = cur.expect_kind("ident").text
                attached: list[str] = []
                if cur.accept("("):
                    if not cur.accept(")"):
                        while True:
                            attached.append(cur.expect_kind("ident").text)
                            if not cur.accept(","):
                                break
                        cur.expect(")")
                ports.append(Port(pname, tuple(attached)))
                if not cur.accept(","):
                    break
            cur.expect(";")
        elif kw == "locations":
            while True:
                locations.append(cur.expect_kind("ident").text)
                if not cur.accept(","):
                    break
            cur.expect(";")
        elif kw == "initial":
            initial = cur.expect_kind("ident").text
            cur.expect(";")
        elif kw == "transition":
            src = cur.expect_kind("ident").text
            cur.expect("-")
            port = cur.expect_kind("ident").text
            cur.expect("->")
            tgt = cur.expect_kind("ident").text
            guard: Expr = Lit(True)
            if cur.accept("["):
                guard = parse_expression(cur)
                cur.expect("]")
            step: Any = ()
            if cur.accept("/"):
                if cur.current.text == "@":
                    step = _parse_builtin_step(cur)
                else:
                    step = tuple(_parse_assignment_list(cur))
            cur.expect(";")
            raw_transitions.append((src, port, guard, step, tgt))
        elif kw == "builtin":
            builtin_decl = _parse_builtin_decl(cur)
        else:
            cur.error(f"unknown section {kw!r} in component {cid}")
    if initial is None:
        cur.error(f"component {cid} has no initial location")
    comp = _bind_component(cid, variables, ports, locations, initial, raw_transitions)
    return comp, builtin_decl


def _parse_builtin_step(cur: TokenCursor) -> BuiltinStep:
    cur.expect("@")
    name = cur.expect_kind("ident").text
    arg = ""
    if cur.accept("("):
        arg = cur.expect_kind("ident").text
        cur.expect(")")
    return BuiltinStep(name, arg)


def _parse_builtin_decl(cur: TokenCursor) -> dict:
    kind = cur.expect_kind("ident").text
    decl: dict = {"kind": kind, "variant": "default", "monitored": (), "retain": False}
    while not cur.accept(";"):
        key = cur.expect_kind("ident").text
        cur.expect("=")
        if key == "variant":
            decl["variant"] = cur.expect_kind("ident").text
        elif key == "retain":
            decl["retain"] = cur.expect_kind("ident").text == "true"
        elif key == "monitored":
            names = []
            if cur.current.kind == "ident":
                names.append(cur.advance().text)
                while cur.accept(","):
                    names.append(cur.expect_kind("ident").text)
            decl["monitored"] = tuple(names)
        else:
            cur.error(f"unknown builtin option {key!r}")
    return decl


def _parse_assignment_list(cur: TokenCursor) -> list[Assignment]:
    cur.expect("[")
    out: list[Assignment] = []
    if cur.accept("]"):
        return out
    while True:
        out.append(_parse_assignment(cur))
        if not cur.accept(","):
            break
    cur.expect("]")
    return out


def _parse_assignment(cur: TokenCursor) -> Assignment:
    name = cur.expect_kind("ident").text
    if cur.accept("."):
        name = name + "." + cur.expect_kind("ident").text
    cur.expect(":=")
    return Assignment(name, parse_expression(cur))


def _const_value(e: Expr, cur: TokenCursor, ty: str):
    if isinstance(e, Lit):
        ok = (ty == "bool") == (type(e.value) is bool)
        if ok:
            return e.value
    cur.error(f"initial value must be a {ty} literal")


def _parse_interaction(cur: TokenCursor) -> Interaction:
    aid = cur.expect_kind("ident").text
    cur.expect("{")
    ports: list[tuple[str, str]] = []
    transfer: list[Assignment] = []
    builtin_transfer = ""
    while not cur.accept("}"):
        kw = cur.expect_kind("ident").text
        cur.expect(":")
        if kw == "ports":
            while True:
                cid = cur.expect_kind("ident").text
                cur.expect(".")
                pid = cur.expect_kind("ident").text
                ports.append((cid, pid))
                if not cur.accept(","):
                    break
            cur.expect(";")
        elif kw == "transfer":
            while True:
                if cur.current.text == "@":
                    cur.expect("@")
                    builtin_transfer = cur.expect_kind("ident").text
                else:
                    transfer.append(_parse_assignment(cur))
                if not cur.accept(","):
                    break
            cur.expect(";")
        else:
            cur.error(f"unknown section {kw!r} in interaction {aid}")
    kind = "regular"
    if any(pid == "β" for _, pid in ports):
        kind = "busy"
    elif builtin_transfer == "deliver":
        kind = "delivery"
    return Interaction(aid, tuple(ports), tuple(transfer), kind, builtin_transfer)


# --- location-literal binding -----------------------------------------------


def _bind_component(cid, variables, ports, locations, initial, raw_transitions):
    declared = {name for name, _ in variables}
    loc_index = {name: i for i, name in enumerate(locations)}

    def bind(e: Expr) -> Expr:
        if isinstance(e, Var):
            if e.name not in declared and e.name in loc_index:
                return LocName(e.name, loc_index[e.name])
            return e
        if isinstance(e, Unary):
            return Unary(e.op, bind(e.operand))
        if isinstance(e, Binary):
            return Binary(e.op, bind(e.left), bind(e.right))
        return e

    transitions = []
    from .model import Transition

    for src, port, guard, step, tgt in raw_transitions:
        if not isinstance(step, BuiltinStep):
            step = tuple(Assignment(a.target, bind(a.source)) for a in step)
        transitions.append(Transition(src, port, bind(guard), step, tgt))
    return AtomicComponent(
        id=cid,
        ports=tuple(ports),
        locations=tuple(locations),
        initial_location=initial,
        variables=tuple(variables),
        transitions=tuple(transitions),
    )


def _wire_builtins(sys: CompositeSystem) -> CompositeSystem:
    pending = [c for c in sys.components if isinstance(c.behavior, _PendingBuiltin)]
    if not pending:
        return sys
    from .transform import wire_reconstructor

    for comp in pending:
        decl = comp.behavior
        if decl.kind != "rgt":
            raise ModelSyntaxError(f"unknown builtin kind {decl.kind!r} on {comp.id}")
        sys = wire_reconstructor(
            sys, comp.id, variant=decl.variant,
            monitored=decl.monitored, retain=decl.retain,
        )
    return sys


# --- rendering -----------------------------------------------------------------


def render_model(sys: CompositeSystem) -> str:
    """Render a system back to the text format (inverse of parse_model)."""
    out: list[str] = [f"system {sys.name}", ""]
    for c in sys.components:
        out.append(f"component {c.id} {{")
        if c.variables:
            vars_txt = ", ".join(
                f"{n}: {'bool' if type(v) is bool else 'int'} = {_render_value(v)}"
                for n, v in c.variables
            )
            out.append(f"  vars {vars_txt};")
        if c.ports:
            ports_txt = ", ".join(
                p.id if not p.attached else f"{p.id}({', '.join(p.attached)})"
                for p in c.ports
            )
            out.append(f"  ports {ports_txt};")
        out.append(f"  locations {', '.join(c.locations)};")
        out.append(f"  initial {c.initial_location};")
        bdecl = _builtin_decl_of(c)
        if bdecl:
            out.append(f"  {bdecl}")
        for t in c.transitions:
            line = f"  transition {t.source} -{t.port}-> {t.target}"
            line += f" [{render_expr(t.guard)}]"
            if isinstance(t.step, BuiltinStep):
                line += f" / {t.step.render()}"
            elif t.step:
                line += " / [" + ", ".join(render_assignment(a) for a in t.step) + "]"
            out.append(line + ";")
        out.append("}")
        out.append("")
    for a in sys.interactions:
        ports_txt = ", ".join(f"{cid}.{pid}" for cid, pid in a.ports)
        body = f"ports: {ports_txt};"
        parts = []
        if a.builtin_transfer:
            parts.append(f"@{a.builtin_transfer}")
        parts.extend(render_assignment(x) for x in a.transfer)
        if parts:
            body += f" transfer: {', '.join(parts)};"
        out.append(f"interaction {a.id} {{ {body} }}")
    return "\n".join(out) + "\n"


def _render_value(v) -> str:
    if type(v) is bool:
        return "true" if v else "false"
    return str(v)


def _builtin_decl_of(c: AtomicComponent) -> str:
    b = c.behavior
    if b is None:
        return ""
    kind = getattr(b, "format_kind", None)
    if kind == "rgt":
        monitored = ",".join(b.monitored_ids)
        retain = "true" if b.retain else "false"
        return (f"builtin rgt variant={b.variant} monitored={monitored} "
                f"retain={retain};")
    raise CbsError(
        f"component {c.id} carries a non-renderable builtin behavior; "
        f"monitored composites are assembled in memory, not rendered"
    )


# --- JSON form -------------------------------------------------------------------


def to_json_obj(sys: CompositeSystem) -> dict:
    comps = []
    for c in sys.components:
        entry: dict[str, Any] = {
            "id": c.id,
            "vars": [
                {"name": n, "type": "bool" if type(v) is bool else "int", "init": v}
                for n, v in c.variables
            ],
            "ports": [{"id": p.id, "attached": list(p.attached)} for p in c.ports],
            "locations": list(c.locations),
            "initial": c.initial_location,
            "transitions": [
                {
                    "from": t.source,
                    "port": t.port,
                    "to": t.target,
                    "guard": render_expr(t.guard),
                    "step": (t.step.render() if isinstance(t.step, BuiltinStep)
                             else [render_assignment(a) for a in t.step]),
                }
                for t in c.transitions
            ],
        }
        b = c.behavior
        if b is not None:
            if getattr(b, "format_kind", None) != "rgt":
                raise CbsError(f"component {c.id}: non-renderable builtin behavior")
            entry["builtin"] = {
                "kind": "rgt",
                "variant": b.variant,
                "monitored": list(b.monitored_ids),
                "retain": b.retain,
            }
        comps.append(entry)
    inters = []
    for a in sys.interactions:
        entry = {
            "id": a.id,
            "ports": [f"{cid}.{pid}" for cid, pid in a.ports],
            "transfer": [render_assignment(x) for x in a.transfer],
        }
        if a.builtin_transfer:
            entry["builtin"] = a.builtin_transfer
        inters.append(entry)
    return {
        "format": FORMAT_TAG,
        "name": sys.name,
        "components": comps,
        "interactions": inters,
    }


def render_model_json(sys: CompositeSystem) -> str:
    return json.dumps(to_json_obj(sys), indent=2, ensure_ascii=False) + "\n"


def _from_json_obj(obj: dict) -> CompositeSystem:
    if obj.get("format") != FORMAT_TAG:
        raise ModelSyntaxError(
            f"unsupported or missing format tag (expected {FORMAT_TAG!r})")
    components = []
    builtin_decls: dict[str, _PendingBuiltin] = {}
    for centry in obj.get("components", []):
        variables = []
        for v in centry.get("vars", []):
            init = v["init"]
            if v["type"] == "bool":
                init = bool(init)
            variables.append((v["name"], init))
        ports = [Port(p["id"], tuple(p.get("attached", ())))
                 for p in centry.get("ports", [])]
        raw_transitions = []
        from .expr import parse_expr

        for t in centry.get("transitions", []):
            guard = parse_expr(t.get("guard", "true"))
            step_field = t.get("step", [])
            if isinstance(step_field, str):
                step = _builtin_from_text(step_field)
            else:
                step = tuple(_assignment_from_text(s) for s in step_field)
            raw_transitions.append((t["from"], t["port"], guard, step, t["to"]))
        comp = _bind_component(
            centry["id"], variables, ports,
            list(centry.get("locations", [])), centry.get("initial"),
            raw_transitions,
        )
        components.append(comp)
        if "builtin" in centry:
            b = centry["builtin"]
            builtin_decls[comp.id] = _PendingBuiltin(
                kind=b["kind"], variant=b.get("variant", "default"),
                monitored=tuple(b.get("monitored", ())),
                retain=bool(b.get("retain", False)),
            )
    interactions = []
    for ientry in obj.get("interactions", []):
        ports = []
        for ref in ientry.get("ports", []):
            cid, _, pid = ref.partition(".")
            ports.append((cid, pid))
        transfer = tuple(_assignment_from_text(s) for s in ientry.get("transfer", []))
        builtin_transfer = ientry.get("builtin", "")
        kind = "regular"
        if any(pid == "β" for _, pid in ports):
            kind = "busy"
        elif builtin_transfer == "deliver":
            kind = "delivery"
        interactions.append(Interaction(
            ientry["id"], tuple(ports), transfer, kind, builtin_transfer))
    components = [_tag_builtin(c, vars(builtin_decls[c.id]) if c.id in builtin_decls else None)
                  for c in components]
    return CompositeSystem(tuple(components), tuple(interactions),
                           name=obj.get("name", "system"))


def _assignment_from_text(s: str) -> Assignment:
    cur = TokenCursor(tokenize(s))
    a = _parse_assignment(cur)
    if cur.current.kind != "end":
        cur.error("trailing input after assignment")
    return a


def _builtin_from_text(s: str) -> BuiltinStep:
    cur = TokenCursor(tokenize(s))
    step = _parse_builtin_step(cur)
    if cur.current.kind != "end":
        cur.error("trailing input after builtin action")
    return step
