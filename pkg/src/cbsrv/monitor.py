"""Finite-state monitors over reconstructed global states, with four-valued
verdicts and a document format of their own.

A monitor names boolean events over qualified system variables (and control
locations), and moves through a deterministic automaton on the event
valuation of each consumed global state.  Verdicts ``true`` and ``false`` are
terminal; ``currently-true`` / ``currently-false`` report the prefix read so
far.  Plugged into a transformed system, the monitor consumes one delivery
per executed interaction.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Optional, Sequence

from .errors import (
    CbsError,
    IncompatibleSupport,
    ModelSyntaxError,
    NondeterministicTransition,
    PartialStateRejected,
    UnknownVariable,
    UnmatchedEvent,
)
from .expr import (
    Assignment,
    Binary,
    Expr,
    Lit,
    LocName,
    TokenCursor,
    Unary,
    Var,
    eval_expr,
    free_vars,
    parse_expression,
    tokenize,
    type_check,
)
from .model import (
    LOC_VAR,
    AtomicComponent,
    BuiltinStep,
    ComponentState,
    CompositeSystem,
    Interaction,
    Port,
    SystemState,
    Transition,
    is_busy_location,
)

VERDICT_TRUE = "true"
VERDICT_CURRENTLY_TRUE = "currently-true"
VERDICT_CURRENTLY_FALSE = "currently-false"
VERDICT_FALSE = "false"
VERDICTS = (VERDICT_TRUE, VERDICT_CURRENTLY_TRUE,
            VERDICT_CURRENTLY_FALSE, VERDICT_FALSE)
TERMINAL_VERDICTS = (VERDICT_TRUE, VERDICT_FALSE)

MONITOR_ID = "Monitor"

MAX_EVENTS = 16  # determinism is checked by exhaustive valuation enumeration


@dataclass(frozen=True)
class MonitorEvent:
    name: str
    expr: Expr  # over qualified component variables / locations


@dataclass(frozen=True)
class MonitorSpec:
    name: str
    events: tuple[MonitorEvent, ...]
    states: tuple[str, ...]
    initial: str
    verdicts: tuple[tuple[str, str], ...]  # state -> verdict
    # next-state table: per state, indexed by the event-valuation bitmask
    # (bit i = value of events[i]); None marks an unmatched valuation
    table: tuple[tuple[Optional[int], ...], ...]
    comp_meta: tuple[tuple[str, tuple[str, ...]], ...]  # (cid, locations)
    strict: bool = False
    emit_initial: bool = False

    def verdict_of(self, state: str) -> str:
        return dict(self.verdicts)[state]

    def state_index(self, state: str) -> int:
        return self.states.index(state)

    def support(self) -> tuple[str, ...]:
        cids = []
        for ev in self.events:
            for name in free_vars(ev.expr):
                cid = name.split(".", 1)[0]
                if cid not in cids:
                    cids.append(cid)
        return tuple(cids)

    def event_mask(self, valuation: Mapping[str, bool]) -> int:
        mask = 0
        for i, ev in enumerate(self.events):
            if valuation[ev.name]:
                mask |= 1 << i
        return mask

    def next_state(self, state: str, valuation: Mapping[str, bool]) -> str:
        verdict = self.verdict_of(state)
        if verdict in TERMINAL_VERDICTS:
            return state
        nxt = self.table[self.state_index(state)][self.event_mask(valuation)]
        if nxt is None:
            if self.strict:
                raise UnmatchedEvent(
                    f"state {state!r} has no transition for {dict(valuation)}")
            return state
        return self.states[nxt]


@dataclass(frozen=True)
class MonitorRun:
    state: str
    verdicts: tuple[str, ...] = ()


def start_run(spec: MonitorSpec) -> MonitorRun:
    verdicts = (spec.verdict_of(spec.initial),) if spec.emit_initial else ()
    return MonitorRun(spec.initial, verdicts)


def _state_env(spec: MonitorSpec, gstate: Sequence) -> dict:
    if len(gstate) != len(spec.comp_meta):
        raise PartialStateRejected(
            f"state arity {len(gstate)} vs {len(spec.comp_meta)} components")
    needed = set()
    for ev in spec.events:
        needed.update(name.split(".", 1)[0] for name in free_vars(ev.expr))
    env: dict = {}
    for (cid, locations), slot in zip(spec.comp_meta, gstate):
        if not isinstance(slot, ComponentState):
            if cid in needed:
                raise PartialStateRejected(f"no information for component {cid}")
            continue
        if is_busy_location(slot.location):
            if cid in needed:
                raise PartialStateRejected(f"component {cid} is busy")
            continue
        env[f"{cid}.{LOC_VAR}"] = locations.index(slot.location)
        for k, v in slot.values:
            env[f"{cid}.{k}"] = v
    return env


def evaluate_events(spec: MonitorSpec, gstate: Sequence) -> dict[str, bool]:
    env = _state_env(spec, gstate)
    return {ev.name: bool(eval_expr(ev.expr, env)) for ev in spec.events}


def monitor_step(run: MonitorRun, spec: MonitorSpec, gstate: Sequence):
    """Consume one global state; returns (run', emitted verdict)."""
    valuation = evaluate_events(spec, gstate)
    nxt = spec.next_state(run.state, valuation)
    verdict = spec.verdict_of(nxt)
    return MonitorRun(nxt, run.verdicts + (verdict,)), verdict


def verdicts_over(spec: MonitorSpec, states: Iterable[Sequence]) -> list[str]:
    """Verdict stream of a fresh run over a sequence of global states."""
    run = start_run(spec)
    for q in states:
        run, _ = monitor_step(run, spec, q)
    return list(run.verdicts)


# --- parsing -----------------------------------------------------------------


def parse_monitor(text: str, sys: CompositeSystem) -> MonitorSpec:
    """Parse a monitor document and type-check its events against ``sys``."""
    cur = TokenCursor(tokenize(text))
    cur.expect("monitor")
    name = cur.expect_kind("ident").text
    cur.expect("{")
    events: list[MonitorEvent] = []
    states: list[str] = []
    verdicts: dict[str, str] = {}
    initial: Optional[str] = None
    raw_transitions: list[tuple[str, Expr, str]] = []
    strict = False
    emit_initial = False
    while not cur.accept("}"):
        kw = cur.expect_kind("ident").text
        if kw == "option":
            opt = cur.expect_kind("ident").text
            if opt == "strict":
                strict = True
            elif opt == "emit_initial":
                emit_initial = True
            else:
                cur.error(f"unknown option {opt!r}")
            cur.expect(";")
        elif kw == "event":
            ev_name = cur.expect_kind("ident").text
            cur.expect("=")
            events.append(MonitorEvent(ev_name, parse_expression(cur)))
            cur.expect(";")
        elif kw == "initial":
            initial = cur.expect_kind("ident").text
            cur.expect(";")
        elif kw == "state":
            st = cur.expect_kind("ident").text
            cur.expect(":")
            verdict = cur.expect_kind("ident").text
            if cur.accept("-"):
                verdict += "-" + cur.expect_kind("ident").text
            if verdict not in VERDICTS:
                cur.error(f"unknown verdict {verdict!r}")
            states.append(st)
            verdicts[st] = verdict
            cur.expect(";")
        elif kw == "from":
            src = cur.expect_kind("ident").text
            formula: Expr = Lit(True)
            if cur.accept("if"):
                formula = parse_expression(cur)
            cur.expect("->")
            tgt = cur.expect_kind("ident").text
            cur.expect(";")
            raw_transitions.append((src, formula, tgt))
        else:
            cur.error(f"unknown monitor section {kw!r}")
    if initial is None or initial not in states:
        raise ModelSyntaxError(f"monitor {name}: missing or unknown initial state")
    if len(events) > MAX_EVENTS:
        raise ModelSyntaxError(f"monitor {name}: more than {MAX_EVENTS} events")
    bound_events = tuple(
        MonitorEvent(ev.name, _bind_event(ev.expr, sys)) for ev in events
    )
    for src, formula, tgt in raw_transitions:
        if src not in states or tgt not in states:
            raise ModelSyntaxError(f"monitor {name}: unknown state in transition")
        if verdicts[src] in TERMINAL_VERDICTS and src != tgt:
            raise ModelSyntaxError(
                f"monitor {name}: state {src!r} has a terminal verdict; "
                f"transitions out of it must be self-loops")
    table = _determinize(name, states, bound_events, raw_transitions)
    comp_meta = tuple((c.id, c.locations) for c in sys.components)
    return MonitorSpec(
        name=name,
        events=bound_events,
        states=tuple(states),
        initial=initial,
        verdicts=tuple(verdicts.items()),
        table=table,
        comp_meta=comp_meta,
        strict=strict,
        emit_initial=emit_initial,
    )


def _bind_event(e: Expr, sys: CompositeSystem) -> Expr:
    """Resolve qualified references and location literals, then type-check."""
    comp_ids = {c.id for c in sys.components}

    def env_type(name: str) -> str:
        cid, _, var = name.partition(".")
        if cid not in comp_ids:
            raise UnknownVariable(f"unknown component {cid!r} in event")
        comp = sys.component(cid)
        if var == LOC_VAR:
            return "int"
        types = comp.var_types()
        if var not in types or var == LOC_VAR:
            raise UnknownVariable(f"unknown variable {cid}.{var}")
        return types[var]

    def loc_component_of(side: Expr) -> Optional[AtomicComponent]:
        if isinstance(side, Var) and side.name.endswith("." + LOC_VAR):
            cid = side.name.split(".", 1)[0]
            if cid in comp_ids:
                return sys.component(cid)
        return None

    def bind(e: Expr) -> Expr:
        if isinstance(e, Binary):
            left, right = e.left, e.right
            comp = loc_component_of(left)
            if comp is not None and isinstance(right, Var) and "." not in right.name:
                if right.name in comp.locations:
                    right = LocName(right.name, comp.loc_index(right.name))
            comp = loc_component_of(right)
            if comp is not None and isinstance(left, Var) and "." not in left.name:
                if left.name in comp.locations:
                    left = LocName(left.name, comp.loc_index(left.name))
            return Binary(e.op, bind(left), bind(right))
        if isinstance(e, Unary):
            return Unary(e.op, bind(e.operand))
        return e

    bound = bind(e)
    env = {}
    for name in free_vars(bound):
        if "." not in name:
            raise UnknownVariable(
                f"event variables must be qualified component.var, got {name!r}")
        env[name] = env_type(name)
    if type_check(bound, env) != "bool":
        raise ModelSyntaxError("monitor events must be boolean expressions")
    return bound


def _determinize(name, states, events, raw_transitions):
    """Check per-state determinism over all event valuations and build the
    next-state lookup table."""
    ev_names = [ev.name for ev in events]
    state_index = {s: i for i, s in enumerate(states)}
    table = []
    for s in states:
        explicit = [(f, t) for src, f, t in raw_transitions if src == s]
        row: list[Optional[int]] = []
        for mask in range(1 << len(events)):
            env = {n: bool(mask >> i & 1) for i, n in enumerate(ev_names)}
            matches = [t for f, t in explicit if eval_expr(f, env)]
            if len(matches) > 1:
                raise NondeterministicTransition(
                    f"monitor {name}: state {s!r} matches {matches} on {env}")
            row.append(state_index[matches[0]] if matches else None)
        table.append(tuple(row))
    return tuple(table)


def render_monitor(spec: MonitorSpec) -> str:
    from .expr import render_expr

    out = [f"monitor {spec.name} {{"]
    if spec.strict:
        out.append("  option strict;")
    if spec.emit_initial:
        out.append("  option emit_initial;")
    for ev in spec.events:
        out.append(f"  event {ev.name} = {render_expr(ev.expr)};")
    out.append(f"  initial {spec.initial};")
    for s in spec.states:
        out.append(f"  state {s}: {spec.verdict_of(s)};")
    out.append("}")
    return "\n".join(out) + "\n"


# --- embedding into a transformed composite --------------------------------------


class MonitorBehavior:
    """Engine hook for the embedded monitor component: a single control
    location whose builtin action advances the automaton on fresh inputs."""

    format_kind = "monitor"
    is_monitor = True

    def __init__(self, spec: MonitorSpec, input_names: tuple[tuple[str, str], ...]):
        # input_names: (qualified system name, local input variable)
        self.spec = spec
        self.input_names = input_names

    def bind(self, compiled_component) -> "BoundMonitor":
        return BoundMonitor(self, compiled_component.slots)

    def read_variables(self) -> tuple[str, ...]:
        return ("mstate",) + tuple(local for _, local in self.input_names)


class BoundMonitor:
    def __init__(self, behavior: MonitorBehavior, slots: dict[str, int]):
        from .expr import compile_expr

        spec = behavior.spec
        self.spec = spec
        self.state_slot = slots["mstate"]
        rename = {qualified: local for qualified, local in behavior.input_names}

        def localize(e: Expr) -> Expr:
            if isinstance(e, Var):
                return Var(rename[e.name])
            if isinstance(e, Unary):
                return Unary(e.op, localize(e.operand))
            if isinstance(e, Binary):
                return Binary(e.op, localize(e.left), localize(e.right))
            return e

        self.event_fns = [
            compile_expr(localize(ev.expr), slots) for ev in spec.events
        ]
        self.terminal = tuple(
            spec.verdict_of(s) in TERMINAL_VERDICTS for s in spec.states
        )

    def run_step(self, step: BuiltinStep, values: tuple, payload):
        idx = values[self.state_slot]
        if not self.terminal[idx]:
            mask = 0
            for i, fn in enumerate(self.event_fns):
                if fn(values):
                    mask |= 1 << i
            nxt = self.spec.table[idx][mask]
            if nxt is None:
                if self.spec.strict:
                    raise UnmatchedEvent(
                        f"monitor state {self.spec.states[idx]!r}: unmatched valuation")
                nxt = idx
            vals = list(values)
            vals[self.state_slot] = nxt
            values = tuple(vals)
        return values, payload

    def current_verdict(self, values: tuple, payload) -> str:
        return self.spec.verdict_of(self.spec.states[values[self.state_slot]])


def attach_monitor(transformed: CompositeSystem, spec: MonitorSpec) -> CompositeSystem:
    """Plug a monitor component onto the reconstructor's delivery ports."""
    from .transform import RGT_ID, ReconBehavior, _copy_var

    rgt = next((c for c in transformed.components
                if isinstance(c.behavior, ReconBehavior)), None)
    if rgt is None:
        raise CbsError("attach_monitor expects a transformed system")
    if any(c.id == MONITOR_ID for c in transformed.components):
        raise CbsError(f"system already contains a component named {MONITOR_ID}")
    observed = set(rgt.behavior.monitored_ids)
    missing = [cid for cid in spec.support() if cid not in observed]
    if missing:
        raise IncompatibleSupport(
            f"monitor references unobserved components: {', '.join(missing)}")

    # input copies, one per qualified reference in the events
    referenced: list[str] = []
    for ev in spec.events:
        for name in sorted(free_vars(ev.expr)):
            if name not in referenced:
                referenced.append(name)
    input_names = tuple(
        (name, "in_" + name.replace(".", "_")) for name in referenced
    )
    variables: list[tuple[str, object]] = [("mstate", spec.state_index(spec.initial))]
    base_by_id = {c.id: c for c in transformed.components}
    for qualified, local in input_names:
        cid, _, var = qualified.partition(".")
        comp = base_by_id[cid]
        if var == LOC_VAR:
            init: object = comp.locations.index(comp.initial_location)
        else:
            init = comp.initial_valuation()[var]
        variables.append((local, init))
    monitor = AtomicComponent(
        id=MONITOR_ID,
        ports=(Port("obs", tuple(local for _, local in input_names)),),
        locations=("mon",),
        initial_location="mon",
        variables=tuple(variables),
        transitions=(Transition("mon", "obs", Lit(True), BuiltinStep("mon"), "mon"),),
        behavior=MonitorBehavior(spec, input_names),
    )
    interactions = []
    for a in transformed.interactions:
        if a.kind != "delivery":
            interactions.append(a)
            continue
        extra = tuple(
            Assignment(
                f"{MONITOR_ID}.{local}",
                Var(f"{RGT_ID}.{_copy_var(*qualified.split('.', 1))}"),
            )
            for qualified, local in input_names
        )
        interactions.append(replace(
            a,
            ports=a.ports + ((MONITOR_ID, "obs"),),
            transfer=a.transfer + extra,
        ))
    return CompositeSystem(
        transformed.components + (monitor,),
        tuple(interactions),
        name=transformed.name,
    )
