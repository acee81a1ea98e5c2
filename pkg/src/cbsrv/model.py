"""Core domain types: atomic components, multiparty interactions, systems, states.

A loaded CompositeSystem is immutable and safe to share between threads.
Components are indexed 1..n in declaration order; that order is load-bearing
(state tuples, busy notifications and reconstruction buffers all address
components by index).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

from .errors import ValidationError
from .expr import (
    Assignment,
    Expr,
    Lit,
    Value,
    Var,
    free_vars,
    is_bool,
    is_int,
    type_check,
)

# Reserved naming conventions.  Busy locations are generated with a fixed
# prefix so partial-state form survives a round trip through the text format;
# "β" is the completion port added when transitions are split; "loc" is the
# variable added by instrumentation.
BUSY_PREFIX = "⊥@"
BETA_PORT = "β"
LOC_VAR = "loc"


def is_busy_location(name: str) -> bool:
    return name.startswith(BUSY_PREFIX)


@dataclass(frozen=True)
class Port:
    id: str
    attached: tuple[str, ...] = ()


@dataclass(frozen=True)
class BuiltinStep:
    """A transition action implemented by the engine rather than by
    assignments (used by synthesized components)."""

    name: str  # 'new' | 'upd' | 'mon'
    arg: str = ""

    def render(self) -> str:
        return f"@{self.name}({self.arg})" if self.arg else f"@{self.name}"


StepLike = Union[tuple[Assignment, ...], BuiltinStep]


@dataclass(frozen=True)
class Transition:
    source: str
    port: str
    guard: Expr
    step: StepLike
    target: str


@dataclass(frozen=True)
class AtomicComponent:
    id: str
    ports: tuple[Port, ...]
    locations: tuple[str, ...]
    initial_location: str
    variables: tuple[tuple[str, Value], ...]  # declaration order, with initial values
    transitions: tuple[Transition, ...]
    behavior: Optional[object] = None  # synthesized-component runtime hook

    # -- derived views ------------------------------------------------------

    @property
    def var_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.variables)

    def var_types(self) -> dict[str, str]:
        return {
            name: "bool" if is_bool(init) else "int" for name, init in self.variables
        }

    def port_map(self) -> dict[str, Port]:
        return {p.id: p for p in self.ports}

    def busy_locations(self) -> tuple[str, ...]:
        return tuple(l for l in self.locations if is_busy_location(l))

    def loc_index(self, name: str) -> int:
        return self.locations.index(name)

    def initial_valuation(self) -> dict[str, Value]:
        return dict(self.variables)

    def make_state(self, location: str, valuation: Mapping[str, Value],
                   payload: object = None) -> "ComponentState":
        values = tuple((name, valuation[name]) for name, _ in self.variables)
        return ComponentState(location, values, payload)

    def initial_state(self) -> "ComponentState":
        payload = None
        make = getattr(self.behavior, "initial_payload", None)
        if callable(make):
            payload = make()
        return self.make_state(self.initial_location, self.initial_valuation(), payload)

    def transitions_from(self, location: str, port: str | None = None):
        for t in self.transitions:
            if t.source == location and (port is None or t.port == port):
                yield t

    def is_instrumented(self) -> bool:
        return LOC_VAR in self.var_names


@dataclass(frozen=True)
class ComponentState:
    """Location plus a full valuation, in the component's declaration order.

    ``payload`` carries opaque runtime state for synthesized components (the
    reconstruction buffer, a monitor automaton position); it takes part in
    equality and hashing so explored state spaces stay exact.
    """

    location: str
    values: tuple[tuple[str, Value], ...]
    payload: object = None

    def valuation(self) -> dict[str, Value]:
        return dict(self.values)

    def __getitem__(self, name: str) -> Value:
        for k, v in self.values:
            if k == name:
                return v
        raise KeyError(name)


SystemState = tuple[ComponentState, ...]


@dataclass(frozen=True)
class Interaction:
    """A multiparty action: at most one port per component, plus a sequence of
    data-transfer assignments over the qualified attached variables."""

    id: str
    ports: tuple[tuple[str, str], ...]  # (component id, port id)
    transfer: tuple[Assignment, ...] = ()
    kind: str = "regular"  # 'regular' | 'busy' | 'delivery'
    builtin_transfer: str = ""  # e.g. 'deliver' for delivery interactions

    def component_ids(self) -> tuple[str, ...]:
        return tuple(cid for cid, _ in self.ports)


@dataclass(frozen=True)
class CompositeSystem:
    components: tuple[AtomicComponent, ...]
    interactions: tuple[Interaction, ...]
    name: str = "system"

    def __post_init__(self):
        object.__setattr__(
            self, "_index", {c.id: i for i, c in enumerate(self.components)}
        )
        object.__setattr__(
            self, "_by_id", {c.id: c for c in self.components}
        )
        object.__setattr__(
            self, "_interaction_by_id", {a.id: a for a in self.interactions}
        )

    # -- lookups --------------------------------------------------------------

    def component(self, cid: str) -> AtomicComponent:
        return self._by_id[cid]

    def component_index(self, cid: str) -> int:
        """0-based index in declaration order."""
        return self._index[cid]

    def interaction(self, aid: str) -> Interaction:
        return self._interaction_by_id[aid]

    def has_interaction(self, aid: str) -> bool:
        return aid in self._interaction_by_id

    @property
    def n(self) -> int:
        return len(self.components)

    def initial_state(self) -> SystemState:
        return tuple(c.initial_state() for c in self.components)

    def regular_interactions(self) -> tuple[Interaction, ...]:
        return tuple(a for a in self.interactions if a.kind == "regular")

    def busy_interaction_for(self, index: int) -> Optional[Interaction]:
        """The completion interaction of the component at 0-based ``index``."""
        cid = self.components[index].id
        for a in self.interactions:
            if a.kind == "busy" and a.ports[0][0] == cid:
                return a
        return None

    def is_partial_form(self) -> bool:
        return any(c.busy_locations() for c in self.components)

    def state_is_global(self, q: SystemState) -> bool:
        return not any(is_busy_location(cs.location) for cs in q)

    def render_state(self, q: SystemState, abbreviate: bool = True) -> str:
        parts = []
        for cs in q:
            loc = "⊥" if (abbreviate and is_busy_location(cs.location)) else cs.location
            if cs.values:
                vals = ",".join(f"{k}={v}" for k, v in cs.values)
                parts.append(f"{loc}[{vals}]")
            else:
                parts.append(loc)
        return "(" + ", ".join(parts) + ")"


# --- static validation ------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


def _check_component(c: AtomicComponent, out: list[Diagnostic]):
    if len(set(c.locations)) != len(c.locations):
        out.append(Diagnostic("DuplicateLocation", f"component {c.id}"))
    if len({p.id for p in c.ports}) != len(c.ports):
        out.append(Diagnostic("DuplicatePort", f"component {c.id}"))
    if len(set(c.var_names)) != len(c.var_names):
        out.append(Diagnostic("DuplicateVariable", f"component {c.id}"))
    for name, init in c.variables:
        if not (is_int(init) or is_bool(init)):
            out.append(Diagnostic(
                "BadInitialValue", f"{c.id}.{name} initial value {init!r}"))
    if c.initial_location not in c.locations:
        out.append(Diagnostic(
            "UnknownLocation", f"initial location {c.initial_location!r} of {c.id}"))
    if is_busy_location(c.initial_location):
        out.append(Diagnostic(
            "BusyInitial", f"component {c.id} starts in a busy location"))
    env = c.var_types()
    declared_vars = set(c.var_names)
    port_ids = {p.id for p in c.ports}
    for p in c.ports:
        for v in p.attached:
            if v not in declared_vars:
                out.append(Diagnostic(
                    "UnboundVariable", f"port {c.id}.{p.id} attaches unknown {v!r}"))
    for t in c.transitions:
        where = f"{c.id}: {t.source} -{t.port}-> {t.target}"
        if t.source not in c.locations:
            out.append(Diagnostic("UnknownLocation", f"source of {where}"))
        if t.target not in c.locations:
            out.append(Diagnostic("UnknownLocation", f"target of {where}"))
        if t.port not in port_ids:
            out.append(Diagnostic("UnknownPort", f"port of {where}"))
        try:
            if type_check(t.guard, env) != "bool":
                out.append(Diagnostic("TypeMismatch", f"guard of {where} is not boolean"))
        except Exception as exc:  # UnboundVariable / TypeMismatch
            out.append(Diagnostic(type(exc).__name__, f"guard of {where}: {exc}"))
        if isinstance(t.step, BuiltinStep):
            if c.behavior is None:
                out.append(Diagnostic(
                    "OrphanBuiltin", f"{where} uses {t.step.render()} but the "
                    f"component declares no builtin behavior"))
            continue
        for a in t.step:
            if a.target not in declared_vars:
                out.append(Diagnostic(
                    "UnboundVariable", f"assignment target {a.target!r} in {where}"))
                continue
            try:
                ty = type_check(a.source, env)
                if ty != env[a.target]:
                    out.append(Diagnostic(
                        "TypeMismatch",
                        f"{a.target} := ... in {where} assigns {ty} to {env[a.target]}"))
            except Exception as exc:
                out.append(Diagnostic(type(exc).__name__, f"step of {where}: {exc}"))
        # completion transitions leave busy locations only
        if t.port == BETA_PORT and not is_busy_location(t.source):
            out.append(Diagnostic(
                "BadBetaTransition", f"{where}: β fires from a non-busy location"))
    for l in c.busy_locations():
        outgoing = list(c.transitions_from(l))
        if len(outgoing) != 1 or outgoing[0].port != BETA_PORT:
            out.append(Diagnostic(
                "BadBusyLocation",
                f"{c.id}.{l} must have exactly one outgoing β transition"))


def _check_interaction(sys: CompositeSystem, a: Interaction, out: list[Diagnostic]):
    seen_components: set[str] = set()
    beta_ports = 0
    qualified_env: dict[str, str] = {}
    for cid, pid in a.ports:
        if cid not in {c.id for c in sys.components}:
            out.append(Diagnostic(
                "UnknownComponent", f"interaction {a.id} references {cid!r}"))
            continue
        comp = sys.component(cid)
        port = comp.port_map().get(pid)
        if port is None:
            out.append(Diagnostic(
                "UnknownPort", f"interaction {a.id} references {cid}.{pid}"))
            continue
        if cid in seen_components:
            out.append(Diagnostic(
                "MultiplePorts", f"interaction {a.id} uses two ports of {cid}"))
        seen_components.add(cid)
        if pid == BETA_PORT:
            beta_ports += 1
        types = comp.var_types()
        for v in port.attached:
            if v in types:
                qualified_env[f"{cid}.{v}"] = types[v]
    if a.kind == "busy":
        if beta_ports != 1:
            out.append(Diagnostic(
                "BadBusyInteraction", f"{a.id} must contain exactly one β port"))
    elif beta_ports:
        out.append(Diagnostic(
            "BadBusyInteraction", f"{a.id} contains a β port but is not a completion"))
    for asg in a.transfer:
        if asg.target not in qualified_env:
            out.append(Diagnostic(
                "UnboundVariable",
                f"transfer target {asg.target!r} of {a.id} is not an attached variable"))
            continue
        try:
            ty = type_check(asg.source, qualified_env)
            if ty != qualified_env[asg.target]:
                out.append(Diagnostic(
                    "TypeMismatch", f"transfer {asg.target} := ... in {a.id}"))
        except Exception as exc:
            out.append(Diagnostic(type(exc).__name__, f"transfer of {a.id}: {exc}"))


def validate(sys: CompositeSystem) -> list[Diagnostic]:
    """Static validation; returns an empty list iff all invariants hold."""
    out: list[Diagnostic] = []
    ids = [c.id for c in sys.components]
    if len(set(ids)) != len(ids):
        out.append(Diagnostic("DuplicateComponent", ", ".join(ids)))
    aids = [a.id for a in sys.interactions]
    if len(set(aids)) != len(aids):
        out.append(Diagnostic("DuplicateInteraction", ", ".join(aids)))
    for c in sys.components:
        _check_component(c, out)
    for a in sys.interactions:
        _check_interaction(sys, a, out)
        if a.kind == "busy":
            cid = a.ports[0][0] if a.ports else "?"
            if cid in sys._index:  # noqa: SLF001 - own class
                expected = f"β{sys.component_index(cid) + 1}"
                if a.id != expected:
                    out.append(Diagnostic(
                        "BadBusyInteraction",
                        f"completion of {cid} must be named {expected}, got {a.id}"))
        elif a.kind == "regular" and a.id.startswith(BETA_PORT):
            out.append(Diagnostic(
                "ReservedName", f"interaction id {a.id!r} is reserved for completions"))
    return out


def validated(sys: CompositeSystem) -> CompositeSystem:
    diags = validate(sys)
    if diags:
        raise ValidationError(diags)
    return sys


# --- bundled example systems ---------------------------------------------------


def _load_asset(name: str) -> str:
    import importlib.resources as res

    return (res.files("cbsrv") / "assets" / name).read_text(encoding="utf-8")


def builtin_task() -> CompositeSystem:
    """The bundled task-distribution system: three workers sharing jobs
    handed out by a generator, with pairwise execution interactions."""
    from .modeltext import parse_model

    return parse_model(_load_asset("task.model"))


def builtin_readers_writers() -> CompositeSystem:
    """A small readers/writers-style system with a clock-like synchronizer."""
    from .modeltext import parse_model

    return parse_model(_load_asset("readers_writers.model"))


def builtin_task_monitor_text() -> str:
    """Source text of the bundled task-homogeneity monitor."""
    return _load_asset("task_homogeneity.monitor")
