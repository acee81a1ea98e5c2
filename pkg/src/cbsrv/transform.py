"""Model transformation: make a partial-state system self-reconstructing.

Three pieces:

* instrumentation of atomic components, so each completion publishes the
  component's data variables plus its new control location;
* the synthesized RGT component (runtime global-trace reconstructor), an
  operational counterpart of the pure reconstruction in cbsrv.witness.  It
  buffers one tuple per started interaction, fills busy slots as completions
  arrive, and delivers settled global states in FIFO order through dedicated
  ports;
* interaction rewiring: every interaction notifies RGT, every completion of
  an observed component carries its state to RGT, and one unary delivery
  interaction per original interaction hands reconstructed states onward.

Guard variants trade monitoring latency for system progress: the default
variant blocks new work while a reconstructed state waits for delivery.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence, Union

from .errors import (
    AlreadyInstrumented,
    CbsError,
    GuardViolated,
    NotBusy,
    NothingToDeliver,
    UnknownMonitoredVariable,
)
from .expr import Assignment, Binary, Lit, Unary, Value, Var
from .model import (
    BETA_PORT,
    LOC_VAR,
    AtomicComponent,
    BuiltinStep,
    ComponentState,
    CompositeSystem,
    Interaction,
    Port,
    Transition,
    is_busy_location,
)

RGT_ID = "RGT"

GUARD_VARIANTS = ("default", "unguarded-new", "unguarded-upd", "unguarded-both")


class _UnmonitoredType:
    """Placeholder slot for components the property does not observe; counts
    as settled information in completeness checks."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNMONITORED"


UNMONITORED = _UnmonitoredType()

Slot = Union[ComponentState, _UnmonitoredType, None]


# --- instrumentation ---------------------------------------------------------


def instrument_atomic(comp: AtomicComponent) -> AtomicComponent:
    """Add the location variable, record it on every completion, and export
    the full variable set on the β port."""
    if not any(is_busy_location(l) for l in comp.locations):
        raise CbsError(f"component {comp.id} is not in partial-state form")
    if LOC_VAR in comp.var_names:
        raise AlreadyInstrumented(comp.id)
    loc_of = {name: i for i, name in enumerate(comp.locations)}
    variables = comp.variables + ((LOC_VAR, loc_of[comp.initial_location]),)
    exported = comp.var_names + (LOC_VAR,)
    ports = tuple(
        Port(BETA_PORT, exported) if p.id == BETA_PORT else p for p in comp.ports
    )
    transitions = []
    for t in comp.transitions:
        if t.port == BETA_PORT:
            step = tuple(t.step) + (Assignment(LOC_VAR, Lit(loc_of[t.target])),)
            transitions.append(replace(t, step=step))
        else:
            transitions.append(t)
    return replace(
        comp, variables=variables, ports=ports, transitions=tuple(transitions)
    )


# --- reconstruction state ------------------------------------------------------


@dataclass(frozen=True)
class ReconTuple:
    """One buffered entry: a slot per component plus the interaction that
    created it (tag None marks the initial pseudo-entry)."""

    slots: tuple[Slot, ...]
    tag: Optional[str]

    def complete(self) -> bool:
        return all(s is not None for s in self.slots)


@dataclass(frozen=True)
class ReconBuffer:
    entries: tuple[ReconTuple, ...]
    next_delivery: int  # index into entries of the next tuple to hand out
    z: tuple[bool, ...]  # per-component busy flags (observed components only)


@dataclass(frozen=True)
class CompMeta:
    cid: str
    var_names: tuple[str, ...]  # data variables, instrumentation excluded
    locations: tuple[str, ...]
    initial: ComponentState


@dataclass(frozen=True)
class ReconSetup:
    interaction_ids: tuple[str, ...]
    involvement: tuple[frozenset[int], ...]  # aligned with interaction_ids
    comps: tuple[CompMeta, ...]
    monitored: tuple[bool, ...]
    variant: str = "default"
    retain: bool = False

    def __post_init__(self):
        if self.variant not in GUARD_VARIANTS:
            raise CbsError(f"unknown guard variant {self.variant!r}")
        object.__setattr__(
            self, "_gs_index", {a: i for i, a in enumerate(self.interaction_ids)}
        )
        object.__setattr__(
            self, "_comp_index", {m.cid: i for i, m in enumerate(self.comps)}
        )

    def gs_index(self, aid: str) -> int:
        return self._gs_index[aid]

    def comp_index(self, cid: str) -> int:
        return self._comp_index[cid]

    @property
    def n(self) -> int:
        return len(self.comps)

    def guards_new(self) -> bool:
        return self.variant in ("default", "unguarded-upd")

    def guards_upd(self) -> bool:
        return self.variant in ("default", "unguarded-new")

    def monitored_ids(self) -> tuple[str, ...]:
        return tuple(m.cid for m, on in zip(self.comps, self.monitored) if on)


def _initial_mirrors(setup: ReconSetup) -> tuple[Slot, ...]:
    return tuple(
        m.initial if on else UNMONITORED
        for m, on in zip(setup.comps, setup.monitored)
    )


def initial_buffer(setup: ReconSetup) -> ReconBuffer:
    # The initial global state is known a priori; its pseudo-entry is treated
    # as already handed out, so deliveries produce exactly one state per
    # executed interaction.
    init = ReconTuple(_initial_mirrors(setup), None)
    if setup.retain:
        return ReconBuffer((init,), 1, (False,) * setup.n)
    return ReconBuffer((), 0, (False,) * setup.n)


# --- core algorithms (shared by the pure API and the engine hook) ---------------


def _refresh(setup: ReconSetup, entries, next_delivery, gs: list[bool]):
    for t in entries[next_delivery:]:
        if t.tag is None:
            continue
        gi = setup.gs_index(t.tag)
        if not gs[gi] and t.complete():
            gs[gi] = True


def _core_new(setup: ReconSetup, buf: ReconBuffer, gs: tuple[bool, ...],
              aid: str, mirrors: Sequence[Slot]):
    involved = setup.involvement[setup.gs_index(aid)]
    z = list(buf.z)
    slots: list[Slot] = []
    for i in range(setup.n):
        if not setup.monitored[i]:
            slots.append(UNMONITORED)
            continue
        if i in involved:
            slots.append(None)
            z[i] = True
        elif buf.z[i]:
            # the component is still busy from an earlier interaction; its
            # mirror is stale, so the slot stays pending until it completes
            slots.append(None)
        else:
            slots.append(mirrors[i])
    entries = buf.entries + (ReconTuple(tuple(slots), aid),)
    gs_out = list(gs)
    _refresh(setup, entries, buf.next_delivery, gs_out)
    return replace(buf, entries=entries, z=tuple(z)), tuple(gs_out)


def _core_upd(setup: ReconSetup, buf: ReconBuffer, gs: tuple[bool, ...],
              index: int, exported: ComponentState):
    if not buf.z[index]:
        raise NotBusy(f"component index {index} has no pending completion")
    z = list(buf.z)
    z[index] = False
    entries = tuple(
        t if t.slots[index] is not None
        else ReconTuple(t.slots[:index] + (exported,) + t.slots[index + 1:], t.tag)
        for t in buf.entries
    )
    gs_out = list(gs)
    _refresh(setup, entries, buf.next_delivery, gs_out)
    return replace(buf, entries=entries, z=tuple(z)), tuple(gs_out)


def _core_check(setup: ReconSetup, buf: ReconBuffer, gs: tuple[bool, ...]):
    gs_out = list(gs)
    _refresh(setup, buf.entries, buf.next_delivery, gs_out)
    return tuple(gs_out)


def _core_deliver(setup: ReconSetup, buf: ReconBuffer, gs: tuple[bool, ...]):
    nd = buf.next_delivery
    if nd >= len(buf.entries):
        raise NothingToDeliver("reconstruction buffer is empty")
    t = buf.entries[nd]
    if t.tag is None or not gs[setup.gs_index(t.tag)]:
        raise NothingToDeliver(f"next entry ({t.tag}) is not ready")
    gs_out = list(gs)
    gs_out[setup.gs_index(t.tag)] = False
    if setup.retain:
        entries, nd2 = buf.entries, nd + 1
    else:
        entries, nd2 = buf.entries[:nd] + buf.entries[nd + 1:], nd
    out = ReconBuffer(entries, nd2, buf.z)
    _refresh(setup, entries, nd2, gs_out)
    return out, tuple(gs_out), (t.tag, t.slots)


# --- pure reconstructor API ------------------------------------------------------


@dataclass(frozen=True)
class Reconstructor:
    """Functional view of the RGT component's data state.

    Mirrors hold the last published state of each observed component; the
    buffer holds the pending tuples; gs flags mark interactions whose
    reconstructed global state awaits delivery.
    """

    setup: ReconSetup
    buffer: ReconBuffer
    gs: tuple[bool, ...]
    mirrors: tuple[Slot, ...]

    @staticmethod
    def start(setup: ReconSetup) -> "Reconstructor":
        return Reconstructor(
            setup,
            initial_buffer(setup),
            (False,) * len(setup.interaction_ids),
            _initial_mirrors(setup),
        )

    @property
    def is_stable(self) -> bool:
        return not any(self.gs)

    def on_interaction(self, aid: str) -> "Reconstructor":
        if self.setup.guards_new() and any(self.gs):
            raise GuardViolated(f"cannot start {aid}: undelivered states pending")
        buf, gs = _core_new(self.setup, self.buffer, self.gs, aid, self.mirrors)
        return replace(self, buffer=buf, gs=gs)

    def on_completion(self, index: int, exported: ComponentState) -> "Reconstructor":
        if self.setup.guards_upd() and any(self.gs):
            raise GuardViolated("cannot accept completion: undelivered states pending")
        if not self.setup.monitored[index]:
            raise NotBusy(f"component index {index} is not observed")
        buf, gs = _core_upd(self.setup, self.buffer, self.gs, index, exported)
        mirrors = self.mirrors[:index] + (exported,) + self.mirrors[index + 1:]
        return replace(self, buffer=buf, gs=gs, mirrors=mirrors)

    def refresh(self) -> "Reconstructor":
        return replace(self, gs=_core_check(self.setup, self.buffer, self.gs))

    def deliverable(self) -> bool:
        nd = self.buffer.next_delivery
        if nd >= len(self.buffer.entries):
            return False
        t = self.buffer.entries[nd]
        return t.tag is not None and self.gs[self.setup.gs_index(t.tag)]

    def deliver(self):
        buf, gs, record = _core_deliver(self.setup, self.buffer, self.gs)
        return replace(self, buffer=buf, gs=gs), record

    def drain(self):
        out = []
        r = self
        while r.deliverable():
            r, record = r.deliver()
            out.append(record)
        return r, out


def rgt_new(r: Reconstructor, aid: str) -> Reconstructor:
    return r.on_interaction(aid)


def rgt_upd(r: Reconstructor, index: int, exported: ComponentState) -> Reconstructor:
    return r.on_completion(index, exported)


def rgt_check(r: Reconstructor) -> Reconstructor:
    return r.refresh()


def rgt_get(r: Reconstructor):
    return r.deliver()


def is_stable(r: Reconstructor) -> bool:
    return r.is_stable


# --- engine hook -------------------------------------------------------------------


def _mirror_var(cid: str, var: str) -> str:
    return f"m_{cid}_{var}"


def _copy_var(cid: str, var: str) -> str:
    return f"c_{cid}_{var}"


def _gs_var(aid: str) -> str:
    return f"gs_{aid}"


class ReconBehavior:
    """Attached to the synthesized RGT component; executes its builtin
    actions against the component's variables and opaque buffer."""

    format_kind = "rgt"
    is_monitor = False

    def __init__(self, setup: ReconSetup):
        self.setup = setup

    @property
    def variant(self) -> str:
        return self.setup.variant

    @property
    def retain(self) -> bool:
        return self.setup.retain

    @property
    def monitored_ids(self) -> tuple[str, ...]:
        return self.setup.monitored_ids()

    def read_variables(self) -> tuple[str, ...]:
        """Variables the builtin actions read (state-space reduction hint);
        the delivery copies are write-only from this component's view."""
        out = [_gs_var(a) for a in self.setup.interaction_ids]
        for meta, on in zip(self.setup.comps, self.setup.monitored):
            if on:
                out.extend(_mirror_var(meta.cid, v)
                           for v in meta.var_names + (LOC_VAR,))
        return tuple(out)


    def __eq__(self, other) -> bool:
        return isinstance(other, ReconBehavior) and self.setup == other.setup

    def __hash__(self) -> int:
        return hash((self.setup.interaction_ids, self.setup.variant,
                     self.setup.retain, self.setup.monitored))

    def initial_payload(self) -> ReconBuffer:
        return initial_buffer(self.setup)

    def bind(self, compiled_component) -> "BoundRecon":
        return BoundRecon(self.setup, compiled_component.slots)

    def reduction_precondition(self, sys, hidden: frozenset) -> bool:
        """Whether the explorer may canonicalize stable buffers away.

        Sound exactly when every reconstructed state can always be flushed
        through a hidden delivery: each interaction must still have its
        delivery interaction, and all of them must be hidden.  (Head-of-queue
        readiness is guaranteed by the algorithms themselves: a pending entry
        stays incomplete while any of its busy components lags, and every
        later entry then shares that pending slot, so completeness always
        forms a prefix.)"""
        deliveries = {
            a.ports[0][1]: a.id
            for a in sys.interactions
            if a.kind == "delivery" and len(a.ports) >= 1
        }
        for aid in self.setup.interaction_ids:
            did = deliveries.get(f"out_{aid}")
            if did is None or did not in hidden:
                return False
        return True


class BoundRecon:
    def __init__(self, setup: ReconSetup, slots: dict[str, int]):
        self.setup = setup
        self.gs_slots = [slots[_gs_var(a)] for a in setup.interaction_ids]
        self.mirror_slots: list[Optional[list[tuple[str, int]]]] = []
        self.mirror_loc: list[Optional[int]] = []
        self.copy_slots: list[Optional[list[tuple[str, int]]]] = []
        self.copy_loc: list[Optional[int]] = []
        for meta, on in zip(setup.comps, setup.monitored):
            if not on:
                self.mirror_slots.append(None)
                self.mirror_loc.append(None)
                self.copy_slots.append(None)
                self.copy_loc.append(None)
                continue
            self.mirror_slots.append(
                [(v, slots[_mirror_var(meta.cid, v)]) for v in meta.var_names])
            self.mirror_loc.append(slots[_mirror_var(meta.cid, LOC_VAR)])
            self.copy_slots.append(
                [(v, slots[_copy_var(meta.cid, v)]) for v in meta.var_names])
            self.copy_loc.append(slots[_copy_var(meta.cid, LOC_VAR)])

    def _gs(self, values: tuple) -> tuple[bool, ...]:
        return tuple(values[s] for s in self.gs_slots)

    def _with_gs(self, values: tuple, gs: tuple[bool, ...]) -> tuple:
        vals = list(values)
        for s, b in zip(self.gs_slots, gs):
            vals[s] = b
        return tuple(vals)

    def _mirror_state(self, values: tuple, index: int) -> ComponentState:
        meta = self.setup.comps[index]
        loc = meta.locations[values[self.mirror_loc[index]]]
        pairs = tuple((v, values[s]) for v, s in self.mirror_slots[index])
        return ComponentState(loc, pairs)

    def run_step(self, step: BuiltinStep, values: tuple, payload: ReconBuffer):
        setup = self.setup
        gs = self._gs(values)
        if step.name == "new":
            mirrors = [
                self._mirror_state(values, i) if on else UNMONITORED
                for i, on in enumerate(setup.monitored)
            ]
            buf, gs = _core_new(setup, payload, gs, step.arg, mirrors)
        elif step.name == "upd":
            index = setup.comp_index(step.arg)
            buf, gs = _core_upd(setup, payload, gs, index,
                                self._mirror_state(values, index))
        else:
            raise CbsError(f"unknown reconstructor action @{step.name}")
        return self._with_gs(values, gs), buf

    def run_deliver(self, values: tuple, payload: ReconBuffer):
        buf, gs, record = _core_deliver(self.setup, payload, self._gs(values))
        vals = list(self._with_gs(values, gs))
        for i, slot in enumerate(record[1]):
            if isinstance(slot, ComponentState):
                meta = self.setup.comps[i]
                vals[self.copy_loc[i]] = meta.locations.index(slot.location)
                valuation = slot.valuation()
                for v, s in self.copy_slots[i]:
                    vals[s] = valuation[v]
        return tuple(vals), buf, record

    def unstable(self, enc) -> bool:
        """Whether undelivered reconstructed states are pending (flush hint)."""
        _, values, _ = enc
        return any(values[s] for s in self.gs_slots)

    def canonical(self, enc):
        """Canonical representative for state-space exploration.

        Observable transition enabledness reads only the gs variables (the
        guards) from this component; the buffered entries feed nothing but
        future gs changes and the write-only delivery copies.  In a stable
        state (all gs false) the entry list is therefore behaviorally inert:
        the canonical representative drops it (keeping the busy flags), which
        both keeps the unbounded pending queue out of state identity and
        makes successor computation O(1) in the lag length.  Unstable states
        are kept exact."""
        loc, values, payload = enc
        if payload is None or self.setup.retain or not payload.entries:
            return enc
        if any(values[s] for s in self.gs_slots):
            return enc
        return (loc, values, ReconBuffer((), 0, payload.z))


# --- system transformation -----------------------------------------------------------


def _base_meta(comp: AtomicComponent) -> CompMeta:
    names = tuple(n for n in comp.var_names if n != LOC_VAR)
    init_valuation = comp.initial_valuation()
    return CompMeta(
        cid=comp.id,
        var_names=names,
        locations=comp.locations,
        initial=ComponentState(
            comp.initial_location, tuple((n, init_valuation[n]) for n in names)
        ),
    )


def _build_setup(base: Sequence[AtomicComponent], interactions: Sequence[Interaction],
                 monitored_ids: Sequence[str], variant: str, retain: bool) -> ReconSetup:
    index = {c.id: i for i, c in enumerate(base)}
    regular = [a for a in interactions if a.kind == "regular"]
    involvement = tuple(
        frozenset(index[cid] for cid, _ in a.ports if cid in index)
        for a in regular
    )
    monitored = tuple(c.id in set(monitored_ids) for c in base)
    return ReconSetup(
        interaction_ids=tuple(a.id for a in regular),
        involvement=involvement,
        comps=tuple(_base_meta(c) for c in base),
        monitored=monitored,
        variant=variant,
        retain=retain,
    )


def _rgt_component(setup: ReconSetup) -> AtomicComponent:
    from .expr import Lit as _Lit

    variables: list[tuple[str, Value]] = [
        (_gs_var(a), False) for a in setup.interaction_ids
    ]
    ports: list[Port] = [Port(f"notify_{a}") for a in setup.interaction_ids]
    copy_names_all: list[str] = []
    for meta, on in zip(setup.comps, setup.monitored):
        if not on:
            continue
        mirror_names = []
        init_valuation = dict(meta.initial.values)
        for v in meta.var_names:
            variables.append((_mirror_var(meta.cid, v), init_valuation[v]))
            mirror_names.append(_mirror_var(meta.cid, v))
        variables.append(
            (_mirror_var(meta.cid, LOC_VAR), meta.locations.index(meta.initial.location)))
        mirror_names.append(_mirror_var(meta.cid, LOC_VAR))
        for v in meta.var_names:
            variables.append((_copy_var(meta.cid, v), init_valuation[v]))
            copy_names_all.append(_copy_var(meta.cid, v))
        variables.append(
            (_copy_var(meta.cid, LOC_VAR), meta.locations.index(meta.initial.location)))
        copy_names_all.append(_copy_var(meta.cid, LOC_VAR))
        ports.append(Port(f"β_{meta.cid}", tuple(mirror_names)))
    ports.extend(Port(f"out_{a}", tuple(copy_names_all)) for a in setup.interaction_ids)

    def all_quiet() -> object:
        guard = None
        for a in setup.interaction_ids:
            term = Unary("not", Var(_gs_var(a)))
            guard = term if guard is None else Binary("and", guard, term)
        return guard if guard is not None else _Lit(True)

    guard_new = all_quiet() if setup.guards_new() else _Lit(True)
    guard_upd = all_quiet() if setup.guards_upd() else _Lit(True)
    transitions: list[Transition] = []
    for a in setup.interaction_ids:
        transitions.append(Transition(
            "ctl", f"notify_{a}", guard_new, BuiltinStep("new", a), "ctl"))
    for meta, on in zip(setup.comps, setup.monitored):
        if on:
            transitions.append(Transition(
                "ctl", f"β_{meta.cid}", guard_upd, BuiltinStep("upd", meta.cid), "ctl"))
    for a in setup.interaction_ids:
        transitions.append(Transition(
            "ctl", f"out_{a}", Var(_gs_var(a)), (), "ctl"))
    return AtomicComponent(
        id=RGT_ID,
        ports=tuple(ports),
        locations=("ctl",),
        initial_location="ctl",
        variables=tuple(variables),
        transitions=tuple(transitions),
        behavior=ReconBehavior(setup),
    )


def transform_system(sys: CompositeSystem, monitored: Optional[Iterable[str]] = None,
                     variant: str = "default", retain: bool = False) -> CompositeSystem:
    """Rewire a partial-state system around a synthesized reconstructor.

    ``monitored`` lists the components whose state the property observes
    (None = all).  Unobserved components keep their original form; their
    buffer slots carry a fixed placeholder that counts as settled.
    """
    if not sys.is_partial_form():
        raise CbsError("transform_system expects a partial-state system")
    if any(c.id == RGT_ID for c in sys.components):
        raise CbsError(f"system already contains a component named {RGT_ID}")
    known = {c.id for c in sys.components}
    if monitored is None:
        monitored_ids: tuple[str, ...] = tuple(c.id for c in sys.components)
    else:
        monitored_ids = tuple(dict.fromkeys(monitored))
        for cid in monitored_ids:
            if cid not in known:
                raise UnknownMonitoredVariable(f"unknown component {cid!r}")
    setup = _build_setup(sys.components, sys.interactions, monitored_ids,
                         variant, retain)
    base = tuple(
        instrument_atomic(c) if on else c
        for c, on in zip(sys.components, setup.monitored)
    )
    rewired: list[Interaction] = []
    for a in sys.interactions:
        if a.kind == "regular":
            rewired.append(replace(
                a, ports=a.ports + ((RGT_ID, f"notify_{a.id}"),)))
        elif a.kind == "busy":
            cid = a.ports[0][0]
            i = setup.comp_index(cid)
            if not setup.monitored[i]:
                rewired.append(a)
                continue
            meta = setup.comps[i]
            transfer = tuple(
                Assignment(f"{RGT_ID}.{_mirror_var(cid, v)}", Var(f"{cid}.{v}"))
                for v in meta.var_names + (LOC_VAR,)
            )
            rewired.append(replace(
                a,
                ports=a.ports + ((RGT_ID, f"β_{cid}"),),
                transfer=transfer,
            ))
        else:
            raise CbsError(f"unexpected interaction kind {a.kind!r} in input")
    deliveries = tuple(
        Interaction(f"deliver_{a}", ((RGT_ID, f"out_{a}"),), (), "delivery", "deliver")
        for a in setup.interaction_ids
    )
    return CompositeSystem(
        base + (_rgt_component(setup),),
        tuple(rewired) + deliveries,
        name=sys.name,
    )


def wire_reconstructor(sys: CompositeSystem, comp_id: str, variant: str = "default",
                       monitored: Sequence[str] = (), retain: bool = False) -> CompositeSystem:
    """Attach runtime behavior to a parsed reconstructor component.

    Used by the model loader: documents carry the reconstructor's structure
    plus a builtin declaration; the data state and algorithms are rebuilt
    from the composite itself.
    """
    base = [c for c in sys.components if c.id != comp_id]
    if len(base) == len(sys.components):
        raise CbsError(f"no component named {comp_id!r} to wire")
    setup = _build_setup(base, sys.interactions, monitored, variant, retain)
    components = tuple(
        replace(c, behavior=ReconBehavior(setup)) if c.id == comp_id else c
        for c in sys.components
    )
    return CompositeSystem(components, sys.interactions, name=sys.name)
