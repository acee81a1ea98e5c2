"""Execution semantics: sequential (global-state) interpretation, the
partial-state transformation, and the engines built on top of them.

The heart of the module is CompiledSystem, which turns an immutable
CompositeSystem into closures over tuple-encoded states.  Every consumer of
the operational semantics (public stepping helpers, the run engines, the
state-space explorer in bisim) goes through the same compiled core, so there
is exactly one implementation of the firing rule.

Firing an interaction proceeds in three phases:

1. completion phase: if the interaction contains a component's β port, that
   component's internal computation step runs first (operationally the step
   ran while the component was busy; the β synchronization publishes it);
2. data transfer: the interaction's assignments execute left to right over
   the qualified attached variables, seeing phase-1 results;
3. remaining involved components fire their selected transitions.

Guards are always evaluated on the pre-fire state.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Iterable, Optional, Sequence, Union

from .errors import CbsError, NotEnabled
from .expr import Assignment, apply_assignments, compile_expr, eval_expr
from .model import (
    BETA_PORT,
    LOC_VAR,
    AtomicComponent,
    BuiltinStep,
    ComponentState,
    CompositeSystem,
    Interaction,
    SystemState,
    is_busy_location,
)

# --- labels and traces -----------------------------------------------------


@dataclass(frozen=True)
class Beta:
    """Completion notification of the component at 1-based ``index``."""

    index: int

    def __str__(self) -> str:
        return f"β{self.index}"


Label = Union[str, Beta]

_BETA_RE = re.compile(r"^β(\d+)$")


def label_name(label: Label) -> str:
    return str(label)


def parse_label(name: str) -> Label:
    m = _BETA_RE.match(name)
    if m:
        return Beta(int(m.group(1)))
    return name


@dataclass(frozen=True)
class Trace:
    """An alternating sequence: initial state, then (label, state) steps."""

    initial: SystemState
    steps: tuple[tuple[Label, SystemState], ...] = ()

    def states(self) -> list[SystemState]:
        return [self.initial] + [q for _, q in self.steps]

    def labels(self) -> list[Label]:
        return [l for l, _ in self.steps]

    def last_state(self) -> SystemState:
        return self.steps[-1][1] if self.steps else self.initial

    def extend(self, label: Label, state: SystemState) -> "Trace":
        return Trace(self.initial, self.steps + ((label, state),))

    def prefix(self, n_steps: int) -> "Trace":
        return Trace(self.initial, self.steps[:n_steps])

    def __len__(self) -> int:
        return len(self.steps)


# --- scheduling policies -----------------------------------------------------


class SeededRandom:
    """Uniform choice over the enabled candidates, reproducible by seed."""

    def __init__(self, seed: int):
        self.seed = seed
        self._rng = random.Random(seed)

    def choose(self, candidates: Sequence[Label]) -> Optional[Label]:
        if not candidates:
            return None
        return candidates[self._rng.randrange(len(candidates))]

    def fresh(self) -> "SeededRandom":
        return SeededRandom(self.seed)


class FixedSequence:
    """Replays an explicit schedule; each entry must be enabled when consumed."""

    def __init__(self, labels: Iterable[Label | str]):
        self.labels = [parse_label(l) if isinstance(l, str) else l for l in labels]
        self._pos = 0

    def next(self) -> Optional[Label]:
        if self._pos >= len(self.labels):
            return None
        label = self.labels[self._pos]
        self._pos += 1
        return label

    def fresh(self) -> "FixedSequence":
        return FixedSequence(self.labels)


class CallbackPolicy:
    """Interactive hook: given the enabled candidates, return the choice
    (or None to stop)."""

    def __init__(self, fn: Callable[[Sequence[Label]], Optional[Label]]):
        self.fn = fn

    def choose(self, candidates: Sequence[Label]) -> Optional[Label]:
        return self.fn(candidates)

    def fresh(self) -> "CallbackPolicy":
        return CallbackPolicy(self.fn)


Policy = Union[SeededRandom, FixedSequence, CallbackPolicy]


@dataclass
class EngineConfig:
    policy: Policy
    max_steps: int = 100
    drain: bool = True
    busy_delay: float | tuple[float, float] = 0.0
    real_time: bool = False
    threads: int = 0  # 0 = one worker per component

    def __post_init__(self):
        if self.max_steps < 0:
            raise CbsError("max_steps must be >= 0")


@dataclass
class RunResult:
    """Outcome of an engine run.

    ``trace`` is always a trace of the underlying (uninstrumented) system:
    observer components and the instrumentation variable are projected away,
    so the trace replays in plain partial-state semantics and can be fed to
    the witness reconstruction directly.
    """

    trace: Trace
    deadlocked: bool = False
    delivered: list[tuple[str, tuple]] = field(default_factory=list)
    verdicts: list[str] = field(default_factory=list)
    gamma_count: int = 0
    beta_count: int = 0
    delivered_count: int = 0
    wall_seconds: float = 0.0

    @property
    def extra_count(self) -> int:
        return self.beta_count + self.delivered_count


# --- compiled core -------------------------------------------------------------


EncComponent = tuple[int, tuple, object]  # (location index, values, payload)
EncState = tuple[EncComponent, ...]


@dataclass
class CompiledTransition:
    source: int
    port: str
    guard: Callable[[tuple], object]
    step: object  # list[(slot, fn)] | BuiltinStep
    target: int


class CompiledComponent:
    def __init__(self, comp: AtomicComponent, index: int):
        self.comp = comp
        self.index = index
        self.slots = {name: i for i, (name, _) in enumerate(comp.variables)}
        self.var_names = comp.var_names
        self.loc_index = {name: i for i, name in enumerate(comp.locations)}
        self.loc_names = comp.locations
        self.busy = tuple(is_busy_location(l) for l in comp.locations)
        self.attached = {p.id: p.attached for p in comp.ports}
        self.by_source_port: dict[tuple[int, str], list[CompiledTransition]] = {}
        for t in comp.transitions:
            ct = CompiledTransition(
                source=self.loc_index[t.source],
                port=t.port,
                guard=compile_expr(t.guard, self.slots),
                step=self._compile_step(t.step),
                target=self.loc_index[t.target],
            )
            self.by_source_port.setdefault((ct.source, t.port), []).append(ct)
        self.behavior = None
        if comp.behavior is not None:
            self.behavior = comp.behavior.bind(self)

    def _compile_step(self, step):
        if isinstance(step, BuiltinStep):
            return step
        return [(self.slots[a.target], compile_expr(a.source, self.slots))
                for a in step]

    def encode(self, cs: ComponentState) -> EncComponent:
        values = tuple(v for _, v in cs.values)
        if tuple(k for k, _ in cs.values) != self.var_names:
            valuation = cs.valuation()
            values = tuple(valuation[n] for n in self.var_names)
        return (self.loc_index[cs.location], values, cs.payload)

    def decode(self, enc: EncComponent) -> ComponentState:
        loc, values, payload = enc
        return ComponentState(
            self.loc_names[loc],
            tuple(zip(self.var_names, values)),
            payload,
        )

    def select(self, enc: EncComponent, port: str) -> Optional[CompiledTransition]:
        """First enabled transition from the current location on ``port``."""
        for ct in self.by_source_port.get((enc[0], port), ()):
            if ct.guard(enc[1]):
                return ct
        return None

    def apply(self, enc: EncComponent, ct: CompiledTransition) -> EncComponent:
        loc, values, payload = enc
        if isinstance(ct.step, BuiltinStep):
            if self.behavior is None:
                raise CbsError(
                    f"component {self.comp.id} has builtin actions but no behavior")
            values, payload = self.behavior.run_step(ct.step, values, payload)
        else:
            vals = list(values)
            for slot, fn in ct.step:
                vals[slot] = fn(tuple(vals))
            values = tuple(vals)
        return (ct.target, values, payload)


@dataclass
class CompiledInteraction:
    index: int
    inter: Interaction
    parts: list[tuple[int, str]]  # (component position, port id)
    beta_part: Optional[int]  # position in parts of the β-completion, if any
    label: Label


class CompiledSystem:
    def __init__(self, sys: CompositeSystem):
        self.sys = sys
        self.components = [CompiledComponent(c, i) for i, c in enumerate(sys.components)]
        self.interactions: list[CompiledInteraction] = []
        for idx, inter in enumerate(sys.interactions):
            parts = [(sys.component_index(cid), pid) for cid, pid in inter.ports]
            beta_part = None
            for k, (_, pid) in enumerate(parts):
                if pid == BETA_PORT:
                    beta_part = k
            label: Label
            if inter.kind == "busy":
                label = Beta(parts[beta_part][0] + 1)
            else:
                label = inter.id
            self.interactions.append(
                CompiledInteraction(idx, inter, parts, beta_part, label))
        self.by_label = {ci.label: ci for ci in self.interactions}
        self.by_id = {ci.inter.id: ci for ci in self.interactions}
        # base = the underlying system's components (observers carry behaviors)
        self.base_indices = [i for i, c in enumerate(sys.components)
                             if c.behavior is None]
        self.monitor_index = next(
            (i for i, c in enumerate(sys.components)
             if getattr(c.behavior, "is_monitor", False)), None)

    # -- states ------------------------------------------------------------

    def encode(self, q: SystemState) -> EncState:
        return tuple(cc.encode(cs) for cc, cs in zip(self.components, q))

    def decode(self, enc: EncState) -> SystemState:
        return tuple(cc.decode(e) for cc, e in zip(self.components, enc))

    def initial(self) -> EncState:
        return self.encode(self.sys.initial_state())

    # -- enabledness ---------------------------------------------------------

    def interaction_enabled(self, enc: EncState, ci: CompiledInteraction) -> bool:
        for pos, port in ci.parts:
            if self.components[pos].select(enc[pos], port) is None:
                return False
        return True

    def enabled(self, enc: EncState) -> list[CompiledInteraction]:
        return [ci for ci in self.interactions if self.interaction_enabled(enc, ci)]

    # -- firing ----------------------------------------------------------------

    def complete_component(self, ci: CompiledInteraction,
                           comp_enc: EncComponent) -> EncComponent:
        """Compute a busy component's completion effect (pure; safe to run on
        a worker thread against a snapshot of that component alone)."""
        pos, port = ci.parts[ci.beta_part]
        cc = self.components[pos]
        ct = cc.select(comp_enc, port)
        if ct is None:
            raise NotEnabled(f"{ci.inter.id}: component {cc.comp.id} cannot complete")
        return cc.apply(comp_enc, ct)

    def complete_phase_a(self, enc: EncState, ci: CompiledInteraction) -> EncComponent:
        pos, _ = ci.parts[ci.beta_part]
        return self.complete_component(ci, enc[pos])

    def fire(self, enc: EncState, ci: CompiledInteraction,
             precomputed: Optional[EncComponent] = None):
        """Fire ``ci``; returns (state', delivered records)."""
        # select all transitions on the pre-fire state
        selected: list[tuple[int, CompiledComponent, CompiledTransition]] = []
        for pos, port in ci.parts:
            cc = self.components[pos]
            ct = cc.select(enc[pos], port)
            if ct is None:
                raise NotEnabled(
                    f"interaction {ci.inter.id} is not enabled "
                    f"(component {cc.comp.id})")
            selected.append((pos, cc, ct))

        state = list(enc)
        delivered: list = []

        # phase 1: completion step
        if ci.beta_part is not None:
            pos, cc, ct = selected[ci.beta_part]
            state[pos] = precomputed if precomputed is not None else cc.apply(enc[pos], ct)

        # phase 2: data transfer over qualified attached variables
        inter = ci.inter
        if inter.builtin_transfer or inter.transfer:
            if inter.builtin_transfer == "deliver":
                rpos = next(pos for pos, _, _ in selected
                            if self.components[pos].behavior is not None
                            and hasattr(self.components[pos].behavior, "run_deliver"))
                cc = self.components[rpos]
                loc, values, payload = state[rpos]
                values, payload, record = cc.behavior.run_deliver(values, payload)
                state[rpos] = (loc, values, payload)
                delivered.append(record)
            elif inter.builtin_transfer:
                raise CbsError(f"unknown builtin transfer {inter.builtin_transfer!r}")
            if inter.transfer:
                env: dict[str, object] = {}
                slot_of: dict[str, tuple[int, int]] = {}
                for pos, port in ci.parts:
                    cc = self.components[pos]
                    for var in cc.attached[port]:
                        slot = cc.slots[var]
                        env[f"{cc.comp.id}.{var}"] = state[pos][1][slot]
                        slot_of[f"{cc.comp.id}.{var}"] = (pos, slot)
                written: dict[str, object] = {}
                for a in inter.transfer:
                    val = eval_expr(a.source, env)
                    env[a.target] = val
                    written[a.target] = val
                for name, val in written.items():
                    pos, slot = slot_of[name]
                    loc, values, payload = state[pos]
                    vals = list(values)
                    vals[slot] = val
                    state[pos] = (loc, tuple(vals), payload)

        # phase 3: remaining involved components
        for k, (pos, cc, ct) in enumerate(selected):
            if k == ci.beta_part:
                continue
            state[pos] = cc.apply(state[pos], ct)

        return tuple(state), delivered

    # -- projection to the underlying system ------------------------------------

    def project(self, enc: EncState) -> SystemState:
        """Trace view: base components only, instrumentation variable removed."""
        out = []
        for i in self.base_indices:
            cc = self.components[i]
            loc, values, _ = enc[i]
            pairs = tuple(
                (n, v) for n, v in zip(cc.var_names, values) if n != LOC_VAR
            )
            out.append(ComponentState(cc.loc_names[loc], pairs, None))
        return tuple(out)

    def monitor_verdict(self, enc: EncState) -> Optional[str]:
        if self.monitor_index is None:
            return None
        i = self.monitor_index
        return self.components[i].behavior.current_verdict(enc[i][1], enc[i][2])


@lru_cache(maxsize=128)
def compile_system(sys: CompositeSystem) -> CompiledSystem:
    return CompiledSystem(sys)


# --- public stepping helpers ------------------------------------------------------


def enabled_interactions(sys: CompositeSystem, q: SystemState) -> list[Interaction]:
    """All interactions enabled at ``q`` (busy components enable only their
    completion), in declaration order."""
    cs = compile_system(sys)
    enc = cs.encode(q)
    return [ci.inter for ci in cs.enabled(enc)]


def _resolve(cs: CompiledSystem, label) -> CompiledInteraction:
    if isinstance(label, Interaction):
        label = label.id
    if isinstance(label, str):
        label = parse_label(label)
    ci = cs.by_label.get(label)
    if ci is None and isinstance(label, str):
        ci = cs.by_id.get(label)
    if ci is None:
        raise NotEnabled(f"unknown interaction/label {label!r}")
    return ci


def step_global(sys: CompositeSystem, q: SystemState, a) -> SystemState:
    """Fire interaction ``a`` atomically (transfer, then computation steps)."""
    cs = compile_system(sys)
    ci = _resolve(cs, a)
    enc, _ = cs.fire(cs.encode(q), ci)
    return cs.decode(enc)


def step_partial(sys: CompositeSystem, q: SystemState, label) -> SystemState:
    """Fire an interaction or a completion label in partial-state semantics."""
    return step_global(sys, q, label)


def replay_trace(sys: CompositeSystem, trace: Trace) -> bool:
    """Check that ``trace`` is a valid trace of ``sys`` by re-executing it."""
    cs = compile_system(sys)
    enc = cs.encode(trace.initial)
    if trace.initial != cs.decode(enc):
        return False
    for label, state in trace.steps:
        ci = _resolve(cs, label)
        if not cs.interaction_enabled(enc, ci):
            return False
        enc, _ = cs.fire(enc, ci)
        if cs.decode(enc) != state:
            return False
    return True


# --- the partial-state transformation ----------------------------------------------


def busy_location_name(source: str, port: str, target: str, k: int = 0) -> str:
    base = f"⊥@{port}@{source}@{target}"
    return base if k == 0 else f"{base}@{k}"


def to_partial(sys: CompositeSystem) -> CompositeSystem:
    """Split every transition into a visible half (guard, no step) and an
    internal β-labeled half (carries the step), adding one fresh busy location
    per transition and a singleton completion interaction per component."""
    from .model import Port, Transition

    if sys.is_partial_form():
        raise CbsError("system is already in partial-state form")
    new_components = []
    for comp in sys.components:
        used: dict[str, int] = {}
        busy_locs: list[str] = []
        transitions: list[Transition] = []
        from .expr import Lit

        for t in comp.transitions:
            key = busy_location_name(t.source, t.port, t.target)
            k = used.get(key, 0)
            used[key] = k + 1
            busy = busy_location_name(t.source, t.port, t.target, k)
            busy_locs.append(busy)
            transitions.append(Transition(t.source, t.port, t.guard, (), busy))
            transitions.append(Transition(busy, BETA_PORT, Lit(True), t.step, t.target))
        new_components.append(replace(
            comp,
            ports=comp.ports + (Port(BETA_PORT, ()),),
            locations=comp.locations + tuple(busy_locs),
            transitions=tuple(transitions),
        ))
    completions = tuple(
        Interaction(f"β{i + 1}", ((c.id, BETA_PORT),), (), "busy")
        for i, c in enumerate(sys.components)
    )
    return CompositeSystem(
        tuple(new_components),
        sys.interactions + completions,
        name=sys.name,
    )


# --- engines ----------------------------------------------------------------------


def run_global(sys: CompositeSystem, cfg: EngineConfig) -> RunResult:
    """Sequential global-state execution under the configured policy."""
    import time as _time

    t0 = _time.perf_counter()
    cs = compile_system(sys)
    enc = cs.initial()
    trace = Trace(cs.decode(enc))
    result = RunResult(trace)
    policy = cfg.policy
    steps = 0
    while steps < cfg.max_steps:
        if isinstance(policy, FixedSequence):
            label = policy.next()
            if label is None:
                break
            ci = _resolve(cs, label)
            if not cs.interaction_enabled(enc, ci):
                raise NotEnabled(f"scheduled interaction {ci.inter.id} is not enabled")
        else:
            candidates = [ci.label for ci in cs.enabled(enc)]
            if not candidates:
                result.deadlocked = True
                break
            label = policy.choose(candidates)
            if label is None:
                break
            ci = _resolve(cs, label)
        enc, _ = cs.fire(enc, ci)
        trace = trace.extend(ci.label, cs.decode(enc))
        steps += 1
    result.trace = trace
    result.gamma_count = steps
    result.wall_seconds = _time.perf_counter() - t0
    return result


class VirtualRunner:
    """Deterministic concurrent execution in virtual time.

    Worker completions are interleaved with interaction starts by the policy
    itself, which makes runs bit-identical for a given seed regardless of
    host scheduling.
    """

    def __init__(self, sys: CompositeSystem, cfg: EngineConfig, observer=None):
        self.cs = compile_system(sys)
        self.cfg = cfg
        self.observer = observer

    def run(self) -> RunResult:
        import time as _time

        t0 = _time.perf_counter()
        cs = self.cs
        cfg = self.cfg
        enc = cs.initial()
        trace = Trace(cs.project(enc))
        result = RunResult(trace)
        policy = cfg.policy

        def fire(ci):
            nonlocal enc, trace
            enc2, delivered = cs.fire(enc, ci)
            enc = enc2
            for record in delivered:
                result.delivered.append(record)
                result.delivered_count += 1
                verdict = cs.monitor_verdict(enc)
                if verdict is not None:
                    result.verdicts.append(verdict)
            kind = ci.inter.kind
            if kind == "regular":
                result.gamma_count += 1
                trace = trace.extend(ci.label, cs.project(enc))
            elif kind == "busy":
                result.beta_count += 1
                trace = trace.extend(ci.label, cs.project(enc))
            # deliveries are observer-only: not part of the functional trace
            if self.observer is not None:
                self.observer(ci, enc)

        if isinstance(policy, FixedSequence):
            while True:
                label = policy.next()
                if label is None:
                    break
                ci = _resolve(cs, label)
                if not cs.interaction_enabled(enc, ci):
                    raise NotEnabled(f"scheduled label {label_name(label)} not enabled")
                fire(ci)
        else:
            while True:
                draining = result.gamma_count >= cfg.max_steps
                if draining and not cfg.drain:
                    break
                cands = [ci for ci in cs.enabled(enc)
                         if not (draining and ci.inter.kind == "regular")]
                if not cands:
                    if not draining:
                        result.deadlocked = True
                    break
                label = policy.choose([ci.label for ci in cands])
                if label is None:
                    break
                fire(_resolve(cs, label))

        if cfg.drain:
            while True:
                cands = [ci for ci in cs.enabled(enc) if ci.inter.kind != "regular"]
                if not cands:
                    break
                fire(cands[0])

        result.trace = trace
        result.wall_seconds = _time.perf_counter() - t0
        return result


def run_partial_concurrent(sys: CompositeSystem, cfg: EngineConfig,
                           observer=None) -> RunResult:
    """Concurrent partial-state execution.

    Virtual-time mode (default) is single-threaded and deterministic; with
    ``cfg.real_time`` the run uses actual worker threads and wall-clock busy
    delays (see cbsrv.concurrent).  ``observer``, if given, is called after
    every fired interaction with the compiled interaction and the new
    (internal) state.
    """
    if not sys.is_partial_form():
        raise CbsError("run_partial_concurrent expects a partial-state system")
    if cfg.real_time:
        from .concurrent import ThreadedRunner

        return ThreadedRunner(sys, cfg).run()
    return VirtualRunner(sys, cfg, observer).run()
