"""Online reconstruction of the witness trace from a partial-state event
stream, plus the replay oracle the reconstruction is tested against.

A partial-state run visits states where some components are busy; the witness
is the unique global-state trace with the same interaction sequence.  The
reconstruction keeps one pending entry per executed interaction, fills the
busy slots as completions arrive, and emits the settled prefix incrementally.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from .errors import ArityMismatch, MalformedStream, ReplayFailed
from .model import ComponentState, CompositeSystem, SystemState, is_busy_location
from .semantics import (
    Beta,
    Label,
    Trace,
    compile_system,
    label_name,
)

# One slot per component; None marks information still pending (the component
# was busy in every state observed since the interaction fired).
AccEntry = tuple[Optional[ComponentState], ...]


def entry_of(state: SystemState) -> AccEntry:
    """View a (possibly partial) state as an accumulation entry."""
    return tuple(None if is_busy_location(cs.location) else cs for cs in state)


def is_settled(entry: AccEntry) -> bool:
    return all(slot is not None for slot in entry)


def update_entry(fresh: AccEntry, stored: AccEntry) -> AccEntry:
    """Merge fresh component information into a stored entry.

    A slot takes the fresh value exactly when the fresh side knows it (the
    component is not busy) and the stored side does not; defined stored slots
    are never overwritten, so settled history stays settled.
    """
    if len(fresh) != len(stored):
        raise ArityMismatch(f"entry arity {len(stored)} vs state arity {len(fresh)}")
    return tuple(
        f if (f is not None and s is None) else s for f, s in zip(fresh, stored)
    )


def upd(fresh: SystemState, item: Union[SystemState, Label]):
    """Merge operator lifted to trace items: labels pass through unchanged."""
    if isinstance(item, (str, Beta)):
        return item
    return update_entry(entry_of(fresh), entry_of(item))


@dataclass
class Accumulation:
    """The pending reconstruction: entries for Init and for every interaction
    executed so far, interleaved with the interaction labels.

    Completions never append; they refine the stored entries in place.  The
    structure is always a settled prefix followed by a pending suffix.
    """

    states: list[AccEntry]
    labels: list[str]

    def __len__(self) -> int:
        return len(self.states) + len(self.labels)

    def last(self) -> AccEntry:
        return self.states[-1]

    def settled_count(self) -> int:
        """Number of leading entries with no pending slot."""
        k = 0
        for e in self.states:
            if not is_settled(e):
                break
            k += 1
        return k

    def copy(self) -> "Accumulation":
        return Accumulation(list(self.states), list(self.labels))


def acc_start(init: SystemState) -> Accumulation:
    entry = entry_of(init)
    if not is_settled(entry):
        raise MalformedStream("initial state must be global (no busy components)")
    return Accumulation([entry], [])


def acc_consume(acc: Accumulation, label: Label, state: SystemState) -> Accumulation:
    """Consume one event: interactions append (label, state); completions
    refine every stored entry."""
    arity = len(acc.states[0])
    if len(state) != arity:
        raise ArityMismatch(f"state arity {len(state)} vs {arity}")
    if isinstance(label, Beta):
        if not (1 <= label.index <= arity):
            raise MalformedStream(f"completion index {label.index} out of range")
        fresh = entry_of(state)
        return Accumulation(
            [update_entry(fresh, stored) for stored in acc.states],
            list(acc.labels),
        )
    if not isinstance(label, str):
        raise MalformedStream(f"not a label: {label!r}")
    states = list(acc.states)
    states.append(entry_of(state))
    labels = list(acc.labels)
    labels.append(label)
    return Accumulation(states, labels)


def acc_of_trace(trace: Trace) -> Accumulation:
    acc = acc_start(trace.initial)
    for label, state in trace.steps:
        acc = acc_consume(acc, label, state)
    return acc


# --- the settled prefix --------------------------------------------------------


@dataclass(frozen=True)
class WitnessPrefix:
    """A global-state trace, possibly followed by one trailing interaction
    label (the interaction whose resulting global state is still pending)."""

    trace: Trace
    trailing: Optional[str] = None

    def items(self) -> list:
        out: list = [self.trace.initial]
        for label, state in self.trace.steps:
            out.append(label)
            out.append(state)
        if self.trailing is not None:
            out.append(self.trailing)
        return out

    def __len__(self) -> int:
        return len(self.items())


def _to_state(entry: AccEntry) -> SystemState:
    assert is_settled(entry)
    return tuple(entry)  # type: ignore[return-value]


def witness_prefix(acc: Accumulation) -> WitnessPrefix:
    """The maximal settled prefix of the accumulation; when a pending suffix
    exists, the interaction label that immediately follows the prefix is
    exposed as trailing."""
    k = acc.settled_count()
    initial = _to_state(acc.states[0])
    steps = tuple(
        (acc.labels[i], _to_state(acc.states[i + 1])) for i in range(k - 1)
    )
    trailing = acc.labels[k - 1] if k <= len(acc.labels) else None
    return WitnessPrefix(Trace(initial, steps), trailing)


class WitnessBuilder:
    """Incremental reconstruction: feed events one at a time, get back only
    the newly settled portion of the witness prefix.

    The concatenation of the initial state and every increment equals the
    witness prefix of the whole consumed trace; output grows monotonically.
    """

    def __init__(self, init: SystemState):
        self.acc = acc_start(init)
        self._emitted = 1  # the initial state counts as emitted

    def feed(self, label: Label, state: SystemState) -> list:
        self.acc = acc_consume(self.acc, label, state)
        items = witness_prefix(self.acc).items()
        if len(items) < self._emitted:
            raise MalformedStream("witness prefix shrank; stream is not a valid trace")
        new = items[self._emitted:]
        self._emitted = len(items)
        return new

    def feed_trace(self, trace: Trace) -> list:
        out: list = []
        for label, state in trace.steps:
            out.extend(self.feed(label, state))
        return out

    @property
    def output(self) -> WitnessPrefix:
        return witness_prefix(self.acc)


# --- interaction projection and the replay oracle -------------------------------


def interaction_sequence(trace: Trace) -> list[str]:
    """The interaction labels of a trace, completions filtered out."""
    return [l for l in trace.labels() if not isinstance(l, Beta)]


def replay_witness(global_sys: CompositeSystem, partial_trace: Trace) -> Trace:
    """Independent oracle: replay the trace's interaction sequence in the
    global-state engine from Init.  The result is the unique witness of the
    partial trace; a replay failure falsifies the uniqueness property and is
    surfaced as ReplayFailed."""
    cs = compile_system(global_sys)
    enc = cs.initial()
    witness = Trace(cs.decode(enc))
    if witness.initial != partial_trace.initial:
        raise ReplayFailed("partial trace does not start at the system's initial state")
    for aid in interaction_sequence(partial_trace):
        ci = cs.by_id.get(aid)
        if ci is None:
            raise ReplayFailed(f"unknown interaction {aid!r}")
        if not cs.interaction_enabled(enc, ci):
            raise ReplayFailed(f"interaction {aid!r} not enabled during replay")
        enc, _ = cs.fire(enc, ci)
        witness = witness.extend(aid, cs.decode(enc))
    return witness


def render_prefix(sys: CompositeSystem, prefix: WitnessPrefix) -> str:
    parts = [sys.render_state(prefix.trace.initial)]
    for label, state in prefix.trace.steps:
        parts.append(label_name(label))
        parts.append(sys.render_state(state))
    if prefix.trailing is not None:
        parts.append(prefix.trailing)
    return " · ".join(parts)
