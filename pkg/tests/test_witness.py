import pytest

from cbsrv import (
    Beta,
    EngineConfig,
    FixedSequence,
    SeededRandom,
    WitnessBuilder,
    interaction_sequence,
    replay_witness,
    run_partial_concurrent,
)
from cbsrv.errors import MalformedStream, ReplayFailed
from cbsrv.model import ComponentState
from cbsrv.semantics import Trace
from cbsrv.witness import (
    acc_consume,
    acc_of_trace,
    acc_start,
    entry_of,
    update_entry,
    upd,
    witness_prefix,
)


def W(loc, x):
    return ComponentState(loc, (("x", x),))


def G(loc):
    return ComponentState(loc, ())


TABLE_TRACE_LABELS = ["ex12", "β4", "nt", "β2", "β1"]

# per-event accumulation contents: (states, labels), busy slots pending
TABLE_ACC = [
    ([(W("free", 0), W("free", 0), W("free", 0), G("ready"))], []),
    ([(W("free", 0), W("free", 0), W("free", 0), G("ready")),
      (None, None, W("free", 0), None)], ["ex12"]),
    ([(W("free", 0), W("free", 0), W("free", 0), G("ready")),
      (None, None, W("free", 0), G("delivered"))], ["ex12"]),
    ([(W("free", 0), W("free", 0), W("free", 0), G("ready")),
      (None, None, W("free", 0), G("delivered")),
      (None, None, W("free", 0), None)], ["ex12", "nt"]),
    ([(W("free", 0), W("free", 0), W("free", 0), G("ready")),
      (None, W("done", 1), W("free", 0), G("delivered")),
      (None, W("done", 1), W("free", 0), None)], ["ex12", "nt"]),
    ([(W("free", 0), W("free", 0), W("free", 0), G("ready")),
      (W("done", 1), W("done", 1), W("free", 0), G("delivered")),
      (W("done", 1), W("done", 1), W("free", 0), None)], ["ex12", "nt"]),
]


@pytest.fixture(scope="module")
def table_trace(task_partial):
    cfg = EngineConfig(FixedSequence(TABLE_TRACE_LABELS), drain=False)
    return run_partial_concurrent(task_partial, cfg).trace


def test_accumulation_matches_table_step_by_step(table_trace):
    acc = acc_start(table_trace.initial)
    states, labels = TABLE_ACC[0]
    assert acc.states == states and acc.labels == labels
    for k, (label, state) in enumerate(table_trace.steps, start=1):
        acc = acc_consume(acc, label, state)
        states, labels = TABLE_ACC[k]
        assert acc.states == states, f"step {k}"
        assert acc.labels == labels, f"step {k}"


def test_builder_table_final_output(task, table_trace):
    builder = WitnessBuilder(table_trace.initial)
    increments = [builder.feed(l, q) for l, q in table_trace.steps]
    # the settled portion appears only once the first worker completes
    assert increments[1] == [] and increments[2] == [] and increments[3] == []
    out = builder.output
    assert out.trace.initial == table_trace.initial
    assert [l for l, _ in out.trace.steps] == ["ex12"]
    assert out.trace.steps[0][1] == (W("done", 1), W("done", 1), W("free", 0),
                                     G("delivered"))
    assert out.trailing == "nt"
    # concatenation of all emissions equals the whole prefix
    emitted = [out.trace.initial]
    for inc in increments:
        emitted.extend(inc)
    assert emitted == out.items()


def test_acc_init_rejects_partial(task_partial):
    from cbsrv import step_partial

    q0 = task_partial.initial_state()
    q1 = step_partial(task_partial, q0, "ex12")
    with pytest.raises(MalformedStream):
        acc_start(q1)


def test_upd_examples(task_partial):
    from cbsrv import step_partial

    q0 = task_partial.initial_state()
    q1 = step_partial(task_partial, q0, "ex12")        # (⊥,⊥,free,⊥)
    q2 = step_partial(task_partial, q1, Beta(4))       # (⊥,⊥,free,delivered)
    merged = upd(q2, q1)
    assert merged == entry_of(q2)
    # labels pass through
    assert upd(q2, "nt") == "nt"
    assert upd(q2, Beta(1)) == Beta(1)
    # merging a state into itself changes nothing
    assert upd(q2, q2) == entry_of(q2)
    # settled slots are never overwritten
    e_settled = entry_of(q0)
    assert update_entry(entry_of(q2), e_settled) == e_settled


def test_beta_on_all_settled_acc_is_identity(task_partial, task):
    from cbsrv import step_partial

    q0 = task_partial.initial_state()
    acc = acc_start(q0)
    q1 = step_partial(task_partial, q0, "ex12")
    q2 = step_partial(task_partial, q1, Beta(1))
    # feeding a completion with nothing pending keeps the entries unchanged
    out = acc_consume(acc, Beta(1), q2)
    assert out.states == acc.states


def test_witness_prefix_trivial_cases(task_partial):
    q0 = task_partial.initial_state()
    acc = acc_start(q0)
    prefix = witness_prefix(acc)
    assert prefix.trace == Trace(q0) and prefix.trailing is None


def test_witness_oracle_golden(task, task_partial, table_trace):
    w = replay_witness(task, table_trace)
    assert [l for l, _ in w.steps] == ["ex12", "nt"]
    assert w.steps[0][1] == (W("done", 1), W("done", 1), W("free", 0), G("delivered"))
    assert w.steps[1][1] == (W("done", 1), W("done", 1), W("free", 0), G("ready"))


def test_witness_oracle_trivial(task):
    init = Trace(task.initial_state())
    assert replay_witness(task, init) == init


def test_interaction_sequence(table_trace):
    assert interaction_sequence(table_trace) == ["ex12", "nt"]
    all_beta = Trace(table_trace.initial,
                     tuple(s for s in table_trace.steps
                           if isinstance(s[0], Beta)))
    assert interaction_sequence(all_beta) == []


def test_oracle_rejects_disabled_replay(task):
    bogus = Trace(task.initial_state(), (("nt", task.initial_state()),))
    with pytest.raises(ReplayFailed):
        replay_witness(task, bogus)


def theorem_split(partial_sys, trace):
    """Independent restatement of the maximality characterization: the
    earliest interaction after which some involved component never
    completes; the witness prefix must equal the witness of the part before
    it, followed by that interaction."""
    labels = trace.labels()
    for t, lab in enumerate(labels):
        if isinstance(lab, Beta):
            continue
        inter = partial_sys.interaction(lab)
        involved = {partial_sys.component_index(cid) for cid, _ in inter.ports}
        later = labels[t + 1:]
        if any(not any(isinstance(l, Beta) and l.index == i + 1 for l in later)
               for i in involved):
            return trace.prefix(t), lab
    return None, None


def test_rgt_theorem_on_random_traces(task, task_partial):
    checked_partial = 0
    for seed in range(60):
        cfg = EngineConfig(SeededRandom(seed), max_steps=1 + seed % 25, drain=False)
        res = run_partial_concurrent(task_partial, cfg)
        trace = res.trace
        builder = WitnessBuilder(trace.initial)
        builder.feed_trace(trace)
        out = builder.output
        if task_partial.state_is_global(trace.last_state()):
            assert out.trace == replay_witness(task, trace)
            assert out.trailing is None
        else:
            prefix, a = theorem_split(task_partial, trace)
            assert a is not None
            assert out.trace == replay_witness(task, prefix)
            assert out.trailing == a
            checked_partial += 1
    assert checked_partial > 10  # the sample must actually hit partial endings
