import pytest

from cbsrv import (
    Beta,
    EngineConfig,
    FixedSequence,
    SeededRandom,
    enabled_interactions,
    run_partial_concurrent,
    step_partial,
    to_partial,
    transform_system,
)
from cbsrv.errors import (
    AlreadyInstrumented,
    GuardViolated,
    NotBusy,
    NothingToDeliver,
    UnknownMonitoredVariable,
)
from cbsrv.model import ComponentState
from cbsrv.transform import (
    UNMONITORED,
    Reconstructor,
    ReconSetup,
    _build_setup,
    instrument_atomic,
    is_stable,
    rgt_check,
    rgt_get,
    rgt_new,
    rgt_upd,
)
from cbsrv.witness import acc_consume, acc_start


def W(loc, x):
    return ComponentState(loc, (("x", x),))


def G(loc):
    return ComponentState(loc, ())


# --- instrumentation -------------------------------------------------------


def test_instrument_generator(task_partial):
    gen = next(c for c in task_partial.components if c.id == "Generator")
    inst = instrument_atomic(gen)
    assert "loc" in inst.var_names
    beta_port = inst.port_map()["β"]
    assert beta_port.attached == ("loc",)
    # every completion records its destination in loc
    for t in inst.transitions:
        if t.port == "β":
            assert t.step[-1].target == "loc"
            assert t.step[-1].source.value == inst.locations.index(t.target)


def test_instrument_worker_keeps_step_order(task_partial):
    w1 = instrument_atomic(task_partial.components[0])
    exec_busy = next(t for t in w1.transitions if t.port == "exec").target
    beta = next(t for t in w1.transitions if t.source == exec_busy)
    assert [a.target for a in beta.step] == ["x", "loc"]
    assert w1.port_map()["β"].attached == ("x", "loc")


def test_instrument_twice_rejected(task_partial):
    inst = instrument_atomic(task_partial.components[0])
    with pytest.raises(AlreadyInstrumented):
        instrument_atomic(inst)


# --- the reconstruction buffer, driven over the table scenario ----------------


@pytest.fixture()
def setup(task, task_partial) -> ReconSetup:
    return _build_setup(task_partial.components, task_partial.interactions,
                        [c.id for c in task.components], "default", retain=True)


@pytest.fixture()
def table_events(task_partial):
    cfg = EngineConfig(FixedSequence(["ex12", "β4", "nt", "β2", "β1"]), drain=False)
    return run_partial_concurrent(task_partial, cfg).trace


def drive(recon, trace, upto):
    """Feed the first ``upto`` events, draining deliveries eagerly."""
    delivered = []
    for label, state in trace.steps[:upto]:
        if isinstance(label, Beta):
            recon = recon.on_completion(label.index - 1, state[label.index - 1])
        else:
            recon = rgt_new(recon, label)
        while recon.deliverable():
            recon, record = rgt_get(recon)
            delivered.append(record)
    return recon, delivered


def test_new_appends_pending_tuple(setup, table_events):
    r = Reconstructor.start(setup)
    r = rgt_new(r, "ex12")
    assert len(r.buffer.entries) == 2
    t = r.buffer.entries[1]
    assert t.tag == "ex12"
    assert t.slots == (None, None, W("free", 0), None)
    assert r.buffer.z == (True, True, False, True)


def test_new_on_unary_interaction(setup):
    r = rgt_new(Reconstructor.start(setup), "nt")
    assert r.buffer.entries[1].slots == (W("free", 0), W("free", 0), W("free", 0), None)


def test_completion_fills_pending_slots(setup, table_events):
    r, delivered = drive(Reconstructor.start(setup), table_events, 2)
    assert r.buffer.entries[1].slots == (None, None, W("free", 0), G("delivered"))
    assert not delivered and r.is_stable


def test_completion_for_idle_component_rejected(setup):
    with pytest.raises(NotBusy):
        Reconstructor.start(setup).on_completion(2, W("free", 0))


def test_last_completion_sets_ready_flag_and_delivers(setup, table_events):
    r, delivered = drive(Reconstructor.start(setup), table_events, 5)
    assert delivered == [
        ("ex12", (W("done", 1), W("done", 1), W("free", 0), G("delivered"))),
    ]
    assert r.is_stable
    # the nt entry is still pending its generator slot
    assert r.buffer.entries[2].slots[3] is None


def test_guard_blocks_new_until_delivery(setup, table_events):
    r = Reconstructor.start(setup)
    for label, state in table_events.steps:
        if isinstance(label, Beta):
            r = r.on_completion(label.index - 1, state[label.index - 1])
        else:
            r = rgt_new(r, label)
    # β1 completed the ex12 entry: the state is unstable now
    assert not is_stable(r)
    with pytest.raises(GuardViolated):
        rgt_new(r, "f3")
    with pytest.raises(GuardViolated):
        rgt_upd(r, 3, G("ready"))
    r2, record = rgt_get(r)
    assert record[0] == "ex12"
    assert is_stable(r2)


def test_get_with_nothing_ready(setup):
    with pytest.raises(NothingToDeliver):
        rgt_get(Reconstructor.start(setup))


def test_refresh_is_idempotent_noop_when_quiet(setup):
    r = rgt_new(Reconstructor.start(setup), "ex12")
    assert rgt_check(r) == r


def test_fifo_double_delivery(setup):
    # two unary interactions of the same component complete in order
    r = Reconstructor.start(setup)
    r = rgt_new(r, "nt")            # generator busy
    r = r.on_completion(3, G("delivered"))
    assert r.deliverable()
    r, rec1 = rgt_get(r)
    assert rec1[0] == "nt"
    r = rgt_new(r, "nt")
    r = r.on_completion(3, G("ready"))
    r, rec2 = rgt_get(r)
    assert rec2[0] == "nt"
    assert r.buffer.next_delivery == 3  # retain mode keeps delivered entries


def test_unguarded_variants(task, task_partial):
    setup = _build_setup(task_partial.components, task_partial.interactions,
                         [c.id for c in task.components], "unguarded-both",
                         retain=True)
    r = Reconstructor.start(setup)
    r = rgt_new(r, "nt")
    r = r.on_completion(3, G("delivered"))
    assert not r.is_stable
    # with suppressed guards the system may keep moving before delivery
    r = rgt_new(r, "f1")
    r = r.on_completion(0, W("free", 0))
    r, _ = rgt_get(r)
    r, _ = rgt_get(r)
    assert r.is_stable


# --- lock-step agreement with the pure accumulation ---------------------------


def assert_buffer_matches_acc(recon, acc):
    entries = recon.buffer.entries
    assert len(entries) == len(acc.states)
    for j, (entry, expected) in enumerate(zip(entries, acc.states)):
        assert entry.slots == expected, f"entry {j}"
    assert [t.tag for t in entries] == [None] + acc.labels


def test_lock_step_on_table_trace(setup, table_events):
    r = Reconstructor.start(setup)
    acc = acc_start(table_events.initial)
    for label, state in table_events.steps:
        if isinstance(label, Beta):
            r = r.on_completion(label.index - 1, state[label.index - 1])
        else:
            r = rgt_new(r, label)
        acc = acc_consume(acc, label, state)
        while r.deliverable():
            r, _ = rgt_get(r)
        assert_buffer_matches_acc(r, acc)


# --- system transformation ------------------------------------------------------


def test_transform_counts_fully_monitored(task, task_partial):
    tr = transform_system(task_partial)
    kinds = {}
    for a in tr.interactions:
        kinds[a.kind] = kinds.get(a.kind, 0) + 1
    assert kinds == {"regular": 10, "busy": 4, "delivery": 10}
    rgt = tr.components[-1]
    assert rgt.id == "RGT"
    assert all(("RGT" in a.component_ids()) for a in tr.interactions)


def test_transform_empty_support(task_partial):
    tr = transform_system(task_partial, monitored=[])
    assert tr.components[-1].id == "RGT"
    assert not any(c.is_instrumented() for c in tr.components[:-1])
    # completions stay untouched when nothing is observed
    for a in tr.interactions:
        if a.kind == "busy":
            assert len(a.ports) == 1


def test_transform_monitor_support(task, task_partial, task_monitor):
    assert set(task_monitor.support()) == {"Worker1", "Worker2", "Worker3"}
    tr = transform_system(task_partial, monitored=task_monitor.support())
    gen = next(c for c in tr.components if c.id == "Generator")
    assert not gen.is_instrumented()
    workers = [c for c in tr.components if c.id.startswith("Worker")]
    assert all(w.is_instrumented() for w in workers)
    # the generator's completion is not rewired
    b4 = next(a for a in tr.interactions if a.id == "β4")
    assert len(b4.ports) == 1


def test_transform_unknown_component(task_partial):
    with pytest.raises(UnknownMonitoredVariable):
        transform_system(task_partial, monitored=["Nobody"])


def test_unmonitored_slots_count_as_settled(task, task_partial):
    tr = transform_system(task_partial, monitored=["Worker1", "Worker2", "Worker3"])
    res = run_partial_concurrent(tr, EngineConfig(SeededRandom(2), max_steps=15))
    assert res.delivered_count == res.gamma_count
    for tag, slots in res.delivered:
        assert slots[3] is UNMONITORED


def test_delivery_order_equals_witness_steps(task, task_partial):
    from cbsrv.witness import replay_witness

    tr = transform_system(task_partial)
    res = run_partial_concurrent(tr, EngineConfig(SeededRandom(13), max_steps=25))
    witness = replay_witness(task, res.trace)
    assert [(tag, slots) for tag, slots in res.delivered] == \
        [(lab, q) for lab, q in witness.steps]


def test_enabledness_preserved_at_stable_states(task, task_partial):
    tr = transform_system(task_partial)
    ref = run_partial_concurrent(
        task_partial, EngineConfig(SeededRandom(21), max_steps=20))
    qb = task_partial.initial_state()
    qr = tr.initial_state()
    for label, _ in ref.trace.steps:
        # stabilize the transformed system first
        while True:
            pending = [a for a in enabled_interactions(tr, qr)
                       if a.kind == "delivery"]
            if not pending:
                break
            qr = step_partial(tr, qr, pending[0].id)
        base_enabled = {a.id for a in enabled_interactions(task_partial, qb)}
        rewired_enabled = {a.id for a in enabled_interactions(tr, qr)
                           if a.kind != "delivery"}
        assert base_enabled == rewired_enabled
        qb = step_partial(task_partial, qb, label)
        qr = step_partial(tr, qr, label)
