"""Acceptance suite: each test enforces one acceptance criterion end to end
and prints a PASS line with the measured numbers (run with ``pytest -s``)."""

import dataclasses
import time

import pytest

import cbsrv
from cbsrv import (
    Beta,
    EngineConfig,
    FixedSequence,
    SeededRandom,
    WitnessBuilder,
    attach_monitor,
    interaction_sequence,
    replay_witness,
    run_global,
    run_partial_concurrent,
    to_partial,
    transform_system,
)
from cbsrv.model import ComponentState, CompositeSystem, is_busy_location
from cbsrv.monitor import verdicts_over
from cbsrv.semantics import compile_system
from cbsrv.transform import Reconstructor, _build_setup, rgt_get, rgt_new
from cbsrv.witness import acc_consume, acc_start, witness_prefix


def W(loc, x):
    return ComponentState(loc, (("x", x),))


def G(loc):
    return ComponentState(loc, ())


@pytest.fixture(scope="session")
def timed_corpus(task, task_partial):
    from conftest import drained_run
    from cbsrv.randgen import random_system

    t0 = time.perf_counter()
    runs = []
    for seed in range(300):
        runs.append((task, task_partial,
                     drained_run(task_partial, seed, 1 + seed % 40)))
    for sys_seed in range(1, 101):
        gsys = random_system(sys_seed)
        psys = to_partial(gsys)
        for k in range(2):
            runs.append((gsys, psys,
                         drained_run(psys, 1000 * sys_seed + k,
                                     1 + (sys_seed * 7 + k) % 30)))
    return runs, time.perf_counter() - t0


@pytest.fixture(scope="session")
def monitored_runs(task, task_partial, task_monitor):
    monitored = attach_monitor(
        transform_system(task_partial, monitored=task_monitor.support()),
        task_monitor)
    out = []
    for seed in range(60):
        cfg = EngineConfig(SeededRandom(seed), max_steps=5 + seed % 45, drain=True)
        out.append(run_partial_concurrent(monitored, cfg))
    return out


def test_criterion_1_golden_global_trace(task):
    t0 = time.perf_counter()
    cfg = EngineConfig(FixedSequence(["ex12", "nt"]), max_steps=10)
    res = run_global(task, cfg)
    expected = [
        (W("free", 0), W("free", 0), W("free", 0), G("ready")),
        (W("done", 1), W("done", 1), W("free", 0), G("delivered")),
        (W("done", 1), W("done", 1), W("free", 0), G("ready")),
    ]
    assert res.trace.states() == expected
    assert [str(l) for l in res.trace.labels()] == ["ex12", "nt"]
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    print(f"\nPASS criterion 1: golden 2-step trace exact ({elapsed:.3f}s)")


def test_criterion_2_reconstruction_table_replay(task, task_partial):
    t0 = time.perf_counter()
    cfg = EngineConfig(FixedSequence(["ex12", "β4", "nt", "β2", "β1"]), drain=False)
    trace = run_partial_concurrent(task_partial, cfg).trace

    expected_acc = [
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
    acc = acc_start(trace.initial)
    builder = WitnessBuilder(trace.initial)
    assert acc.states == expected_acc[0][0] and acc.labels == expected_acc[0][1]
    for k, (label, state) in enumerate(trace.steps, start=1):
        acc = acc_consume(acc, label, state)
        builder.feed(label, state)
        states, labels = expected_acc[k]
        assert acc.states == states and acc.labels == labels, f"event {k}"
    out = builder.output
    assert out.trace.initial == (W("free", 0), W("free", 0), W("free", 0), G("ready"))
    assert list(out.trace.steps) == [
        ("ex12", (W("done", 1), W("done", 1), W("free", 0), G("delivered")))]
    assert out.trailing == "nt"
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    print(f"\nPASS criterion 2: table replay exact, final output "
          f"Init·ex12·(done,done,free,delivered)·nt ({elapsed:.3f}s)")


def test_criterion_3_oracle_equivalence(timed_corpus):
    runs, build_seconds = timed_corpus
    t0 = time.perf_counter()
    mismatches = 0
    for gsys, psys, res in runs:
        builder = WitnessBuilder(res.trace.initial)
        builder.feed_trace(res.trace)
        out = builder.output
        witness = replay_witness(gsys, res.trace)
        if out.trace != witness or out.trailing is not None:
            mismatches += 1
        if interaction_sequence(res.trace) != [str(l) for l in witness.labels()]:
            mismatches += 1
    elapsed = build_seconds + (time.perf_counter() - t0)
    assert mismatches == 0
    assert elapsed < 60.0
    print(f"\nPASS criterion 3: {len(runs)} drained runs, reconstruction == "
          f"replay oracle, 0 mismatches ({elapsed:.1f}s incl. corpus build)")


def _assert_buffer_matches(entries, acc, context):
    assert len(entries) == len(acc.states), context
    for j, (entry, expected) in enumerate(zip(entries, acc.states)):
        assert entry.slots == expected, f"{context}: entry {j}"
    assert [t.tag for t in entries] == [None] + acc.labels, context


def test_criterion_4_operational_pure_agreement(timed_corpus):
    runs, _ = timed_corpus
    # route 1: the component's data operations, driven event by event
    for run_no, (gsys, psys, res) in enumerate(runs):
        setup = _build_setup(psys.components, psys.interactions,
                             [c.id for c in gsys.components], "default",
                             retain=True)
        recon = Reconstructor.start(setup)
        acc = acc_start(res.trace.initial)
        for label, state in res.trace.steps:
            if isinstance(label, Beta):
                recon = recon.on_completion(label.index - 1, state[label.index - 1])
            else:
                recon = rgt_new(recon, label)
            acc = acc_consume(acc, label, state)
            while recon.deliverable():
                recon, _ = rgt_get(recon)
            _assert_buffer_matches(recon.buffer.entries, acc, f"run {run_no}")
    # route 2: the synthesized component inside the engine, checked after
    # every fired interaction via the observer hook
    engine_checked = 0
    for gsys, psys, res in runs[:40] + runs[300:340]:
        tr = transform_system(psys, retain=True)
        cs = compile_system(tr)
        rgt_pos = next(i for i, c in enumerate(tr.components) if c.id == "RGT")
        shadow = {"acc": None}

        def observer(ci, enc):
            state = cs.project(enc)
            if shadow["acc"] is None:
                return
            if ci.inter.kind in ("regular", "busy"):
                shadow["acc"] = acc_consume(shadow["acc"], ci.label, state)
            _assert_buffer_matches(enc[rgt_pos][2].entries, shadow["acc"], "engine")

        shadow["acc"] = acc_start(cs.project(cs.initial()))
        cfg = EngineConfig(SeededRandom(hash((gsys.name, 17)) & 0xFFFF),
                           max_steps=20, drain=True)
        run_partial_concurrent(tr, cfg, observer=observer)
        engine_checked += 1
    print(f"\nPASS criterion 4: buffer ≅ accumulation after every event "
          f"({len(runs)} pure-route runs, {engine_checked} engine-route runs)")


def test_criterion_5_structural_lemmas(timed_corpus):
    runs, _ = timed_corpus
    for gsys, psys, res in runs:
        acc = acc_start(res.trace.initial)
        builder = WitnessBuilder(res.trace.initial)
        emitted = [res.trace.initial]
        interactions_so_far = 0
        for label, state in res.trace.steps:
            acc = acc_consume(acc, label, state)
            if not isinstance(label, Beta):
                interactions_so_far += 1
            # |Acc| = 2s+1
            assert len(acc.states) == interactions_so_far + 1
            assert len(acc.labels) == interactions_so_far
            # settled prefix, pending suffix, nothing settled after a pending
            k = acc.settled_count()
            flags = [all(s is not None for s in e) for e in acc.states]
            assert flags == [True] * k + [False] * (len(flags) - k)
            # last(Acc) = last consumed state
            from cbsrv.witness import entry_of

            assert acc.states[-1] == entry_of(state)
            # monotone incremental output
            inc = builder.feed(label, state)
            emitted.extend(inc)
            assert emitted == witness_prefix(acc).items()
        assert acc.labels == interaction_sequence(res.trace)
    # reset-before-set and stabilization are operational properties of the
    # synthesized component: watch the flags over engine runs
    for gsys, psys, res in runs[:30] + runs[300:330]:
        tr = transform_system(psys)
        cs = compile_system(tr)
        rgt_pos = next(i for i, c in enumerate(tr.components) if c.id == "RGT")
        bound = cs.components[rgt_pos].behavior
        prev_true = set()

        def observer(ci, enc):
            nonlocal prev_true
            values = enc[rgt_pos][1]
            now_true = {k for k, s in enumerate(bound.gs_slots) if values[s]}
            if prev_true:
                assert now_true <= prev_true, "a flag rose before a reset"
            prev_true = now_true

        cfg = EngineConfig(SeededRandom(3), max_steps=15, drain=True)
        run_partial_concurrent(tr, cfg, observer=observer)
    # stabilization: from arbitrary mid-run states, draining deliveries
    # always reaches a stable buffer
    for gsys, psys, res in runs[:20]:
        setup = _build_setup(psys.components, psys.interactions,
                             [c.id for c in gsys.components], "default",
                             retain=True)
        recon = Reconstructor.start(setup)
        for label, state in res.trace.steps:
            if isinstance(label, Beta):
                recon = recon.on_completion(label.index - 1, state[label.index - 1])
            else:
                recon = rgt_new(recon, label)
            stabilized, _ = recon.drain()
            assert stabilized.is_stable
            recon = stabilized
    print(f"\nPASS criterion 5: structural lemmas hold over {len(runs)} runs")


def test_criterion_6_equivalence_theorems(task, task_partial):
    from cbsrv.bisim import distinguishing_trace, explore, weak_bisimilar

    t0 = time.perf_counter()
    l_global = explore(task)
    l_partial = explore(task_partial)
    l_partial_hidden = dataclasses.replace(
        l_partial, unobservable=frozenset(f"β{i}" for i in range(1, 5)))
    r1 = weak_bisimilar(l_global, l_partial_hidden)
    assert r1.equivalent, "global vs partial must be weakly bisimilar"

    transformed = transform_system(task_partial)
    hide = frozenset(f"deliver_{a.id}" for a in task.interactions)
    l_transformed = explore(transformed, unobservable=hide)
    r2 = weak_bisimilar(l_partial, l_transformed)
    assert r2.equivalent, "partial vs transformed must be weakly bisimilar"

    mutated = CompositeSystem(
        transformed.components,
        tuple(a for a in transformed.interactions if a.id != "deliver_ex12"),
        name=transformed.name)
    trace, side = distinguishing_trace(task_partial, mutated, (), hide)
    assert trace is not None and side == 1
    elapsed = time.perf_counter() - t0
    assert elapsed < 300.0
    print(f"\nPASS criterion 6: {l_global.n_states}/{l_partial.n_states}/"
          f"{l_transformed.n_states} states, both EQUIVALENT, mutation "
          f"counterexample {' '.join(trace)} ({elapsed:.0f}s)")


def test_criterion_7_verdict_equivalence(task, task_partial, task_monitor,
                                         monitored_runs):
    mismates = 0
    for res in monitored_runs:
        witness = replay_witness(task, res.trace)
        sequential = verdicts_over(task_monitor, (q for _, q in witness.steps))
        assert res.verdicts == sequential
    # the two-interaction schedule produces the currently-true pair
    monitored = attach_monitor(
        transform_system(task_partial, monitored=task_monitor.support()),
        task_monitor)
    cfg = EngineConfig(FixedSequence(["ex12", "β4", "nt", "β2", "β1"]), drain=True)
    res = run_partial_concurrent(monitored, cfg)
    assert res.verdicts == ["currently-true", "currently-true"]
    print(f"\nPASS criterion 7: verdict streams equal sequential replays "
          f"({len(monitored_runs)} runs), ⊤c·⊤c prefix reproduced")


def test_criterion_8_counting(monitored_runs):
    for res in monitored_runs:
        assert not any(is_busy_location(cs.location)
                       for cs in res.trace.last_state())
        assert res.delivered_count == res.gamma_count
        assert res.extra_count == res.beta_count + res.delivered_count
        assert len(res.verdicts) == res.delivered_count
    print(f"\nPASS criterion 8: delivered == interactions and extra == "
          f"completions + deliveries in all {len(monitored_runs)} drained runs")


def test_criterion_9_concurrency_smoke(task, task_partial, task_monitor):
    t0 = time.perf_counter()
    monitored = attach_monitor(
        transform_system(task_partial, monitored=task_monitor.support()),
        task_monitor)
    for threads in (1, 2, 4):
        cfg = EngineConfig(SeededRandom(100 + threads), max_steps=1000,
                           drain=True, real_time=True, threads=threads,
                           busy_delay=(0.00005, 0.0003))
        res = run_partial_concurrent(monitored, cfg)
        assert res.gamma_count == 1000 and not res.deadlocked
        assert res.delivered_count == 1000
        witness = replay_witness(task, res.trace)
        builder = WitnessBuilder(res.trace.initial)
        builder.feed_trace(res.trace)
        assert builder.output.trace == witness
        assert builder.output.trailing is None
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    print(f"\nPASS criterion 9: 3×1000 interactions on 1/2/4 worker threads, "
          f"witness == oracle ({elapsed:.1f}s)")
