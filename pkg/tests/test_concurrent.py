import pytest

import cbsrv
from cbsrv import (
    EngineConfig,
    FixedSequence,
    SeededRandom,
    interaction_sequence,
    parse_model,
    replay_witness,
    run_partial_concurrent,
    to_partial,
)
from cbsrv.errors import CbsError, WorkerPanicked
from cbsrv.model import is_busy_location
from cbsrv.semantics import replay_trace


def real_time_cfg(seed, steps, threads=0):
    return EngineConfig(SeededRandom(seed), max_steps=steps, drain=True,
                        real_time=True, threads=threads,
                        busy_delay=(0.0001, 0.0005))


@pytest.mark.parametrize("threads", [1, 2, 4])
def test_threaded_run_matches_oracle(task, task_partial, threads):
    res = run_partial_concurrent(task_partial, real_time_cfg(8, 60, threads))
    assert res.gamma_count == 60 and not res.deadlocked
    assert not any(is_busy_location(cs.location) for cs in res.trace.last_state())
    assert replay_trace(task_partial, res.trace)
    witness = replay_witness(task, res.trace)
    assert interaction_sequence(res.trace) == [str(l) for l in witness.labels()]


def test_threaded_fixed_schedule_rejected(task_partial):
    cfg = EngineConfig(FixedSequence(["ex12"]), real_time=True)
    with pytest.raises(CbsError):
        run_partial_concurrent(task_partial, cfg)


def test_worker_panic_propagates():
    # the completion step overflows deterministically on the second round
    sys = parse_model("""
component C {
  vars x: int = 4611686018427387904;
  ports go;
  locations a, b;
  initial a;
  transition a -go-> b / [x := x * 2];
  transition b -go-> a;
}
interaction g { ports: C.go; }
""")
    p = to_partial(sys)
    cfg = EngineConfig(SeededRandom(0), max_steps=6, real_time=True,
                       busy_delay=0.0)
    with pytest.raises(WorkerPanicked):
        run_partial_concurrent(p, cfg)
