import pytest

import cbsrv
from cbsrv import EngineConfig, SeededRandom, run_partial_concurrent, to_partial
from cbsrv.randgen import random_system


@pytest.fixture(scope="session")
def task():
    return cbsrv.builtin_task()


@pytest.fixture(scope="session")
def task_partial(task):
    return to_partial(task)


@pytest.fixture(scope="session")
def task_monitor(task):
    return cbsrv.parse_monitor(cbsrv.builtin_task_monitor_text(), task)


def drained_run(partial_sys, seed, steps):
    cfg = EngineConfig(SeededRandom(seed), max_steps=steps, drain=True)
    return run_partial_concurrent(partial_sys, cfg)


@pytest.fixture(scope="session")
def corpus(task, task_partial):
    """The shared 500-run corpus: 300 task runs plus 200 runs over 100
    random small systems, all drained, virtual time."""
    runs = []
    for seed in range(300):
        res = drained_run(task_partial, seed, 1 + seed % 40)
        runs.append((task, task_partial, res))
    for sys_seed in range(1, 101):
        gsys = random_system(sys_seed)
        psys = to_partial(gsys)
        for k in range(2):
            res = drained_run(psys, 1000 * sys_seed + k, 1 + (sys_seed * 7 + k) % 30)
            runs.append((gsys, psys, res))
    assert len(runs) == 500
    return runs
