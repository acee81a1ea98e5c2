"""Real-time concurrent execution: one coordinator, a pool of workers.

Workers simulate the internal computation of busy components (sleep for the
configured delay, then compute the completion's effect on a private copy of
the component's state).  The coordinator owns the authoritative system state,
fires interactions, and serializes the emitted event stream; communication
runs over two queues (jobs out, completions back), so no state is ever
mutated from two threads.
"""

from __future__ import annotations

import queue
import random
import threading
import time

from .errors import CbsError, WorkerPanicked
from .model import CompositeSystem
from .semantics import (
    CompiledInteraction,
    EngineConfig,
    FixedSequence,
    RunResult,
    Trace,
    compile_system,
)

_STALL_TIMEOUT = 30.0  # seconds without any completion before giving up


class ThreadedRunner:
    def __init__(self, sys: CompositeSystem, cfg: EngineConfig):
        if isinstance(cfg.policy, FixedSequence):
            raise CbsError("fixed schedules need the virtual-time engine")
        self.cs = compile_system(sys)
        self.cfg = cfg

    def _delay(self, rng: random.Random) -> float:
        d = self.cfg.busy_delay
        if isinstance(d, tuple):
            return rng.uniform(d[0], d[1])
        return float(d)

    def run(self) -> RunResult:
        cs, cfg = self.cs, self.cfg
        t0 = time.perf_counter()
        enc = cs.initial()
        result = RunResult(Trace(cs.project(enc)))
        trace = result.trace
        policy = cfg.policy

        completion_of: dict[int, CompiledInteraction] = {}
        for ci in cs.interactions:
            if ci.inter.kind == "busy":
                completion_of[ci.parts[ci.beta_part][0]] = ci

        jobs: queue.Queue = queue.Queue()
        done: queue.Queue = queue.Queue()
        stop = threading.Event()

        def worker(wid: int):
            rng = random.Random((wid + 1) * 0x9E3779B9)
            while not stop.is_set():
                item = jobs.get()
                if item is None:
                    return
                pos, comp_enc, ci = item
                try:
                    delay = self._delay(rng)
                    if delay > 0:
                        time.sleep(delay)
                    done.put((pos, cs.complete_component(ci, comp_enc), None))
                except BaseException as exc:  # propagated as WorkerPanicked
                    done.put((pos, None, exc))

        n_workers = cfg.threads if cfg.threads > 0 else len(cs.sys.components)
        threads = [
            threading.Thread(target=worker, args=(i,), daemon=True)
            for i in range(n_workers)
        ]
        for t in threads:
            t.start()

        ready: dict[int, tuple] = {}
        outstanding = 0

        def integrate(block: bool) -> bool:
            nonlocal outstanding
            try:
                pos, res, err = done.get(block=block, timeout=_STALL_TIMEOUT if block else None)
            except queue.Empty:
                if block:
                    raise CbsError("engine stalled waiting for worker completions")
                return False
            if err is not None:
                raise WorkerPanicked(str(err)) from err
            ready[pos] = res
            outstanding -= 1
            return True

        def schedule_new_busy(ci: CompiledInteraction):
            nonlocal outstanding
            for pos, _ in ci.parts:
                cc = cs.components[pos]
                if cc.busy[enc[pos][0]] and pos in completion_of:
                    jobs.put((pos, enc[pos], completion_of[pos]))
                    outstanding += 1

        def fire(ci: CompiledInteraction, precomputed=None):
            nonlocal enc, trace
            enc, delivered = cs.fire(enc, ci, precomputed=precomputed)
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
                schedule_new_busy(ci)
            elif kind == "busy":
                result.beta_count += 1
                trace = trace.extend(ci.label, cs.project(enc))

        try:
            while True:
                while integrate(block=False):
                    pass
                draining = result.gamma_count >= cfg.max_steps
                if draining and not cfg.drain and outstanding == 0:
                    break
                cands = []
                for ci in cs.enabled(enc):
                    kind = ci.inter.kind
                    if kind == "regular":
                        if not draining:
                            cands.append(ci)
                    elif kind == "busy":
                        if ci.parts[ci.beta_part][0] in ready:
                            cands.append(ci)
                    else:
                        cands.append(ci)
                if not cands:
                    if outstanding > 0:
                        integrate(block=True)
                        continue
                    if not draining:
                        result.deadlocked = True
                    break
                label = policy.choose([ci.label for ci in cands])
                if label is None:
                    break
                ci = next(c for c in cands if c.label == label)
                if ci.inter.kind == "busy":
                    fire(ci, precomputed=ready.pop(ci.parts[ci.beta_part][0]))
                else:
                    fire(ci)
        finally:
            stop.set()
            for _ in threads:
                jobs.put(None)
            for t in threads:
                t.join(timeout=5.0)

        result.trace = trace
        result.wall_seconds = time.perf_counter() - t0
        return result
