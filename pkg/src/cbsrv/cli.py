"""Command-line entry point.

Subcommands tie the pieces together: ``run`` executes a model under one of
three modes and emits a trace file plus a run report, ``witness`` rebuilds
the witness prefix of a recorded trace, ``transform`` emits the
self-reconstructing model, ``verify-equivalence`` checks the equivalence
theorems on a finite instance, and ``validate`` just loads a model.

Exit codes: 0 success (or EQUIVALENT), 1 usage error, 2 validation error,
3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys as _sys
from pathlib import Path

from . import __version__
from .errors import CbsError, ModelSyntaxError, ValidationError
from .model import CompositeSystem
from .modeltext import parse_model, render_model, render_model_json
from .monitor import attach_monitor, parse_monitor
from .semantics import (
    EngineConfig,
    FixedSequence,
    RunResult,
    SeededRandom,
    run_global,
    run_partial_concurrent,
    to_partial,
)
from .traceio import read_trace_file, trace_to_text, write_trace_file
from .transform import GUARD_VARIANTS, transform_system
from .witness import WitnessBuilder, interaction_sequence, replay_witness

log = logging.getLogger("cbsrv")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_VERIFICATION = 3


def _load_model(path: str) -> CompositeSystem:
    return parse_model(Path(path).read_text(encoding="utf-8"))


def _report_lines(report: dict) -> str:
    out = []
    for key, value in report.items():
        out.append(f"{key}: {value}")
    return "\n".join(out)


def _emit(report: dict, as_json: bool):
    if as_json:
        print(json.dumps(report, indent=2, ensure_ascii=False))
    else:
        print(_report_lines(report))


# --- run -------------------------------------------------------------------


def cmd_run(args) -> int:
    sys = _load_model(args.model)
    if args.schedule:
        policy = FixedSequence(args.schedule.split(","))
    else:
        policy = SeededRandom(args.seed)
    cfg = EngineConfig(
        policy=policy,
        max_steps=args.steps,
        drain=args.drain,
        busy_delay=(args.min_delay, args.max_delay) if args.real_time else 0.0,
        real_time=args.real_time,
        threads=args.threads,
    )
    verdict_counts: dict[str, int] = {}
    if args.mode == "global":
        if sys.is_partial_form():
            raise CbsError("--mode global needs a global-state model")
        result = run_global(sys, cfg)
    else:
        partial = sys if sys.is_partial_form() else to_partial(sys)
        if args.mode == "monitored":
            if not args.monitor:
                raise CbsError("--mode monitored needs --monitor")
            spec = parse_monitor(
                Path(args.monitor).read_text(encoding="utf-8"), sys)
            transformed = transform_system(
                partial, monitored=spec.support(), variant=args.rgt_variant)
            monitored = attach_monitor(transformed, spec)
            result = run_partial_concurrent(monitored, cfg)
            for v in result.verdicts:
                verdict_counts[v] = verdict_counts.get(v, 0) + 1
        else:
            result = run_partial_concurrent(partial, cfg)

    trace_path = args.output or (Path(args.model).stem + ".trace")
    write_trace_file(trace_path, result.trace, result.verdicts,
                     json_form=args.json_trace)
    report = {
        "mode": args.mode,
        "seed": None if args.schedule else args.seed,
        "trace": str(trace_path),
        "interactions": result.gamma_count,
        "completions": result.beta_count,
        "delivered_states": result.delivered_count,
        "extra_interactions": result.extra_count,
        "verdicts": verdict_counts,
        "deadlocked": result.deadlocked,
        "wall_seconds": round(result.wall_seconds, 6),
    }
    _emit(report, args.json)
    return EXIT_OK


# --- witness ------------------------------------------------------------------


def cmd_witness(args) -> int:
    trace, _ = read_trace_file(args.trace)
    sys = _load_model(args.model) if args.model else None
    if sys is not None:
        globalized = sys if not sys.is_partial_form() else None
        if globalized is not None:
            # replay validation against the global engine (the oracle route)
            replay_witness(globalized, trace)
    builder = WitnessBuilder(trace.initial)
    builder.feed_trace(trace)
    prefix = builder.output
    out_path = args.output or (Path(args.trace).stem + ".witness.trace")
    write_trace_file(out_path, prefix.trace, json_form=args.json_trace)
    report = {
        "witness": str(out_path),
        "states": len(prefix.trace.states()),
        "interactions": len(prefix.trace.steps),
        "trailing_interaction": prefix.trailing,
        "consumed_events": len(trace.steps),
        "consumed_interactions": len(interaction_sequence(trace)),
    }
    _emit(report, args.json)
    return EXIT_OK


# --- transform -------------------------------------------------------------------


def cmd_transform(args) -> int:
    sys = _load_model(args.model)
    partial = sys if sys.is_partial_form() else to_partial(sys)
    monitored = None
    if args.monitor:
        spec = parse_monitor(Path(args.monitor).read_text(encoding="utf-8"), sys)
        monitored = spec.support()
    transformed = transform_system(
        partial, monitored=monitored, variant=args.rgt_variant)
    text = (render_model_json(transformed) if args.json_model
            else render_model(transformed))
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
        print(f"wrote {args.output}")
    else:
        print(text, end="")
    return EXIT_OK


# --- verify-equivalence --------------------------------------------------------------


def cmd_verify_equivalence(args) -> int:
    from .bisim import distinguishing_trace, explore, weak_bisimilar

    sys = _load_model(args.model)
    if sys.is_partial_form():
        raise CbsError("verify-equivalence expects a global-state model")
    partial = to_partial(sys)
    stages = [args.stage] if args.stage else ["partial", "transformed"]
    code = EXIT_OK
    for stage in stages:
        if stage == "partial":
            l1 = explore(sys, state_bound=args.bound)
            l2 = explore(partial, state_bound=args.bound,
                         unobservable=[f"β{i+1}" for i in range(sys.n)])
            result = weak_bisimilar(l1, l2)
        else:
            transformed = transform_system(partial, variant=args.rgt_variant)
            hide = [f"deliver_{a.id}" for a in sys.interactions]
            if args.mutate_drop_delivery:
                mutated = CompositeSystem(
                    transformed.components,
                    tuple(a for a in transformed.interactions
                          if a.id != f"deliver_{args.mutate_drop_delivery}"),
                    name=transformed.name)
                trace, side = distinguishing_trace(partial, mutated, (), hide)
                if trace is None:
                    print(f"{stage}: EQUIVALENT (no difference found)")
                    continue
                print(f"{stage}: NOT EQUIVALENT")
                print("counterexample (executable in "
                      f"{'the partial model' if side == 1 else 'the mutated model'}): "
                      + " ".join(trace))
                code = EXIT_VERIFICATION
                continue
            lp = explore(partial, state_bound=args.bound)
            lt = explore(transformed, state_bound=args.bound, unobservable=hide)
            result = weak_bisimilar(lp, lt)
        if result.equivalent:
            print(f"{stage}: EQUIVALENT ({result.n_blocks} classes)")
        else:
            print(f"{stage}: NOT EQUIVALENT")
            if result.counterexample:
                print("counterexample: " + " ".join(result.counterexample))
            code = EXIT_VERIFICATION
    return code


# --- validate ----------------------------------------------------------------------


def cmd_validate(args) -> int:
    sys = _load_model(args.model)
    print(f"ok: {len(sys.components)} components, "
          f"{len(sys.interactions)} interactions")
    return EXIT_OK


# --- argument plumbing ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cbs-rv",
        description="Execute, reconstruct and monitor component-based systems "
                    "with multiparty interactions.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a model and write its trace")
    run.add_argument("model")
    run.add_argument("--mode", choices=["global", "partial", "monitored"],
                     default="global")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--steps", type=int, default=100)
    run.add_argument("--schedule", help="comma-separated fixed label sequence")
    run.add_argument("--monitor", help="monitor document (monitored mode)")
    run.add_argument("--rgt-variant", choices=list(GUARD_VARIANTS),
                     default="default")
    run.add_argument("--drain", dest="drain", action="store_true", default=True)
    run.add_argument("--no-drain", dest="drain", action="store_false")
    run.add_argument("--real-time", action="store_true",
                     help="real worker threads with wall-clock busy delays")
    run.add_argument("--threads", type=int, default=0,
                     help="worker pool size in real-time mode (0 = one per component)")
    run.add_argument("--min-delay", type=float, default=0.0005)
    run.add_argument("--max-delay", type=float, default=0.002)
    run.add_argument("--json", action="store_true", help="machine-readable report")
    run.add_argument("--json-trace", action="store_true",
                     help="write the trace in JSON form")
    run.add_argument("-o", "--output", help="trace file path")
    run.set_defaults(fn=cmd_run)

    wit = sub.add_parser("witness", help="reconstruct the witness prefix of a trace")
    wit.add_argument("trace")
    wit.add_argument("--model", help="validate the trace against this model first")
    wit.add_argument("--json", action="store_true")
    wit.add_argument("--json-trace", action="store_true")
    wit.add_argument("-o", "--output")
    wit.set_defaults(fn=cmd_witness)

    tra = sub.add_parser("transform", help="emit the self-reconstructing model")
    tra.add_argument("model")
    tra.add_argument("--monitor", help="restrict observation to the monitor's support")
    tra.add_argument("--rgt-variant", choices=list(GUARD_VARIANTS), default="default")
    tra.add_argument("--json-model", action="store_true")
    tra.add_argument("-o", "--output")
    tra.set_defaults(fn=cmd_transform)

    ver = sub.add_parser("verify-equivalence",
                         help="check observational equivalence on a finite instance")
    ver.add_argument("model")
    ver.add_argument("--stage", choices=["partial", "transformed"])
    ver.add_argument("--bound", type=int, default=2_000_000)
    ver.add_argument("--rgt-variant", choices=list(GUARD_VARIANTS), default="default")
    ver.add_argument("--mutate-drop-delivery", metavar="INTERACTION",
                     help="drop the named interaction's delivery and look for "
                          "a distinguishing trace")
    ver.set_defaults(fn=cmd_verify_equivalence)

    val = sub.add_parser("validate", help="parse and statically check a model")
    val.add_argument("model")
    val.set_defaults(fn=cmd_validate)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("CBS_RV_LOG", "WARNING").upper())
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (ModelSyntaxError, ValidationError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_VALIDATION
    except CbsError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_VERIFICATION
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
