"""cbs-rv: execution, witness-trace reconstruction and runtime monitoring for
component-based systems with multiparty interactions."""

from .model import (
    AtomicComponent,
    ComponentState,
    CompositeSystem,
    Interaction,
    Port,
    SystemState,
    Transition,
    builtin_readers_writers,
    builtin_task,
    builtin_task_monitor_text,
    validate,
)
from .modeltext import parse_model, render_model, render_model_json
from .semantics import (
    Beta,
    EngineConfig,
    FixedSequence,
    Label,
    RunResult,
    SeededRandom,
    Trace,
    enabled_interactions,
    run_global,
    run_partial_concurrent,
    step_global,
    step_partial,
    to_partial,
)
from .witness import (
    WitnessBuilder,
    WitnessPrefix,
    interaction_sequence,
    replay_witness,
)
from .transform import Reconstructor, instrument_atomic, transform_system
from .monitor import MonitorRun, MonitorSpec, attach_monitor, monitor_step, parse_monitor

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
