"""Exception types shared across the package.

Everything raised on purpose derives from CbsError so callers (and the CLI)
can distinguish domain failures from genuine bugs.
"""

from __future__ import annotations


class CbsError(Exception):
    """Base class for all errors raised by this package."""


# --- expression evaluation -------------------------------------------------

class EvalError(CbsError):
    """Base class for expression evaluation failures."""


class UnboundVariable(EvalError):
    def __init__(self, name: str):
        super().__init__(f"unbound variable: {name}")
        self.name = name


class TypeMismatch(EvalError):
    pass


class Overflow(EvalError):
    """Arithmetic left the signed 64-bit range."""


# --- model loading ----------------------------------------------------------

class ModelSyntaxError(CbsError):
    """Parse failure in a model, monitor or trace document."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        where = f" (line {line}, column {column})" if line else ""
        super().__init__(f"{message}{where}")
        self.line = line
        self.column = column


class ValidationError(CbsError):
    """One or more static validation diagnostics; all of them are attached."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        lines = "\n".join(f"  - {d}" for d in self.diagnostics)
        super().__init__(f"model validation failed:\n{lines}")


# --- execution --------------------------------------------------------------

class NotEnabled(CbsError):
    """An interaction (or completion) was fired in a state that does not enable it."""


class WorkerPanicked(CbsError):
    """A component's computation step failed on its worker thread."""


# --- witness reconstruction -------------------------------------------------

class MalformedStream(CbsError):
    """The consumed event stream is not a valid partial-state trace."""


class ArityMismatch(CbsError):
    pass


class ReplayFailed(CbsError):
    """An interaction sequence could not be replayed in global-state semantics."""


class MalformedTrace(CbsError):
    """A trace file could not be decoded."""


# --- reconstructor component ------------------------------------------------

class GuardViolated(CbsError):
    """A reconstructor operation was applied while its guard is false."""


class NotBusy(CbsError):
    """A completion was reported for a component that was not busy."""


class NothingToDeliver(CbsError):
    """No reconstructed global state is ready for delivery."""


class AlreadyInstrumented(CbsError):
    pass


class UnknownMonitoredVariable(CbsError):
    pass


# --- monitors ----------------------------------------------------------------

class UnknownVariable(CbsError):
    pass


class NondeterministicTransition(CbsError):
    pass


class PartialStateRejected(CbsError):
    """The monitor was fed a state with busy or missing component slots."""


class IncompatibleSupport(CbsError):
    """Monitor references components the transformed system does not observe."""


class UnmatchedEvent(CbsError):
    """Strict-mode monitor saw an event valuation with no matching transition."""


# --- equivalence checking -----------------------------------------------------

class BoundExceeded(CbsError):
    def __init__(self, bound: int, frontier: int):
        super().__init__(
            f"state bound {bound} exceeded while exploring (frontier size {frontier})"
        )
        self.bound = bound
        self.frontier = frontier
