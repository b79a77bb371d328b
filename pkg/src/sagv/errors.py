"""Exception types shared across the package."""


class SagvError(Exception):
    """Base class for every error raised by sagv."""


class IncompatibleValuations(SagvError):
    pass


class VariableNotInScope(SagvError):
    pass


class ValidationError(SagvError):
    """A model object violates one of its structural invariants."""


class MissingTransition(ValidationError):
    """Some (state, input) pair has no outgoing transition."""


class ForbiddenSelfLoop(ValidationError):
    """A self-loop coexists with a proper transition for the same (state, input)."""


class VariableClash(ValidationError):
    """State and input variable sets are not disjoint (or clash across modules)."""


class NotATrace(SagvError):
    pass


class EmptyList(SagvError):
    pass


class NotAsynchronous(SagvError):
    pass


class UnknownAgent(SagvError):
    pass


class DeadlockState(SagvError):
    """A reachable global state has no enabled composed transition."""


class ParseError(SagvError):
    def __init__(self, message, line=None, column=None, filename=None):
        self.line = line
        self.column = column
        self.filename = filename
        where = ""
        if filename is not None:
            where += f"{filename}:"
        if line is not None:
            where += f"{line}:"
            if column is not None:
                where += f"{column}:"
        super().__init__(f"{where} {message}" if where else message)


class BoundOutOfRange(ParseError):
    """A probability bound outside [0, 1]."""


class AlphabetMismatch(SagvError):
    pass


class BudgetExceeded(SagvError):
    """An automaton construction exceeded its state budget."""


class UnsupportedFormula(SagvError):
    pass


class UnsupportedNext(UnsupportedFormula):
    """The next-step operator is rejected by asynchronous-layer checkers."""


class NotPerfectInformation(SagvError):
    pass


class IllegalAction(SagvError):
    pass


class ZeroDenominator(SagvError):
    pass


class InconsistentBounds(SagvError):
    pass


class SynthesisFailed(SagvError):
    def __init__(self, unit, message=None):
        self.unit = unit
        super().__init__(message or f"strategy synthesis failed for unit {unit!r}")


class CapExceeded(SagvError):
    """A brute-force oracle hit its configured enumeration cap."""


class BoundExceeded(SagvError):
    """Exact policy enumeration exceeded the configured action-space bound."""


class HorizonInsufficient(SagvError):
    """Monte Carlo monitor undecided at the sampling horizon too often."""
