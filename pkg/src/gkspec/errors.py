"""Exception hierarchy shared by the frontend and the engines."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    message: str
    line: int = 0
    col: int = 0

    def __str__(self) -> str:
        return f"{self.line}:{self.col}: {self.kind}: {self.message}"


class GkError(Exception):
    """Base class for every error raised by this package."""


class FrontendError(GkError):
    """Parse or type errors; carries one or more diagnostics."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))

    @classmethod
    def single(cls, kind, message, line=0, col=0):
        return cls([Diagnostic(kind, message, line, col)])

    @property
    def kind(self) -> str:
        return self.diagnostics[0].kind


class GkSyntaxError(FrontendError):
    pass


class GkTypeError(FrontendError):
    pass


# Runtime errors raised while evaluating model expressions.


class EvalError(GkError):
    pass


class NullDereference(EvalError):
    pass


class SliceOutOfRange(EvalError):
    pass


class IntegerRange(EvalError):
    pass


class DivisionByZero(EvalError):
    pass


class UnboundVariable(EvalError):
    pass


# State store errors.


class UnknownMap(GkError):
    pass


class KeyArityMismatch(GkError):
    pass


class UnknownField(GkError):
    pass


class StateTypeMismatch(GkError):
    pass


# Engine errors.


class ModelError(GkError):
    """The model itself misbehaved (not the service)."""


class ModelUnsat(ModelError):
    """No output satisfies the scoped constraints."""


class UnknownAction(GkError):
    pass


class ArgTypeMismatch(GkError):
    pass


class ServiceUnavailable(GkError):
    pass


class SessionBusy(GkError):
    """A single-threaded session was entered from two threads at once."""


class InitTypeMismatch(GkError):
    pass


class TraceVersionMismatch(GkError):
    pass


class CorruptTrace(GkError):
    pass


class UnknownModel(GkError):
    pass


class UnknownVariant(GkError):
    pass


class InvalidPath(GkError):
    pass


class DomainExhausted(GkError):
    def __init__(self, message, solutions=()):
        super().__init__(message)
        self.solutions = list(solutions)


class ScriptParseError(GkError):
    pass


class ScenarioError(GkError):
    pass


class IagoViolation(GkError):
    """Raised by Verdict.unwrap() when the service broke the model."""

    def __init__(self, verdict):
        self.verdict = verdict
        super().__init__(f"{verdict.action}#{verdict.seq}: {verdict.constraint}")
