"""Exception hierarchy shared by every putview component."""

from __future__ import annotations


class PutviewError(Exception):
    """Base class for all errors raised by this package."""


class SchemaMismatch(PutviewError):
    pass


class UnknownTable(PutviewError):
    pass


class UnknownAttribute(PutviewError):
    pass


class AmbiguousAttribute(PutviewError):
    pass


class TypeMismatch(PutviewError):
    pass


class KeyViolation(PutviewError):
    pass


class NullabilityViolation(PutviewError):
    """Null stored in a non-nullable column."""


class MissingDeleteTarget(PutviewError):
    pass


class MalformedDelta(PutviewError):
    pass


class ProgramSyntaxError(PutviewError):
    """Raised by the strategy-language parser, with position info."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class DuplicateBranchLiteral(PutviewError):
    pass


class ArityMismatch(PutviewError):
    pass


class UnprintableQuery(PutviewError):
    """Query AST is not in the SELECT/FROM/WHERE shape the printer handles."""


class ValidationFailed(PutviewError):
    """A program failed static validation; carries the error list."""

    def __init__(self, errors):
        super().__init__("; ".join(str(e) for e in errors))
        self.errors = list(errors)


class DomainTooLarge(PutviewError):
    pass


class EmptyAnswer(PutviewError):
    pass


class UnknownArea(PutviewError):
    pass


class UnknownPeer(PutviewError):
    pass


class ScenarioParseError(PutviewError):
    pass


class InvariantViolation(PutviewError):
    pass
