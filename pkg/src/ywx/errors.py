"""Shared error types for the ywx toolchain."""

from __future__ import annotations


class YwxError(Exception):
    """Base class for all toolchain errors.

    Carries an optional source location so callers can print
    ``FILE:LINE: message`` style reports.
    """

    def __init__(self, message: str, *, file: str | None = None, line: int | None = None):
        super().__init__(message)
        self.message = message
        self.file = file
        self.line = line

    def __str__(self) -> str:
        if self.file is not None and self.line is not None:
            return f"{self.file}:{self.line}: {self.message}"
        if self.file is not None:
            return f"{self.file}: {self.message}"
        return self.message


# -- comment scanning ------------------------------------------------------

class LexerError(YwxError):
    pass


class UnknownLanguage(LexerError):
    pass


class UnterminatedBlockComment(LexerError):
    pass


# -- annotation parsing ----------------------------------------------------

class AnnotationError(YwxError):
    pass


class MissingValue(AnnotationError):
    pass


class InvalidValue(AnnotationError):
    pass


class MalformedRecord(AnnotationError):
    pass


# -- model building --------------------------------------------------------

class ModelError(YwxError):
    pass


class UnbalancedEnd(ModelError):
    pass


class UnclosedBlock(ModelError):
    pass


class MismatchedEndName(ModelError):
    pass


class PortOutsideBlock(ModelError):
    pass


class DuplicatePort(ModelError):
    pass


class DuplicateBlockName(ModelError):
    pass


class NoBlocks(ModelError):
    pass


class AmbiguousWriter(ModelError):
    pass


class MalformedModel(ModelError):
    pass


# -- rendering -------------------------------------------------------------

class RenderError(YwxError):
    pass


class UnknownFocus(RenderError):
    pass


class StyleError(RenderError):
    pass


# -- queries ---------------------------------------------------------------

class QueryError(YwxError):
    pass


class UnknownName(QueryError):
    pass


class CyclicDerivation(QueryError):
    pass


class AmbiguousLineage(QueryError):
    pass


class MalformedManifest(QueryError):
    pass


# -- pipeline --------------------------------------------------------------

class UsageError(YwxError):
    """Command line arguments that parse but cannot be acted on."""


class FormatMismatch(YwxError):
    pass
