"""Comment extraction for annotated scripts.

A single forward scan classifies every character of a source file as code,
string text, or comment. Comment markers inside string literals are ignored;
quotes inside comments are ignored. The scanner never parses the host
language, so a handful of constructs (apostrophes in code, raw strings with
escaped quotes) can misclassify part of a line. Strings are assumed not to
span lines, which bounds any such misclassification to a single line.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .errors import UnknownLanguage, UnterminatedBlockComment


@dataclass(frozen=True)
class CommentSyntax:
    """Comment conventions for one host language."""

    language_name: str
    line_markers: tuple[str, ...]
    block_delimiters: tuple[tuple[str, str], ...] = ()
    string_quotes: tuple[str, ...] = ("'", '"')

    def __post_init__(self) -> None:
        if not self.line_markers and not self.block_delimiters:
            raise ValueError("comment syntax needs line markers or block delimiters")
        if any(not m for m in self.line_markers):
            raise ValueError("line markers must be non-empty")
        if any(not o or not c for o, c in self.block_delimiters):
            raise ValueError("block delimiters must be non-empty")


LANGUAGES: dict[str, CommentSyntax] = {
    "python": CommentSyntax("python", ("#",)),
    "r": CommentSyntax("r", ("#",)),
    "matlab": CommentSyntax("matlab", ("%",), (("%{", "%}"),)),
    "generic": CommentSyntax("generic", ("#",)),
}

EXTENSION_LANGUAGES: dict[str, str] = {
    ".py": "python",
    ".r": "r",
    ".m": "matlab",
}


def detect_language(path: str | Path, override: str | None = None) -> CommentSyntax:
    """Pick the comment syntax for a script, by override or file extension."""
    if override is not None:
        syntax = LANGUAGES.get(override.lower())
        if syntax is None:
            known = ", ".join(sorted(LANGUAGES))
            raise UnknownLanguage(
                f"unknown language {override!r} (expected one of: {known})",
                file=str(path),
            )
        return syntax
    ext = Path(path).suffix.lower()
    lang = EXTENSION_LANGUAGES.get(ext)
    if lang is None:
        raise UnknownLanguage(
            f"cannot infer language from {str(path)!r}; pass an explicit language",
            file=str(path),
        )
    return LANGUAGES[lang]


@dataclass(frozen=True)
class SourceComment:
    """One comment's text with its location; markers already stripped."""

    text: str
    file: str
    start_line: int
    end_line: int


@dataclass(frozen=True)
class CommentSpan:
    """Raw character span of one comment within the source string.

    ``start``/``end`` cover the whole comment including its markers;
    ``inner_start``/``inner_end`` cover just the text between them.
    """

    kind: str  # "line" | "block"
    start: int
    end: int
    inner_start: int
    inner_end: int
    start_line: int
    end_line: int


def scan_comment_spans(
    source: str, syntax: CommentSyntax, file: str = "<source>"
) -> list[CommentSpan]:
    """Locate every comment span in ``source``, in document order.

    The scan tracks one piece of state at a time: inside a string, inside a
    comment, or in plain code. Block delimiters are matched before line
    markers so that a block opener sharing a prefix with a line marker
    (e.g. ``%{`` vs ``%``) wins.
    """
    spans: list[CommentSpan] = []
    opens = sorted(syntax.block_delimiters, key=lambda pair: -len(pair[0]))
    markers = sorted(syntax.line_markers, key=len, reverse=True)
    n = len(source)
    i = 0
    line = 1
    in_string: str | None = None
    while i < n:
        ch = source[i]
        if in_string is not None:
            if ch == "\\" and i + 1 < n and source[i + 1] != "\n":
                i += 2
                continue
            if ch == in_string:
                in_string = None
            elif ch == "\n":
                # Strings are assumed single-line; give up at end of line so a
                # stray quote cannot swallow the rest of the file.
                in_string = None
                line += 1
            i += 1
            continue
        hit_block = next((pair for pair in opens if source.startswith(pair[0], i)), None)
        if hit_block is not None:
            opener, closer = hit_block
            open_line = line
            close_at = source.find(closer, i + len(opener))
            if close_at < 0:
                raise UnterminatedBlockComment(
                    f"block comment opened with {opener!r} is never closed",
                    file=file,
                    line=open_line,
                )
            inner = source[i + len(opener) : close_at]
            line += inner.count("\n")
            end = close_at + len(closer)
            spans.append(
                CommentSpan("block", i, end, i + len(opener), close_at, open_line, line)
            )
            line += source[close_at:end].count("\n")
            i = end
            continue
        hit_marker = next((m for m in markers if source.startswith(m, i)), None)
        if hit_marker is not None:
            eol = source.find("\n", i)
            if eol < 0:
                eol = n
            spans.append(CommentSpan("line", i, eol, i + len(hit_marker), eol, line, line))
            i = eol
            continue
        if ch in syntax.string_quotes:
            in_string = ch
        elif ch == "\n":
            line += 1
        i += 1
    return spans


def extract_comments(
    source: str, syntax: CommentSyntax, file: str = "<source>"
) -> list[SourceComment]:
    """Return every comment in ``source`` in document order.

    A block comment yields one SourceComment per non-blank enclosed line, so
    annotations written inside block comments keep distinct line numbers.
    Blank comments are dropped.
    """
    comments: list[SourceComment] = []
    for span in scan_comment_spans(source, syntax, file=file):
        inner = source[span.inner_start : span.inner_end]
        if span.kind == "line":
            text = inner.strip()
            if text:
                comments.append(SourceComment(text, file, span.start_line, span.start_line))
        else:
            for offset, piece in enumerate(inner.split("\n")):
                text = piece.strip()
                if text:
                    lineno = span.start_line + offset
                    comments.append(SourceComment(text, file, lineno, lineno))
    return comments


def strip_comments(source: str, syntax: CommentSyntax, file: str = "<source>") -> str:
    """Blank out every comment, preserving line structure exactly."""
    chars = list(source)
    for span in scan_comment_spans(source, syntax, file=file):
        for idx in range(span.start, span.end):
            if chars[idx] != "\n":
                chars[idx] = " "
    return "".join(chars)


def dump_comments(comments: Iterable[SourceComment]) -> str:
    """Debug listing: one ``FILE:LINE:TEXT`` line per comment."""
    return "\n".join(f"{c.file}:{c.start_line}:{c.text}" for c in comments)
