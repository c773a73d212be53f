"""Reading and writing IEC 61131-3 Structured Text plus the textual SFC notation."""

from __future__ import annotations

from collections.abc import Iterable, Sequence

from .ast import SourceLoc, SourceProject, TaskDecl
from .errors import DuplicateError, FrontendError, ParseError, RecursionError_, ResolveError
from .parser import parse_expression, parse_file
from .printer import format_expr, pretty_print
from .resolve import Symbols, resolve

__all__ = [
    "DuplicateError",
    "FrontendError",
    "ParseError",
    "RecursionError_",
    "ResolveError",
    "SourceLoc",
    "SourceProject",
    "Symbols",
    "format_expr",
    "parse_expression",
    "parse_project",
    "pretty_print",
]


def parse_project(
    sources: Sequence[tuple[str, str]], tasks: Iterable[TaskDecl] = ()
) -> SourceProject:
    """Parse and resolve a set of ``(path, text)`` files.

    ``tasks`` adds task declarations that live outside the sources, e.g. in a
    project manifest; they are appended after any ``TASK`` declared in text.
    """
    if not sources:
        raise ValueError("parse_project needs at least one source file")
    pous, globals_, file_tasks = [], [], []
    for path, text in sources:
        p, g, t = parse_file(text, path)
        pous += p
        globals_ += g
        file_tasks += t
    project = SourceProject(
        pous=tuple(pous),
        tasks=tuple(file_tasks) + tuple(tasks),
        global_vars=tuple(globals_),
        files=tuple((path, text) for path, text in sources),
    )
    resolve(project)
    return project
