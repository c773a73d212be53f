from __future__ import annotations

from .ast import SourceLoc


class FrontendError(Exception):
    """Base class for every diagnostic raised while reading a project."""

    def __init__(self, message: str, loc: SourceLoc | None = None):
        self.message = message
        self.loc = loc
        super().__init__(f"{loc}: {message}" if loc else message)


class ParseError(FrontendError):
    pass


class ResolveError(FrontendError):
    """Unbound identifier, bad call target or other semantic violation."""


class DuplicateError(ResolveError):
    pass


class RecursionError_(ResolveError):
    """A POU (or action) appears in its own call chain."""
