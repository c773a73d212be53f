"""Project manifest: an INI file listing sources, tasks, output directory and options.

    [project]
    sources = globals.st, main.st
    output = out
    suite = suite.xml
    no_reinit = false
    interactive_manual = false

    [task Control]
    cycle_time = 10
    priority = 1
    entry = Main

Relative paths are taken relative to the manifest's directory.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .frontend import parse_project
from .frontend.ast import SourceLoc, SourceProject, TaskDecl
from .frontend.lexer import parse_time


class ManifestError(Exception):
    pass


@dataclass(frozen=True)
class ProjectManifest:
    path: Path
    sources: tuple[Path, ...]
    tasks: tuple[TaskDecl, ...]
    output: Path
    suite: Path | None = None
    no_reinit: bool = False
    interactive_manual: bool = False
    extra_suites: tuple[Path, ...] = field(default=())

    @property
    def root(self) -> Path:
        return self.path.parent

    def source_texts(self) -> list[tuple[str, str]]:
        """``(name, text)`` pairs; names are relative to the manifest directory."""
        return [(_rel(p, self.root), p.read_text(encoding="utf-8")) for p in self.sources]

    def load_project(self) -> SourceProject:
        project = parse_project(self.source_texts(), self.tasks)
        if not project.tasks:
            raise ManifestError("the project declares no task")
        return project

    @property
    def instrumented_dir(self) -> Path:
        return self.output / "instrumented"

    @property
    def database_path(self) -> Path:
        return self.output / "tracepoints.xml"


def _rel(p: Path, root: Path) -> str:
    try:
        return p.relative_to(root).as_posix()
    except ValueError:
        return p.as_posix()


def _split(value: str) -> list[str]:
    return [v.strip() for chunk in value.splitlines() for v in chunk.split(",") if v.strip()]


def _time_ms(text: str) -> int:
    t = text.strip()
    return parse_time(t) if t.upper().startswith(("T#", "TIME#")) else int(t)


def load_manifest(path) -> ProjectManifest:
    path = Path(path).resolve()
    if not path.is_file():
        raise ManifestError(f"manifest {path} not found")
    cp = configparser.ConfigParser()
    try:
        cp.read_string(path.read_text(encoding="utf-8"), source=str(path))
    except configparser.Error as exc:
        raise ManifestError(str(exc)) from None
    if not cp.has_section("project"):
        raise ManifestError("manifest lacks a [project] section")
    proj = cp["project"]
    root = path.parent
    sources = tuple(root / s for s in _split(proj.get("sources", "")))
    if not sources:
        raise ManifestError("manifest lists no sources")
    for s in sources:
        if not s.is_file():
            raise ManifestError(f"source file {s} not found")
    tasks = []
    for section in cp.sections():
        if not section.lower().startswith("task "):
            continue
        name = section[5:].strip()
        sec = cp[section]
        try:
            tasks.append(
                TaskDecl(name, _time_ms(sec["cycle_time"]), int(sec.get("priority", len(tasks) + 1)), sec["entry"],
                         SourceLoc(_rel(path, root), 0, 0))
            )  # fmt: skip
        except (KeyError, ValueError) as exc:
            raise ManifestError(f"[{section}]: bad or missing key {exc}") from None
    try:
        opts = dict(
            no_reinit=proj.getboolean("no_reinit", False),
            interactive_manual=proj.getboolean("interactive_manual", False),
        )
    except ValueError as exc:
        raise ManifestError(str(exc)) from None
    suite = root / proj["suite"] if proj.get("suite") else None
    extra = tuple(root / s for s in _split(proj.get("extra_suites", "")))
    return ProjectManifest(path, sources, tuple(tasks), root / proj.get("output", "out"), suite, extra_suites=extra, **opts)
