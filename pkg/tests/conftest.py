from __future__ import annotations

import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from plccov.depmodel import build_model
from plccov.frontend import parse_project
from plccov.manifest import load_manifest

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

FIXTURES = Path(__file__).parent / "fixtures"
DEMO_DIR = Path(__file__).resolve().parents[1] / "src" / "plccov" / "demo"


def project_from(text: str, name: str = "t.st", tasks=()):
    return parse_project([(name, text)], tasks)


@pytest.fixture(scope="session")
def signfb_text() -> str:
    return (FIXTURES / "signfb" / "signfb.st").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def signfb_project(signfb_text):
    return project_from(signfb_text, "signfb.st")


@pytest.fixture(scope="session")
def signfb_model(signfb_project):
    return build_model(signfb_project)


@pytest.fixture(scope="session")
def demo_manifest():
    return load_manifest(DEMO_DIR / "demo.ini")


@pytest.fixture(scope="session")
def demo_project(demo_manifest):
    return demo_manifest.load_project()


@pytest.fixture
def demo_copy(tmp_path):
    """Fresh copy of the demo project; returns the manifest path."""
    from plccov.cli import main

    assert main(["demo", str(tmp_path / "demo")]) == 0
    return tmp_path / "demo" / "demo.ini"
