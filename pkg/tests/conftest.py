from __future__ import annotations

import pytest

from aflow.inference import ReferenceStore, bundled_references_dir, stub_embedding
from aflow.registry import bundled_catalog


@pytest.fixture(scope="session")
def registry():
    return bundled_catalog()


@pytest.fixture(scope="session")
def store(registry):
    return ReferenceStore.load(bundled_references_dir(), stub_embedding, registry)


@pytest.fixture(scope="session")
def goldens(store):
    """Every bundled reference workflow, keyed by name."""
    return {e.name: e.workflow for e in store}


@pytest.fixture
def blend(goldens):
    return goldens["blend_images"].copy()


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import VERDICTS

    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
