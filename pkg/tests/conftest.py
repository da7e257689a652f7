from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from spotformer.framing import FrameGrid
from spotformer.scene import default_scene
from spotformer.spotformer import Spotformer

settings.register_profile("ci", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")

SMALL_GRID = FrameGrid(frame_len=32, pad_len=32, hop=16, sample_rate=16000)


@pytest.fixture(scope="session")
def scene():
    return default_scene(seed=0)


@pytest.fixture(scope="session")
def small_spot(scene):
    """Default scene on a short frame grid; cheap enough for per-test solves."""
    return Spotformer(scene, grid=SMALL_GRID, orders=(24, 48, 12))


@pytest.fixture(scope="session")
def full_spot(scene):
    return Spotformer(scene)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def report(request):
    """Record one acceptance line; printed in the terminal summary."""
    lines = request.config.acceptance_lines

    def _report(name: str, ok: bool, detail: str):
        lines.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        return ok

    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if config.acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in config.acceptance_lines:
            terminalreporter.write_line(line)
