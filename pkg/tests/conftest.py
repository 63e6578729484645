import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gfbeam.scene import MicrophoneArray, Scene, build_focus_grid

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def small_scene():
    """Eight microphones on a 0.5 m circle, 1 m above an 11 x 11 grid."""
    phi = 2 * np.pi * np.arange(8) / 8
    mics = np.column_stack([0.25 * np.cos(phi), 0.25 * np.sin(phi), np.full(8, 1.0)])
    grid = build_focus_grid((-0.25, -0.25, 0.0), ((1, 0, 0), (0, 1, 0)), (0.5, 0.5), 0.05)
    return Scene(MicrophoneArray(mics), grid, (), 343.0, ())


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = mod.report_lines() if mod is not None else []
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
