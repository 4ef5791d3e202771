import numpy as np
import pytest
from hypothesis import settings

from hsdelay.data import Data, history, normalize, sine_modes

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")

# filled by test_acceptance, printed at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def smooth_data(p, grid, norm=None):
    """Three-mode windowed data with a sine history; optionally rescaled to an H-norm."""
    d = Data(sine_modes(grid, [1.0, 0.5, 0.25]), sine_modes(grid, [0.5, -0.3]), history("sine", [1.0, 1.0]))
    return normalize(p, grid, d, norm) if norm else d


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def rng():
    return np.random.default_rng(7)
