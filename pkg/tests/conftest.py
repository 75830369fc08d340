import numpy as np
import pytest

from fracpath.core_paths import SampledPath


@pytest.fixture
def step_path():
    """Unit jump at 0.5 on [0, 1]."""
    return SampledPath(1.0, np.array([0.0, 0.5]), np.array([0.0, 1.0]))


def random_step_path(rng, n_jumps=8, T=1.0):
    times = np.sort(rng.uniform(0.0, T, n_jumps))
    return SampledPath.from_jumps(T, rng.normal(), times, rng.normal(size=n_jumps))


# ---------------------------------------------------------------------------
# Acceptance summary lines
# ---------------------------------------------------------------------------

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
