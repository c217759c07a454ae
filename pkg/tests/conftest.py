import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bogoliubov import PotentialSpec, State, build_grid, build_kernel, minimize  # noqa: E402

REFERENCE_ENERGY = -0.5035276920839654


@pytest.fixture(scope="session")
def gaussian():
    return PotentialSpec.gaussian(1.0, 1.0)


@pytest.fixture(scope="session")
def ref_kernel(gaussian):
    return build_kernel(build_grid(1024, 12.0, "clustered", 1.0), gaussian)


@pytest.fixture(scope="session")
def small_kernel(gaussian):
    return build_kernel(build_grid(256, 12.0, "clustered", 1.0), gaussian)


@pytest.fixture(scope="session")
def ref_report(ref_kernel):
    return minimize(ref_kernel, 1.0)


def random_state(rng, grid, pure=False, scale=None):
    """Valid state with smooth decaying occupation and a random admissible pairing."""
    p = grid.nodes
    scale = rng.uniform(0.1, 5.0) if scale is None else scale
    width = rng.uniform(0.5, 2.0)
    bumps = 1.0 + 0.5 * np.sin(rng.uniform(0.5, 3.0) * p + rng.uniform(0, 2 * math.pi))
    gamma = scale * bumps * np.exp(-(p / width) ** 2)
    bound = np.sqrt(gamma * gamma + gamma)
    if pure:
        alpha = -bound * np.sign(rng.uniform(-0.3, 1.0))
    else:
        alpha = bound * rng.uniform(-1.0, 0.6, size=p.size)
    return State(gamma, alpha, rng.uniform(0.0, 2.0))


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
