import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from almostint.basis import BasisConfig, build_layer  # noqa: E402


@pytest.fixture(scope="session")
def layer1():
    """Faithful layer 1 for rho(k) = 1/(k+2) (about 10 s, shared)."""
    return build_layer(1, None, "one_over_k_plus_2", BasisConfig())


@pytest.fixture(scope="session")
def layer1_relaxed():
    return build_layer(1, None, "one_over_k_plus_2", BasisConfig(relaxation=2.0))


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
