import math

import numpy as np
import pytest

from collapse_walk.state import BasisRotation, EntangledState


@pytest.fixture
def singlet():
    s = 1 / math.sqrt(2)
    return EntangledState((2, 2), (("x", "y"), ("x", "y")), np.array([0.0, s, -s, 0.0]))


@pytest.fixture
def probe_u():
    """Wing-1 basis with |gamma|^2 = 0.2."""
    return BasisRotation.from_coefficients(0, math.sqrt(0.2), math.sqrt(0.8), ("u", "v"))


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
