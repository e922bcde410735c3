import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("xsep", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("xsep")


@pytest.fixture
def rng():
    from xsep.tensor import Rng
    return Rng(1234)


def rel_dev(a, b):
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))) / scale)


# Acceptance tests append "criterion N: PASS|FAIL ..." lines here; they are
# echoed in the terminal summary so they show up without -s.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
