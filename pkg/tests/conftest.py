import numpy as np
import pytest

from latticeforge import catalog


@pytest.fixture(scope="session")
def cells():
    return {name: catalog.make(name) for name in catalog.names()}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# criterion number -> verdict line, filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
