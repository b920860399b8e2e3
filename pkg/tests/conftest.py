import numpy as np
import pytest
from hypothesis import settings

from rpknn import generate_synthetic
from rpknn._kernels import warmup

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session", autouse=True)
def _compiled_kernels():
    warmup()


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def blobs():
    """2000 x 100 labelled blobs shared by several modules."""
    return generate_synthetic(2000, 100, 8, 0.6, 17)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
