import numpy as np
import pytest

from ovseg import ImageTensor, SaliencyMap


class ArraySaliency:
    """Test provider serving one fixed array."""

    nearest = False

    def __init__(self, arr):
        self.arr = np.asarray(arr, dtype=np.float64)

    def raw_map(self, image_key=None, image=None):
        return SaliencyMap(self.arr)


def random_image(rng, h, w):
    return ImageTensor(rng.random((h, w, 3)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one verdict line per acceptance criterion, collected by _announce in
# test_acceptance.py; emitted after capture ends so they always reach
# the real stdout
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
