import os
from pathlib import Path

import numpy as np
import pytest

from sparsedan.mnist import TEST_FILES, TRAIN_FILES

_FALLBACK_DATA = Path("/root/data/mnist")


def mnist_dir():
    env = os.environ.get("DAN_DATA_DIR")
    candidates = [Path(env)] if env else []
    candidates.append(_FALLBACK_DATA)
    for d in candidates:
        if all((d / f).exists() for f in TRAIN_FILES + TEST_FILES):
            return d
    return None


@pytest.fixture
def np_rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def data_dir():
    d = mnist_dir()
    if d is None:
        pytest.skip("MNIST IDX files not found; set DAN_DATA_DIR")
    return d


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "SCORECARD", [])
    if lines:
        terminalreporter.section("acceptance scorecard")
        for line in lines:
            terminalreporter.write_line(line)
