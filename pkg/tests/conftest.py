import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import ACCEPTANCE_LINES  # noqa: E402
from qrdeim_pinn._kernels import tune_allocator  # noqa: E402

tune_allocator()


@pytest.fixture(scope="session", autouse=True)
def reference_cache(tmp_path_factory):
    """Keep reference grids out of the user cache unless one is configured."""
    if "QRDEIM_PINN_CACHE" not in os.environ:
        os.environ["QRDEIM_PINN_CACHE"] = str(tmp_path_factory.mktemp("refcache"))
    return Path(os.environ["QRDEIM_PINN_CACHE"])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
