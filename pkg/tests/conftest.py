import os
from pathlib import Path

import pytest

from uavnetsim.experiment import Runner

# acceptance outcome lines, printed again at the end of the session
REPORT: list[str] = []


@pytest.fixture(scope="session")
def report():
    return REPORT


@pytest.fixture(scope="session")
def runner(tmp_path_factory):
    """Shared run cache so overlapping criteria reuse identical runs."""
    cache = os.environ.get("UAVNETSIM_ACCEPT_CACHE")
    path = Path(cache) if cache else tmp_path_factory.mktemp("acceptance")
    return Runner(path, jobs=int(os.environ.get("UAVNETSIM_JOBS", "1")))


def pytest_terminal_summary(terminalreporter):
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
