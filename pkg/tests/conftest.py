import numpy as np
import pytest

from distsip.graph import build_graph
from distsip.problem import catalog_build


@pytest.fixture(scope="session")
def quad():
    return catalog_build("quad_abs_10")


@pytest.fixture(scope="session")
def meta():
    return catalog_build("meta_control")


@pytest.fixture(scope="session")
def cycle10():
    return build_graph("static-cycle", 10)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


_criteria = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_criteria] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_criteria, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request, capsys):
    """``criterion(name, ok, detail)`` prints a PASS/FAIL line, then asserts ``ok``."""
    def report(name: str, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
        request.config.stash[_criteria].append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return report
