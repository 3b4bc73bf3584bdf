import numpy as np
import pytest

from mbo.optimizers.base import prepare
from mbo.tasks import build_dataset, make_toy_quadratic


@pytest.fixture(scope="session")
def toy_task():
    return make_toy_quadratic()


@pytest.fixture(scope="session")
def toy_dataset(toy_task):
    return build_dataset(toy_task, 0)


@pytest.fixture(scope="session")
def toy_normalized(toy_task, toy_dataset):
    p = prepare(toy_dataset, toy_task.space)
    return p.x, p.y


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary ------------------------------------------------------------

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): an acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, text = mark.args
    if report.when == "call" or (report.when == "setup" and report.failed):
        _CRITERIA[number] = (text, "PASS" if report.passed else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        text, status = _CRITERIA[number]
        terminalreporter.write_line(f"{status}  {number}. {text}")
