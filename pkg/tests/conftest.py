import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dbmd import default_parameters, derive_quantities  # noqa: E402
from oracle import Oracle  # noqa: E402


@pytest.fixture(scope="session")
def params():
    return default_parameters()


@pytest.fixture(scope="session")
def derived(params):
    return derive_quantities(params)


@pytest.fixture(scope="session")
def oracle(params):
    return Oracle(params.flat())


# --- acceptance summary: one PASS/FAIL line per criterion ---------------------

_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config.stash[_RESULTS] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.failed or rep.skipped):
        return
    detail = dict(item.user_properties).get("detail", "")
    item.config.stash[_RESULTS][mark.args[0]] = (mark.args[1], rep.outcome, detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}
    for number in sorted(results):
        title, outcome, detail = results[number]
        line = f"criterion {number:2d}: {status[outcome]}  {title}"
        terminalreporter.write_line(f"{line}  ({detail})" if detail else line)
