import numpy as np
import pytest

from astgin.nncore import set_checked, set_default_dtype


@pytest.fixture(autouse=True)
def _checked_float64():
    # tests run in 64-bit with NaN/Inf checks after every op
    set_default_dtype(np.float64)
    set_checked(True)
    yield
    set_checked(False)
    set_default_dtype(np.float64)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    props = dict(item.user_properties)
    verdict = props.pop("verdict", None)
    detail = "; ".join(f"{k}={v}" for k, v in props.items())
    if report.when == "call" or (report.when == "setup" and not report.passed):
        status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        if verdict is not None and report.passed:
            status = verdict
        rank = {"SKIP": 0, "PASS": 1, "FAIL": 2}
        previous = _ACCEPTANCE.get(number)
        if previous is None or rank[status] > rank[previous[1]]:
            _ACCEPTANCE[number] = (title, status, detail)
        elif status == previous[1] and detail:
            _ACCEPTANCE[number] = (title, status, "; ".join(filter(None, [previous[2], detail])))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status, detail = _ACCEPTANCE[number]
        line = f"criterion {number} [{status}] {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
