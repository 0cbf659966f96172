import pytest

_ACCEPTANCE: list[tuple[int, str, str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    number, title = marker.args
    detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    _ACCEPTANCE.append((number, title, "PASS" if rep.passed else "FAIL", detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, verdict, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"{verdict}  [{number:2d}] {title}" + (f"  ({detail})" if detail else ""))
