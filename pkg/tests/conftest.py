import pytest

_ACCEPTANCE: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion checked by this test")


@pytest.fixture
def acceptance_detail(request):
    """Lets an acceptance test attach the measured values to its summary line."""
    marker = request.node.get_closest_marker("acceptance")
    entry = _ACCEPTANCE.setdefault(marker.args[0], {"title": marker.args[1], "detail": [], "outcome": None})
    return entry["detail"].append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    entry = _ACCEPTANCE.setdefault(marker.args[0], {"title": marker.args[1], "detail": [], "outcome": None})
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        passed = rep.passed and entry["outcome"] is not False
        entry["outcome"] = passed


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        entry = _ACCEPTANCE[number]
        status = {True: "PASS", False: "FAIL", None: "NOT RUN"}[entry["outcome"]]
        detail = "; ".join(entry["detail"])
        terminalreporter.write_line(f"[{status}] {number}. {entry['title']}" + (f" -- {detail}" if detail else ""))
