import os

import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DATA = os.path.join(ROOT, "data")
FIXTURES = os.path.join(ROOT, "tests", "fixtures")

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion covered by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, text = marker.args
    entry = _criteria.setdefault(number, {"text": text, "ok": True, "seen": False})
    if report.when == "call":
        entry["seen"] = True
    if report.failed:
        entry["ok"] = False
    elif report.skipped:
        entry["seen"] = True
        entry["ok"] = None


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        status = "SKIP" if entry["ok"] is None else ("PASS" if entry["ok"] and entry["seen"] else "FAIL")
        detail = f"  [{entry['detail']}]" if entry.get("detail") else ""
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {entry['text']}{detail}")


@pytest.fixture
def measured(request):
    """Attach measured values to the acceptance summary line of this test's criterion."""
    marker = request.node.get_closest_marker("criterion")

    def note(text):
        number, label = marker.args
        entry = _criteria.setdefault(number, {"text": label, "ok": True, "seen": False})
        entry["detail"] = f"{entry['detail']}; {text}" if entry.get("detail") else text

    return note


@pytest.fixture
def fixture_corpus():
    return os.path.join(FIXTURES, "corpus-100k.txt")
