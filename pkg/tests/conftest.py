"""Acceptance bookkeeping: one PASS/FAIL line per criterion after the run."""

import pytest

_results = {}
_notes = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    entry = _results.setdefault(number, {"title": title, "passed": 0, "failed": []})
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        if call.excinfo is None:
            entry["passed"] += 1
        else:
            entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_results):
        entry = _results[number]
        status = "FAIL" if entry["failed"] else "PASS"
        line = f"criterion {number:>2}: {status}  {entry['title']}"
        if entry["failed"]:
            line += f"  (failed: {', '.join(entry['failed'])})"
        tr.write_line(line)
        for note in _notes.get(number, []):
            tr.write_line(f"    {note}")


@pytest.fixture
def report(request):
    """Record a measured value to show under the criterion's summary line."""
    mark = request.node.get_closest_marker("criterion")
    number = mark.args[0] if mark else None

    def emit(text):
        _notes.setdefault(number, []).append(f"{request.node.name}: {text}")
    return emit
