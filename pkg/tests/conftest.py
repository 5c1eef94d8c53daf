import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

# criterion name -> (all passed so far, measured notes)
_CRITERIA: dict[str, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion this test belongs to")


@pytest.fixture
def measured(request):
    """Append a short ``key=value`` note that is echoed next to the criterion verdict."""
    def note(text):
        request.node.user_properties.append(("measured", text))
    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    entry = _CRITERIA.setdefault(mark.args[0], [True, []])
    entry[0] = entry[0] and rep.passed
    entry[1].extend(v for k, v in item.user_properties if k == "measured")
    if not rep.passed:
        entry[1].append(f"{item.name} failed")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, notes) in _CRITERIA.items():
        detail = f"  [{'; '.join(dict.fromkeys(notes))}]" if notes else ""
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}{detail}")
