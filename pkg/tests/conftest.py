import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_RESULTS: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: acceptance criterion (one line each in the summary)")


@pytest.fixture
def criterion(request):
    """Record a one-line detail for the acceptance summary: ``criterion("...")``."""
    details: list[str] = []
    request.node.user_properties.append(("criterion_detail", details))
    return details.append


def pytest_runtest_logreport(report):
    label = dict(report.user_properties).get("criterion_label")
    if label is None:
        return
    details = dict(report.user_properties).get("criterion_detail") or []
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = "PASS" if report.outcome == "passed" else "FAIL"
        _RESULTS[label] = (status, "; ".join(details))


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark is not None:
            item.user_properties.append(("criterion_label", mark.args[0]))


def _order(label: str) -> tuple[int, str]:
    digits = "".join(ch for ch in label if ch.isdigit())
    return int(digits or 0), label


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_RESULTS, key=_order):
        status, detail = _RESULTS[label]
        line = f"criterion {label}: {status}"
        terminalreporter.write_line(f"{line}  ({detail})" if detail else line)
