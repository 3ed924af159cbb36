"""Collects acceptance outcomes and prints one line per criterion at the end of the run."""

from collections import defaultdict

import pytest

ACCEPTANCE = defaultdict(list)


@pytest.fixture
def record():
    """``record(n, ok, detail)`` notes one check of acceptance criterion ``n``."""

    def _record(n, ok, detail):
        ACCEPTANCE[n].append((bool(ok), detail))
        return bool(ok)

    return _record


def _criterion(item_name: str) -> int:
    # test_<n>_... for criteria 1 to 7; the property class is criterion 8
    parts = item_name.split("_")
    return int(parts[1]) if len(parts) > 1 and parts[1].isdigit() else 8


def pytest_runtest_logreport(report):
    if report.when == "call" and report.failed and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        ACCEPTANCE[_criterion(name)].append((False, f"{name} failed"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[n]
        status = "PASS" if all(ok for ok, _ in checks) else "FAIL"
        detail = "; ".join(("" if ok else "[failed] ") + d for ok, d in checks)
        terminalreporter.write_line(f"criterion {n}: {status}  {detail}")
