"""Acceptance bookkeeping: one recorded PASS/FAIL line per criterion.

Tests in test_acceptance.py evaluate each criterion inside a callable and
hand it to the `acceptance` fixture; the terminal summary then prints one
line per criterion regardless of how the rest of the run went.
"""

import pytest

ACCEPTANCE_RESULTS = []


@pytest.fixture
def acceptance():
    def record(label, check):
        try:
            ok, detail = check()
        except Exception as exc:  # a crash is a failed criterion, not silence
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        ACCEPTANCE_RESULTS.append((label, bool(ok), detail))
        assert ok, f"{label}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in ACCEPTANCE_RESULTS:
        status = "PASS" if ok else "FAIL"
        suffix = f"  [{detail}]" if detail else ""
        terminalreporter.write_line(f"{status}  {label}{suffix}")
