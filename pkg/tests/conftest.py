import os

from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("ci", deadline=None, max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


import pytest

_ACCEPTANCE = []


@pytest.fixture
def acceptance_report():
    """Record one PASS/FAIL line per acceptance criterion (also echoed to stdout)."""

    def record(num, name, passed, detail, seconds, budget):
        ok = passed and seconds <= budget
        line = (f"criterion {num:>2} {'PASS' if ok else 'FAIL'}  {name}: {detail}"
                f"  [{seconds:.1f}s of {budget:.0f}s budget]")
        _ACCEPTANCE.append((num, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
