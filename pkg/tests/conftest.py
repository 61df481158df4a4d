import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_ACCEPTANCE: dict[int, list[str]] = {}


def record(criterion: int, ok: bool, detail: str) -> bool:
    """Log one acceptance check for the end-of-run summary and return ``ok``."""
    _ACCEPTANCE.setdefault(criterion, []).append(f"{'PASS' if ok else 'FAIL'}  {detail}")
    return ok


@pytest.fixture
def acceptance():
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        lines = _ACCEPTANCE[k]
        verdict = "PASS" if all(s.startswith("PASS") for s in lines) else "FAIL"
        terminalreporter.write_line(f"criterion {k:>2}: {verdict}")
        for s in lines:
            terminalreporter.write_line(f"    {s}")
