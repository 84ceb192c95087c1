import time

import pytest

_RESULTS = {}


class Criterion:
    """Collects the checks of one acceptance criterion and records a verdict."""

    def __init__(self, number, title, limit_s):
        self.number, self.title, self.limit_s = number, title, limit_s
        self.failures, self.notes = [], []

    def check(self, ok, message):
        if not ok:
            self.failures.append(message)
        return ok

    def note(self, message):
        self.notes.append(message)

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.start
        if exc is not None:
            self.failures.append(f"{exc_type.__name__}: {exc}")
        self.check(elapsed < self.limit_s, f"runtime {elapsed:.0f}s exceeds {self.limit_s:.0f}s")
        verdict = "FAIL" if self.failures else "PASS"
        detail = "; ".join(self.failures + self.notes)
        line = f"{verdict} criterion {self.number}: {self.title} ({elapsed:.1f}s)" + (f" - {detail}" if detail else "")
        _RESULTS[self.number] = line
        print(line)
        if exc is None and self.failures:
            raise AssertionError(line)
        return False


@pytest.fixture
def acceptance():
    return Criterion


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_RESULTS):
            terminalreporter.write_line(_RESULTS[number])
