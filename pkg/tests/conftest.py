import numpy as np
import pytest

# One line per acceptance criterion, printed after the run.
_ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


class Criterion:
    def __init__(self, number, title):
        self.number = number
        self.title = title
        self.done = False

    def check(self, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {self.number}: {self.title} ({detail})"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        self.done = True
        assert ok, line


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("criterion")
    rec = Criterion(*marker.args)
    yield rec
    if not rec.done:
        _ACCEPTANCE_LINES.append(f"FAIL criterion {rec.number}: {rec.title} (did not complete)")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion reported in the summary")


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
