import json
from pathlib import Path

import numpy as np
import pytest

from pbrkit.dataio import toy_fixture

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def toy():
    return toy_fixture()


@pytest.fixture
def witnesses():
    return json.loads((FIXTURES / "semimetric_witnesses.json").read_text())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class CriterionChecks:
    """Soft assertions for one acceptance criterion, summarized in one line."""

    def __init__(self, number, title):
        self.number = number
        self.title = title
        self.failures = []
        self.count = 0
        self.finished = False
        self.note = ""

    def check(self, ok, description):
        self.count += 1
        if not ok:
            self.failures.append(description)

    @property
    def passed(self):
        return self.finished and not self.failures

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        if not self.finished:
            detail = f"raised before completing ({self.count} checks run)"
        else:
            detail = f"{self.count} checks" if self.passed else "; ".join(self.failures)
        note = f" ({self.note})" if self.note else ""
        return f"criterion {self.number} [{status}] {self.title}: {detail}{note}"

    def finish(self):
        self.finished = True
        assert self.passed, self.line()


_CRITERIA = []


@pytest.fixture
def criterion():
    def make(number, title):
        c = CriterionChecks(number, title)
        _CRITERIA.append(c)
        return c
    return make


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(_CRITERIA, key=lambda c: c.number):
        terminalreporter.write_line(c.line())
